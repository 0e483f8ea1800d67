#pragma once
// Scenario trajectory optimizer.
//
// Solves
//   min  cost(X, U)
//   s.t. x_{k+1} = f(x_k, u_k),  u/x bounds,
//        a.p_d(x_k) <= b   for every scenario halfspace of stage k, disc d,
// by sequential quadratic programming over the stacked variable
// z = [x_1..x_N, u_0..u_{N-1}]. Collision halfspaces are fixed data (each is
// a conservative inner approximation of a disc complement, so satisfying it
// is sufficient regardless of where later iterates move); dynamics are
// re-linearized every iteration.
//
// Per iteration the stage constraint lists are cut to their non-redundant
// facets, the QP is solved with a dual active-set method, and the scenarios
// owning active rows are accumulated into a support estimate. When the
// estimate would exceed `support_limit`, the solve stops and returns the most
// recent fully feasible iterate recorded before the overflow. An optional
// removal budget discards, at convergence, the active scenario with the
// largest multiplier and continues; scenarios whose rows make a stage empty
// or the QP infeasible are discarded unconditionally. Every discarded
// scenario still counts toward the support estimate.

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <vector>

#include "shmpc/geometry.hpp"

namespace shmpc {

class DynamicsModel {
 public:
  virtual ~DynamicsModel() = default;
  virtual int nx() const = 0;
  virtual int nu() const = 0;
  virtual Eigen::VectorXd step(const Eigen::VectorXd& x,
                               const Eigen::VectorXd& u) const = 0;
  virtual void jacobians(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                         Eigen::MatrixXd& A, Eigen::MatrixXd& B) const = 0;
  // index of the (x, y) world position pair inside the state
  virtual int position_index() const { return 0; }
  // index of the heading state, or -1 when the model has none
  virtual int heading_index() const { return -1; }
};

class CostModel {
 public:
  virtual ~CostModel() = default;
  // exact cost of states x_1..x_N (columns of X) and inputs u_0..u_{N-1}
  virtual double value(const Eigen::MatrixXd& X,
                       const Eigen::MatrixXd& U) const = 0;
  // Hessian and gradient of the cost restricted to x_k, at xk (k in 1..N)
  virtual void state_quadratic(int k, const Eigen::VectorXd& xk,
                               Eigen::MatrixXd& H, Eigen::VectorXd& g) const = 0;
  // Hessian and gradient of the cost restricted to u_k, at uk (k in 0..N-1)
  virtual void input_quadratic(int k, const Eigen::VectorXd& uk,
                               Eigen::MatrixXd& H, Eigen::VectorXd& g) const = 0;
};

// Full (unreduced) halfspace list constraining disc `disc` at stage `step`.
struct StageConstraintSet {
  int step = 1;  // stage in 1..N; rows act on x_step
  int disc = 0;  // index into SpProblem::disc_offsets
  std::vector<Halfspace> rows;
};

struct TrajectoryPlan {
  Eigen::MatrixXd X;  // nx x N, states at stages 1..N
  Eigen::MatrixXd U;  // nu x N, inputs at stages 0..N-1
  double dt = 0.1;
};

struct SpBounds {
  Eigen::VectorXd lo, hi;  // elementwise; +-inf disables a side
};

struct SpSettings {
  bool reduce = true;    // cut stage lists to non-redundant facets
  int max_facets = 20;   // facet cap per (stage, disc)
  double box_half = 6.0; // half width of the reduction box around the witness
  int max_iterations = 50;
  double step_tol = 1e-8;
  double defect_tol = 1e-8;
  double active_tol = 1e-6;    // slack threshold for "active"
  double feas_tol = 1e-7;      // full-list margin tolerance for snapshots
  bool track_support = true;   // accumulate support + early termination
  int support_limit = std::numeric_limits<int>::max();
  int removal_budget = 0;      // scenarios removable at convergence
  double reg = 1e-8;           // Hessian regularization
  // Resting proximal weight on |z - z_k|^2 in the QP. The solver escalates
  // it transiently whenever no damping of the QP direction improves the
  // merit (the signature of two near-tied optima) and decays it back on
  // progress; it cancels from the KKT system at any fixed point.
  double prox = 0.0;
};

enum class SpStatus { optimal, early_terminated, infeasible, max_iterations };

struct IterationRecord {
  int iteration = 0;
  double cost = 0.0;
  double defect = 0.0;     // max dynamics violation (inf norm)
  double step_norm = 0.0;  // inf norm of the accepted step
  int qp_iterations = 0;
  std::vector<int32_t> active_scenarios;
  int support_estimate = 0;  // |actives so far  U  removed|
};

struct SolveResult {
  SpStatus status = SpStatus::infeasible;
  TrajectoryPlan plan;
  std::vector<IterationRecord> iterations;
  std::vector<int32_t> support;   // accumulated actives U removed (sorted)
  std::vector<int32_t> removed;   // all discarded scenarios (sorted)
  std::vector<int32_t> conflict;  // subset discarded for emptying a stage/QP
  double solve_ms = 0.0;
  double reduce_ms = 0.0;
  bool truncated = false;  // some facet cap was hit
  double cost = std::numeric_limits<double>::quiet_NaN();
  // The returned plan satisfies the dynamics and every kept constraint row
  // within tolerance. On max_iterations the last feasible iterate is
  // returned when one exists, so a receding-horizon caller can still actuate
  // a suboptimal-but-safe plan (real-time iteration style).
  bool plan_feasible = false;

  bool usable() const {
    return status == SpStatus::optimal || status == SpStatus::early_terminated;
  }
};

struct SpProblem {
  const DynamicsModel* dynamics = nullptr;
  const CostModel* cost = nullptr;
  Eigen::VectorXd x0;
  int N = 0;
  double dt = 0.1;
  SpBounds u_bounds;  // empty = unbounded
  SpBounds x_bounds;  // empty = unbounded
  std::vector<StageConstraintSet> constraints;
  std::vector<Eigen::Vector2d> disc_offsets{Eigen::Vector2d::Zero()};
  Eigen::MatrixXd X0, U0;  // warm start; empty = rollout of zero inputs
  SpSettings settings;
};

SolveResult solve_sp(const SpProblem& problem);

// Exhaustive support oracle: scenario s is in the support when excluding all
// of its rows moves the optimal plan by more than plan_tol (inf norm).
// Runs |scenarios| + 1 full solves; intended for tests and studies.
struct GreedySupportResult {
  std::vector<int32_t> support;
  TrajectoryPlan base_plan;
  double base_cost = 0.0;
  double total_ms = 0.0;   // all solves including the base one
  double base_ms = 0.0;    // the base solve alone
  int solves = 0;
};

GreedySupportResult greedy_support(const SpProblem& problem,
                                   double plan_tol = 1e-6);

}  // namespace shmpc
