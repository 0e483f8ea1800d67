#pragma once
// Closed-loop scenario MPC for a unicycle tracking a reference path among
// uncertain moving obstacles.
//
// Each control step: sample S joint obstacle trajectories, shift the
// previous plan one stage per elapsed planning period (last stage
// duplicated), project it into the per-stage free polytopes, linearize one
// collision halfspace per (scenario, obstacle, stage, disc) about the
// projected plan, and solve the scenario program. When the support-based
// certificate holds, the plan's first input is actuated and the plan is
// retained; otherwise the most recent certified plan is followed shifted,
// and when none remains the robot brakes at the configured deceleration.

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "shmpc/obstacles.hpp"
#include "shmpc/path.hpp"
#include "shmpc/risk.hpp"
#include "shmpc/solver.hpp"

namespace shmpc {

// Unicycle with path progress: state (x, y, heading, s), input (v, omega).
// p+ = p + v (cos h, sin h) dt; h+ = h + omega dt; s+ = s + v dt.
class UnicycleProgress final : public DynamicsModel {
 public:
  explicit UnicycleProgress(double dt) : dt_(dt) {}
  int nx() const override { return 4; }
  int nu() const override { return 2; }
  Eigen::VectorXd step(const Eigen::VectorXd& x,
                       const Eigen::VectorXd& u) const override;
  void jacobians(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                 Eigen::MatrixXd& A, Eigen::MatrixXd& B) const override;
  int position_index() const override { return 0; }
  int heading_index() const override { return 2; }

 private:
  double dt_;
};

struct MpccWeights {
  double velocity = 0.05;  // (v - v_ref)^2
  double angular = 0.05;   // omega^2
  double contour = 0.001;  // lateral offset from the path point at s
  double lag = 0.1;        // tangential offset from the path point at s
};

// Path-tracking cost: per stage
//   w_c (n.(p - q(s)))^2 + w_l (t.(p - q(s)))^2
//     + w_v (v - v_ref)^2 + w_w omega^2,
// with q/t/n the path point/tangent/normal of the segment containing the
// stage's own progress s. On a fixed segment q(s) is affine in s, so both
// error terms are exactly quadratic in the state and the stage expansions
// returned to the solver are exact (not local approximations).
class MpccCost final : public CostModel {
 public:
  MpccCost(const ReferencePath* path, MpccWeights w, double v_ref)
      : path_(path), w_(w), v_ref_(v_ref) {}

  double value(const Eigen::MatrixXd& X,
               const Eigen::MatrixXd& U) const override;
  void state_quadratic(int k, const Eigen::VectorXd& xk, Eigen::MatrixXd& H,
                       Eigen::VectorXd& g) const override;
  void input_quadratic(int k, const Eigen::VectorXd& uk, Eigen::MatrixXd& H,
                       Eigen::VectorXd& g) const override;

 private:
  const ReferencePath* path_;
  MpccWeights w_;
  double v_ref_;
};

struct PlannerConfig {
  int horizon = 20;
  double dt = 0.2;
  double control_period = 0.05;
  MpccWeights weights;
  std::vector<Eigen::Vector2d> waypoints{{0.0, 0.0}, {25.0, 0.0}};
  double v_ref = 2.0;
  double v_min = 0.0, v_max = 2.0, omega_max = 2.0;
  double brake_decel = 2.0;  // m/s^2, used by the slow-down fallback
  std::vector<Eigen::Vector2d> disc_offsets{Eigen::Vector2d::Zero()};
  double robot_radius = 0.325;
  RiskConfig risk{0.05, 0.01, 9, 1};
  int sample_size = 0;  // 0: derive minimal S from risk
  int max_facets = 20;
  double box_half = 6.0;
  int max_iterations = 25;
  double projection_margin = 1e-4;

  void validate() const;
};

// Moves each infeasible stage position of `prev` into its stage polytope
// with `margin` clearance, leaving feasible stages untouched. First tries a
// translation orthogonal to that stage's motion direction (from x0/previous
// stage); when no orthogonal offset fits, alternating projections onto the
// facets run for at most max_sweeps. Stages whose reduction reported an
// empty interior are skipped (the solver discards the blocking scenarios).
struct ProjectionReport {
  int translated = 0;  // stages fixed by the orthogonal translation
  int swept = 0;       // stages that needed alternating projections
  int unresolved = 0;  // still infeasible after max_sweeps
  int empty = 0;       // stages skipped for an empty polytope
};

TrajectoryPlan project_previous_plan(const TrajectoryPlan& prev,
                                     const Eigen::VectorXd& x0,
                                     std::span<const ReduceResult> stages,
                                     int position_index, double margin = 1e-4,
                                     int max_sweeps = 100,
                                     ProjectionReport* report = nullptr);

enum class StepMode { plan, hold_previous, brake };

// One log record per control step (the planner's external interface).
struct StepRecord {
  double time = 0.0;
  Eigen::Vector4d state = Eigen::Vector4d::Zero();
  Eigen::Vector2d input = Eigen::Vector2d::Zero();  // actuated (v, omega)
  StepMode mode = StepMode::brake;
  SpStatus status = SpStatus::infeasible;
  int support = 0;          // certified total n_hat
  int removed = 0;          // discarded scenarios (budget + conflicts)
  int conflicts = 0;        // unconditionally discarded subset
  double epsilon_bound = 1.0;
  bool certified = false;
  bool shifted = false;     // warm start advanced a stage this step
  ProjectionReport projection;
  TrajectoryPlan plan;      // the solved plan (certified or not)
  double sample_ms = 0.0;   // scenario sampling
  double reduce_ms = 0.0;   // stagewise polytope construction
  double solve_ms = 0.0;    // scenario program solve
  double total_ms = 0.0;
};

class Planner {
 public:
  explicit Planner(PlannerConfig cfg);

  // One 20 Hz control step from `state` = (x, y, heading, s) with obstacle
  // models advanced to their current positions. All randomness derives from
  // `seed`. Never throws: internal failures produce the braking fallback.
  StepRecord step(const Eigen::Vector4d& state,
                  const std::vector<ObstacleModel>& obstacles, uint64_t seed);

  const PlannerConfig& config() const { return cfg_; }
  const ReferencePath& path() const { return path_; }
  int sample_size() const { return S_; }
  // warm start the next step will use (after any pending shift); for tests
  const std::optional<TrajectoryPlan>& warm_start() const { return warm_; }

 private:
  StepRecord plan_step(const Eigen::Vector4d& state,
                       const std::vector<ObstacleModel>& obstacles,
                       uint64_t seed);
  Eigen::Vector2d fallback_input();
  static TrajectoryPlan shift_plan(const TrajectoryPlan& plan);

  PlannerConfig cfg_;
  ReferencePath path_;
  UnicycleProgress dynamics_;
  MpccCost cost_;
  int S_ = 0;

  std::optional<TrajectoryPlan> warm_;
  std::optional<TrajectoryPlan> certified_;
  int certified_stage_ = 0;  // stages of certified_ already consumed
  double grid_accum_ = 0.0;  // control time since the last warm-start shift
  double time_ = 0.0;
  double last_v_ = 0.0;
};

}  // namespace shmpc
