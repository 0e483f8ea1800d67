#pragma once
// Small planar study problem: a unicycle hugging y = 0 while a drifting
// obstacle below imposes per-stage clearance floors y_k >= delta_k + r on
// every sampled obstacle trajectory. One obstacle, five stages, parallel
// rows — small enough that the exhaustive greedy support oracle and
// Monte-Carlo risk validation run in bulk. Used by the support-estimation,
// support-speed and removal studies.

#include <cstdint>
#include <memory>
#include <vector>

#include "shmpc/obstacles.hpp"
#include "shmpc/risk.hpp"
#include "shmpc/solver.hpp"

namespace shmpc {

// Unicycle kinematics (x, y, heading), explicit Euler at fixed dt.
class Unicycle3 final : public DynamicsModel {
 public:
  explicit Unicycle3(double dt) : dt_(dt) {}
  int nx() const override { return 3; }
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

struct ToyConfig {
  double epsilon = 0.1;
  double beta = 1e-6;
  int support_limit = 2;    // total, including removed scenarios
  int removal_budget = 0;
  int sample_override = 0;  // 0: size the sample from the risk budget
  uint64_t seed = 1;
  int horizon = 5;
  double dt = 0.2;
  double clearance = 1.0;   // r in y_k >= delta_k + r
};

struct ToyInstance {
  ToyConfig cfg;
  RiskConfig risk;
  int sample_size = 0;
  ObstacleModel obstacle;
  ScenarioSet scenarios;
  std::shared_ptr<const DynamicsModel> dynamics;
  std::shared_ptr<const CostModel> cost;
  SpProblem problem;  // references *dynamics and *cost
};

ToyInstance make_toy(const ToyConfig& cfg);

// Same instance with only the rows of `keep` scenarios; used to check that
// the estimated support reproduces the plan.
SpProblem restrict_to(const ToyInstance& inst,
                      const std::vector<int32_t>& keep);

struct ToyRun {
  SolveResult solve;
  RiskCertificate certificate;
};

ToyRun toy_solve(const ToyConfig& cfg);

// Violation probability of a plan under fresh samples: fraction whose
// clearance floor the plan's y trajectory dips below at any stage.
double toy_empirical_risk(const ToyInstance& inst, const TrajectoryPlan& plan,
                          int mc_samples, uint64_t mc_seed);

struct SupportComparePoint {
  int sample_size = 0;
  int realizations = 0;
  double mean_estimated = 0.0;  // average |support| (actives U removed)
  double mean_greedy = 0.0;
  double subset_fraction = 0.0;  // greedy subset of estimated
  double mean_estimate_ms = 0.0; // one tracked solve
  double mean_greedy_ms = 0.0;   // S+1 solves
  int max_estimated = 0;
};

std::vector<SupportComparePoint> toy_support_compare(
    const std::vector<int>& sample_sizes, int realizations, uint64_t seed);

struct RemovalPoint {
  int removal_budget = 0;
  int sample_size = 0;  // sized for support_limit = base + budget
  int repeats = 0;
  double mean_cost = 0.0;
  double mean_epsilon_bound = 0.0;
  double mean_empirical_risk = 0.0;
  double fraction_certified = 0.0;
  double fraction_within_bound = 0.0;  // empirical <= certificate
};

// base support limit 2 plus the removal budget, per-point sample sizes.
std::vector<RemovalPoint> toy_removal_study(const std::vector<int>& budgets,
                                            int repeats, int mc_samples,
                                            uint64_t seed);

}  // namespace shmpc
