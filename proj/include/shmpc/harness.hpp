#pragma once
// Closed-loop experiment harness: scene configs, the 20 Hz simulator,
// Monte-Carlo collision-probability validation, the Gaussian-CDF marginal
// baseline planner, batch experiment runs and parameter sweeps.
//
// A run simulates one robot traversal: obstacle ground truth evolves on the
// planning grid (dt) from the same models the planner samples, is linearly
// interpolated at the 50 ms control instants, and collisions are declared
// when robot and obstacle discs overlap at a control instant. Every plan
// actuated at a grid-aligned step is stored together with the obstacle
// models it was computed from, so its open-loop collision probability can
// be re-estimated afterwards by Monte Carlo and compared against the
// certificate that authorized it.

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "shmpc/obstacles.hpp"
#include "shmpc/planner.hpp"

namespace shmpc {

// ---------------------------------------------------------------- MC CP ---

struct CpEstimate {
  int samples = 0;
  double joint = 0.0;     // fraction of futures with any-disc overlap at any stage
  double joint_se = 0.0;  // binomial standard error
  std::vector<double> marginal;     // per stage 1..N, independent per stage
  std::vector<double> marginal_se;

  double max_marginal() const;
  int max_marginal_stage() const;  // 1-based stage of the maximum, 0 if none
};

// Fraction of obstacle futures (drawn from `models` on the plan's dt grid,
// mc_validation stream) in which any robot disc overlaps any obstacle disc
// at any stage; marginals count each stage independently. OpenMP-parallel
// over futures with order-independent integer tallies.
CpEstimate monte_carlo_cp(const TrajectoryPlan& plan,
                          const std::vector<ObstacleModel>& models,
                          const std::vector<Eigen::Vector2d>& disc_offsets,
                          double robot_radius, int n_mc, uint64_t seed);

// ------------------------------------------------- Gaussian CDF baseline ---

// Halfspace keeping point x away from a Gaussian obstacle at marginal risk
// epsilon_k: with a = (mean - p_hat)/|mean - p_hat| (linearized about p_hat),
//   a.x <= a.mean - r_comb - erfinv(1 - 2 epsilon_k) sqrt(2 a' Sigma a).
// Requires 0 < epsilon_k < 0.5 and Sigma PSD; throws std::domain_error when
// p_hat coincides with mean (the direction is undefined).
Halfspace gaussian_baseline_halfspace(const Eigen::Vector2d& p_hat,
                                      const Eigen::Vector2d& mean,
                                      const Eigen::Matrix2d& Sigma,
                                      double r_comb, double epsilon_k,
                                      int32_t scenario = -1,
                                      int16_t obstacle = -1, int16_t step = -1,
                                      int16_t disc = 0);

// Marginal-baseline planner: same MPC loop, cost, bounds, warm-start shift
// and fallback chain as Planner, but the per-stage constraints are the
// analytic tightened halfspaces above — one per obstacle (and per mixture
// mode while a switching obstacle has not committed), with variance grown
// as sigma_k^2 = k (sigma_w dt)^2. No sampling and no certificate: a step
// is actuated whenever the solve succeeds with no discarded constraints;
// records report certified = false and epsilon_bound = 1.
class GaussianPlanner {
 public:
  GaussianPlanner(PlannerConfig cfg, double epsilon_k);

  StepRecord step(const Eigen::Vector4d& state,
                  const std::vector<ObstacleModel>& obstacles, uint64_t seed);

  const PlannerConfig& config() const { return cfg_; }
  double epsilon_k() const { return eps_k_; }

 private:
  StepRecord plan_step(const Eigen::Vector4d& state,
                       const std::vector<ObstacleModel>& obstacles);

  PlannerConfig cfg_;
  ReferencePath path_;
  UnicycleProgress dynamics_;
  MpccCost cost_;
  double eps_k_;

  std::optional<TrajectoryPlan> warm_;
  std::optional<TrajectoryPlan> accepted_;
  int accepted_stage_ = 0;
  double grid_accum_ = 0.0;
  double time_ = 0.0;
  double last_v_ = 0.0;
};

// ------------------------------------------------------------- config -----

enum class PlanMethod { scenario, gaussian };

struct ExperimentConfig {
  std::string name = "scene";
  PlanMethod method = PlanMethod::scenario;
  double baseline_epsilon_k = 0.0025;  // gaussian method: per-stage risk
  PlannerConfig planner;
  std::vector<ObstacleModel> obstacles;
  int repetitions = 20;
  uint64_t master_seed = 1;
  int n_mc = 10'000;        // validation futures per stored plan
  double time_cap = 30.0;   // simulated seconds before a run is cut off
  double goal_tolerance = 0.3;  // reached when path progress >= L - tol
  std::string output_dir;   // empty: keep results in memory only

  void validate() const;
  std::string method_label() const;
};

std::string to_json_string(const ExperimentConfig& cfg, int indent = 2);
ExperimentConfig experiment_from_json(const std::string& text);

// Bundled scenes (desk-scale stand-ins for the published experiments).
ExperimentConfig static_scene();  // one noisy static pedestrian on the path
ExperimentConfig gauss4_scene();  // 4 constant-velocity pedestrians
ExperimentConfig gauss8_scene();  // 8 constant-velocity pedestrians
ExperimentConfig gmm8_scene();    // 8 pedestrians that may start crossing
std::vector<std::string> preset_names();
ExperimentConfig preset_scene(const std::string& name);

// --------------------------------------------------------------- results --

struct StoredPlan {
  int rep = 0;
  double time = 0.0;
  TrajectoryPlan plan;
  std::vector<ObstacleModel> models;  // exactly as passed to the planner
  double epsilon_bound = 1.0;
  int support = 0;
  bool certified = false;
  // filled by validation:
  CpEstimate cp;
  bool validated = false;
};

struct RunResult {
  int rep = 0;
  uint64_t seed = 0;
  std::vector<StepRecord> steps;
  std::vector<StoredPlan> plans;
  double duration = 0.0;   // sim time at goal, or time_cap when incomplete
  double traveled = 0.0;
  double min_distance = std::numeric_limits<double>::infinity();  // disc gap
  int collision_steps = 0;
  bool collided = false;
  bool completed = false;
  std::string error;  // nonempty when the run aborted

  int planned_steps() const;  // steps actuated from a fresh plan
};

struct SummaryRow {
  std::string method;
  double max_cp_k = 0.0;  // maximum per-stage CP over all validated plans
  double cp_k_spec = -1.0;             // < 0 renders as "-"
  double max_cp = 0.0;                 // maximum joint CP
  double cp_spec = -1.0;
  double dur_mean = 0.0, dur_std = 0.0;
  double trav_mean = 0.0, trav_std = 0.0;
  double mind_mean = 0.0, mind_std = 0.0;
  int collisions = 0;  // runs with at least one disc overlap
  double runtime_mean = 0.0, runtime_max = 0.0;  // control-step wall ms
  int incomplete = 0;  // runs cut off by the time cap or aborted
};

struct SummaryTable {
  std::vector<SummaryRow> rows;
  static std::string csv_header();
  std::string to_csv() const;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<RunResult> runs;
  double max_joint_cp = 0.0;
  double max_joint_cp_se = 0.0;
  double max_marginal_cp = 0.0;
  double max_marginal_cp_se = 0.0;
  // stored plans whose MC joint CP exceeds the certificate that authorized
  // them by more than 3 standard errors (scenario method only)
  int certificate_violations = 0;
  int validated_plans = 0;
  SummaryTable summary;
};

// `repetitions` independent closed-loop runs (parallel across runs, seeds
// derived from master_seed by rep), then MC validation of every stored
// plan. Per-run failures are recorded in RunResult::error, not fatal. When
// config.output_dir is set, writes runs.jsonl (one object per control
// step), plans.jsonl (one object per stored plan, with models) and
// summary.csv into it.
ExperimentResult run_experiment(const ExperimentConfig& config);

// Re-estimate CPs of plans serialized in a plans.jsonl file at a different
// sample count. Returns the validations in file order.
struct PlanCheck {
  int rep = 0;
  double time = 0.0;
  double epsilon_bound = 1.0;
  bool certified = false;
  CpEstimate cp;
  bool violates_certificate = false;
};
std::vector<PlanCheck> validate_plans_file(const std::string& plans_jsonl,
                                           int n_mc, uint64_t seed);

// ---------------------------------------------------------------- sweeps --

struct SweepPoint {
  double value = 0.0;
  int sample_size = 0;
  double max_joint_cp = 0.0;
  double max_marginal_cp = 0.0;
  double mean_duration = 0.0;
  double solve_ms_mean = 0.0;   // optimization time per control step
  double reduce_ms_mean = 0.0;  // free-space polytope construction
  double step_ms_mean = 0.0;
  int collisions = 0;
  int incomplete = 0;
};

// parameter is "epsilon" (re-derives the sample size per value) or
// "horizon". Each point runs max(repetitions, 10) experiments.
std::vector<SweepPoint> sensitivity_sweep(const std::string& parameter,
                                          const std::vector<double>& values,
                                          ExperimentConfig base);
std::string sweep_csv(const std::string& parameter,
                      const std::vector<SweepPoint>& points);

}  // namespace shmpc
