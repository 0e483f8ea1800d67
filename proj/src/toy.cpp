#include "shmpc/toy.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>

#include "shmpc/rng.hpp"

namespace shmpc {

namespace {

// quadratic drive cost: stay near y = 0, cruise at 2 m/s, steer gently
class ToyCost final : public CostModel {
 public:
  double value(const Eigen::MatrixXd& X, const Eigen::MatrixXd& U) const override {
    double c = 0.0;
    for (int k = 0; k < X.cols(); ++k) c += X(1, k) * X(1, k);
    for (int k = 0; k < U.cols(); ++k) {
      const double dv = U(0, k) - 2.0;
      c += dv * dv + U(1, k) * U(1, k);
    }
    return c;
  }
  void state_quadratic(int, const Eigen::VectorXd& xk, Eigen::MatrixXd& H,
                       Eigen::VectorXd& g) const override {
    H = Eigen::Matrix3d::Zero();
    H(1, 1) = 2.0;
    g = Eigen::Vector3d(0.0, 2.0 * xk(1), 0.0);
  }
  void input_quadratic(int, const Eigen::VectorXd& uk, Eigen::MatrixXd& H,
                       Eigen::VectorXd& g) const override {
    H = 2.0 * Eigen::Matrix2d::Identity();
    g = Eigen::Vector2d(2.0 * (uk(0) - 2.0), 2.0 * uk(1));
  }
};

}  // namespace

Eigen::VectorXd Unicycle3::step(const Eigen::VectorXd& x,
                                const Eigen::VectorXd& u) const {
  Eigen::VectorXd n(3);
  n << x(0) + u(0) * std::cos(x(2)) * dt_,
      x(1) + u(0) * std::sin(x(2)) * dt_, x(2) + u(1) * dt_;
  return n;
}

void Unicycle3::jacobians(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                          Eigen::MatrixXd& A, Eigen::MatrixXd& B) const {
  A = Eigen::Matrix3d::Identity();
  A(0, 2) = -u(0) * std::sin(x(2)) * dt_;
  A(1, 2) = u(0) * std::cos(x(2)) * dt_;
  B = Eigen::MatrixXd::Zero(3, 2);
  B(0, 0) = std::cos(x(2)) * dt_;
  B(1, 0) = std::sin(x(2)) * dt_;
  B(2, 1) = dt_;
}

ToyInstance make_toy(const ToyConfig& cfg) {
  ToyInstance inst;
  inst.cfg = cfg;
  inst.risk = RiskConfig{cfg.epsilon, cfg.beta, cfg.support_limit,
                         cfg.removal_budget};
  inst.risk.validate();
  inst.sample_size =
      cfg.sample_override > 0
          ? cfg.sample_override
          : compute_sample_size(cfg.epsilon, cfg.beta, cfg.support_limit);

  inst.obstacle.kind = ObstacleKind::constant_velocity;
  // Start just below the robot's lane with a slow downward drift: the first
  // stage stays ~4.7 sigma clear (it is fixed by the initial heading, so a
  // binding row there has no feasible recourse), while stages 3-5 are blocked
  // by the upper tail of the sampled fan and produce a small active support.
  inst.obstacle.position = {0.0, 0.04};
  inst.obstacle.velocity = {0.0, -0.44};
  inst.obstacle.sigma_w = {0.0, std::sqrt(0.07)};
  inst.obstacle.radius = cfg.clearance;
  inst.scenarios = sample_trajectories({inst.obstacle}, inst.sample_size,
                                       cfg.horizon, cfg.dt, cfg.seed,
                                       rng_streams::scenario);

  inst.dynamics = std::make_shared<Unicycle3>(cfg.dt);
  inst.cost = std::make_shared<ToyCost>();

  SpProblem& P = inst.problem;
  P.dynamics = inst.dynamics.get();
  P.cost = inst.cost.get();
  P.x0 = Eigen::Vector3d(0.0, 1.2, 0.0);
  P.N = cfg.horizon;
  P.dt = cfg.dt;
  P.u_bounds.lo = Eigen::Vector2d(0.0, -2.0);
  P.u_bounds.hi = Eigen::Vector2d(2.0, 2.0);

  // clearance floor per stage: y_k >= delta_k + r  <=>  -y_k <= -(delta_k+r)
  for (int k = 1; k <= cfg.horizon; ++k) {
    StageConstraintSet grp;
    grp.step = k;
    for (int s = 0; s < inst.sample_size; ++s) {
      Halfspace h;
      h.a = {0.0, -1.0};
      h.b = -(inst.scenarios.at(s, 0, k - 1).y() + cfg.clearance);
      h.scenario = s;
      h.obstacle = 0;
      h.step = int16_t(k);
      grp.rows.push_back(h);
    }
    P.constraints.push_back(std::move(grp));
  }

  // cruise straight ahead at the reference speed; rollout-consistent
  P.U0 = Eigen::MatrixXd::Zero(2, cfg.horizon);
  P.U0.row(0).setConstant(2.0);
  P.X0.resize(3, cfg.horizon);
  Eigen::VectorXd x = P.x0;
  for (int k = 0; k < cfg.horizon; ++k) {
    x = inst.dynamics->step(x, P.U0.col(k));
    P.X0.col(k) = x;
  }

  P.settings.support_limit = cfg.support_limit;
  P.settings.removal_budget = cfg.removal_budget;
  // every budgeted removal restarts convergence for a few iterations
  P.settings.max_iterations = 50 + 12 * cfg.removal_budget;
  P.settings.box_half = 8.0;
  return inst;
}

SpProblem restrict_to(const ToyInstance& inst,
                      const std::vector<int32_t>& keep) {
  const std::set<int32_t> ids(keep.begin(), keep.end());
  SpProblem P = inst.problem;
  for (auto& grp : P.constraints) {
    std::vector<Halfspace> rows;
    for (const auto& h : grp.rows)
      if (ids.count(h.scenario)) rows.push_back(h);
    grp.rows = std::move(rows);
  }
  return P;
}

ToyRun toy_solve(const ToyConfig& cfg) {
  const ToyInstance inst = make_toy(cfg);
  ToyRun run;
  run.solve = solve_sp(inst.problem);
  // solve.support is the certified total (actives U discarded scenarios)
  const int n_hat = int(run.solve.support.size());
  run.certificate = certify(n_hat, inst.sample_size, inst.risk);
  if (!run.solve.usable()) run.certificate.certified = false;
  return run;
}

double toy_empirical_risk(const ToyInstance& inst, const TrajectoryPlan& plan,
                          int mc_samples, uint64_t mc_seed) {
  const auto fresh =
      sample_trajectories({inst.obstacle}, mc_samples, inst.cfg.horizon,
                          inst.cfg.dt, mc_seed, rng_streams::mc_validation);
  int violated = 0;
#pragma omp parallel for reduction(+ : violated) schedule(static)
  for (int s = 0; s < mc_samples; ++s) {
    bool bad = false;
    for (int k = 0; k < inst.cfg.horizon && !bad; ++k)
      bad = plan.X(1, k) < fresh.at(s, 0, k).y() + inst.cfg.clearance;
    violated += bad ? 1 : 0;
  }
  return double(violated) / double(mc_samples);
}

std::vector<SupportComparePoint> toy_support_compare(
    const std::vector<int>& sample_sizes, int realizations, uint64_t seed) {
  std::vector<SupportComparePoint> out;
  for (int S : sample_sizes) {
    SupportComparePoint pt;
    pt.sample_size = S;
    pt.realizations = realizations;
    int subset_ok = 0;
    for (int rep = 0; rep < realizations; ++rep) {
      ToyConfig cfg;
      cfg.sample_override = S;
      cfg.seed = seed + uint64_t(rep) * 1000003ull + uint64_t(S);
      cfg.support_limit = 1 << 20;  // study the estimate, never terminate
      const ToyInstance inst = make_toy(cfg);

      SpProblem tracked = inst.problem;
      tracked.settings.support_limit = std::numeric_limits<int>::max();
      const SolveResult est = solve_sp(tracked);
      const GreedySupportResult greedy = greedy_support(inst.problem);

      pt.mean_estimated += double(est.support.size());
      pt.mean_greedy += double(greedy.support.size());
      pt.mean_estimate_ms += est.solve_ms;
      pt.mean_greedy_ms += greedy.total_ms;
      pt.max_estimated = std::max(pt.max_estimated, int(est.support.size()));
      const bool subset = std::includes(est.support.begin(), est.support.end(),
                                        greedy.support.begin(),
                                        greedy.support.end());
      subset_ok += subset ? 1 : 0;
    }
    const double inv = 1.0 / double(realizations);
    pt.mean_estimated *= inv;
    pt.mean_greedy *= inv;
    pt.mean_estimate_ms *= inv;
    pt.mean_greedy_ms *= inv;
    pt.subset_fraction = double(subset_ok) * inv;
    out.push_back(pt);
  }
  return out;
}

std::vector<RemovalPoint> toy_removal_study(const std::vector<int>& budgets,
                                            int repeats, int mc_samples,
                                            uint64_t seed) {
  constexpr int kBaseSupport = 2;
  std::vector<RemovalPoint> out;
  for (int R : budgets) {
    RemovalPoint pt;
    pt.removal_budget = R;
    pt.repeats = repeats;
    ToyConfig base;
    base.support_limit = kBaseSupport + R;
    base.removal_budget = R;
    pt.sample_size =
        compute_sample_size(base.epsilon, base.beta, base.support_limit);
    for (int rep = 0; rep < repeats; ++rep) {
      ToyConfig cfg = base;
      cfg.seed = seed + uint64_t(rep) * 7919ull;
      const ToyInstance inst = make_toy(cfg);
      const SolveResult sol = solve_sp(inst.problem);
      const RiskCertificate cert =
          certify(int(sol.support.size()), inst.sample_size, inst.risk);
      const double emp = toy_empirical_risk(inst, sol.plan, mc_samples,
                                            cfg.seed ^ 0x9e3779b97f4a7c15ull);
      pt.mean_cost += sol.cost;
      pt.mean_epsilon_bound += cert.epsilon_bound;
      pt.mean_empirical_risk += emp;
      pt.fraction_certified += (cert.certified && sol.usable()) ? 1.0 : 0.0;
      pt.fraction_within_bound += emp <= cert.epsilon_bound ? 1.0 : 0.0;
    }
    const double inv = 1.0 / double(repeats);
    pt.mean_cost *= inv;
    pt.mean_epsilon_bound *= inv;
    pt.mean_empirical_risk *= inv;
    pt.fraction_certified *= inv;
    pt.fraction_within_bound *= inv;
    out.push_back(pt);
  }
  return out;
}

}  // namespace shmpc
