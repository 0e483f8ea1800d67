#include "shmpc/planner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "shmpc/rng.hpp"

namespace shmpc {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

Eigen::Vector2d body_point(const Eigen::VectorXd& x, int pos, int head,
                           const Eigen::Vector2d& offset) {
  const Eigen::Vector2d p = x.segment<2>(pos);
  if (offset.squaredNorm() == 0.0) return p;
  const double th = head >= 0 ? x(head) : 0.0;
  Eigen::Matrix2d R;
  R << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
  return p + R * offset;
}

}  // namespace

// ---- dynamics -----------------------------------------------------------

Eigen::VectorXd UnicycleProgress::step(const Eigen::VectorXd& x,
                                       const Eigen::VectorXd& u) const {
  Eigen::VectorXd out(4);
  out(0) = x(0) + u(0) * std::cos(x(2)) * dt_;
  out(1) = x(1) + u(0) * std::sin(x(2)) * dt_;
  out(2) = x(2) + u(1) * dt_;
  out(3) = x(3) + u(0) * dt_;
  return out;
}

void UnicycleProgress::jacobians(const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& u, Eigen::MatrixXd& A,
                                 Eigen::MatrixXd& B) const {
  A = Eigen::MatrixXd::Identity(4, 4);
  A(0, 2) = -u(0) * std::sin(x(2)) * dt_;
  A(1, 2) = u(0) * std::cos(x(2)) * dt_;
  B = Eigen::MatrixXd::Zero(4, 2);
  B(0, 0) = std::cos(x(2)) * dt_;
  B(1, 0) = std::sin(x(2)) * dt_;
  B(2, 1) = dt_;
  B(3, 0) = dt_;
}

// ---- cost ---------------------------------------------------------------

double MpccCost::value(const Eigen::MatrixXd& X,
                       const Eigen::MatrixXd& U) const {
  double cost = 0.0;
  for (int k = 0; k < X.cols(); ++k) {
    const PathFrame f = path_->frame(X(3, k));
    const Eigen::Vector2d e = X.col(k).head<2>() - f.point;
    cost += w_.contour * std::pow(f.normal.dot(e), 2) +
            w_.lag * std::pow(f.tangent.dot(e), 2);
  }
  for (int k = 0; k < U.cols(); ++k)
    cost += w_.velocity * std::pow(U(0, k) - v_ref_, 2) +
            w_.angular * std::pow(U(1, k), 2);
  return cost;
}

void MpccCost::state_quadratic(int /*k*/, const Eigen::VectorXd& xk,
                               Eigen::MatrixXd& H, Eigen::VectorXd& g) const {
  // On the segment containing s the path point is affine in s, which makes
  // contour = n.(p - q) and lag = t.(p - q(s)) = t.(p - q(s_bar)) - (s -
  // s_bar) exactly linear in the state; the stage cost is exactly quadratic.
  const PathFrame f = path_->frame(xk(3));
  Eigen::Vector4d ac(f.normal.x(), f.normal.y(), 0.0, 0.0);
  Eigen::Vector4d al(f.tangent.x(), f.tangent.y(), 0.0, -1.0);
  const double bc = -f.normal.dot(f.point);
  const double bl = -f.tangent.dot(f.point) + xk(3);
  H = 2.0 * w_.contour * ac * ac.transpose() +
      2.0 * w_.lag * al * al.transpose();
  g = 2.0 * w_.contour * (ac.dot(xk) + bc) * ac +
      2.0 * w_.lag * (al.dot(xk) + bl) * al;
}

void MpccCost::input_quadratic(int /*k*/, const Eigen::VectorXd& uk,
                               Eigen::MatrixXd& H, Eigen::VectorXd& g) const {
  H = Eigen::Matrix2d{{2.0 * w_.velocity, 0.0}, {0.0, 2.0 * w_.angular}};
  g = Eigen::Vector2d(2.0 * w_.velocity * (uk(0) - v_ref_),
                      2.0 * w_.angular * uk(1));
}

// ---- config -------------------------------------------------------------

void PlannerConfig::validate() const {
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  if (dt <= 0.0) throw std::invalid_argument("dt must be positive");
  if (control_period <= 0.0 || control_period > dt + 1e-12)
    throw std::invalid_argument("control_period must lie in (0, dt]");
  if (weights.velocity < 0 || weights.angular < 0 || weights.contour < 0 ||
      weights.lag < 0)
    throw std::invalid_argument("weights must be non-negative");
  if (v_min > v_max || omega_max < 0)
    throw std::invalid_argument("input bounds are inverted");
  if (robot_radius <= 0.0) throw std::invalid_argument("robot radius");
  if (brake_decel <= 0.0) throw std::invalid_argument("brake deceleration");
  if (disc_offsets.empty()) throw std::invalid_argument("no robot discs");
  risk.validate();
}

// ---- warm-start projection ----------------------------------------------

namespace {

// Feasible offsets t along direction o: margin(p + t o) >= margin_target for
// every facet. Returns false when some facet parallel to o already fails.
bool offset_interval(const Polytope& poly, const Eigen::Vector2d& p,
                     const Eigen::Vector2d& o, double margin_target,
                     double& lo, double& hi) {
  lo = -std::numeric_limits<double>::infinity();
  hi = std::numeric_limits<double>::infinity();
  auto clip = [&](const Halfspace& h) {
    const double ao = h.a.dot(o);
    const double m = h.margin(p) - margin_target;
    if (std::abs(ao) < 1e-12) {
      if (m < 0.0) lo = 1.0, hi = 0.0;  // empty
      return;
    }
    if (ao > 0.0)
      hi = std::min(hi, m / ao);
    else
      lo = std::max(lo, m / ao);
  };
  for (const auto& h : poly.facets) clip(h);
  for (const auto& h : poly.box.facets()) clip(h);
  return lo <= hi;
}

// One pass of sequential push-out; returns true when nothing moved. The
// settle test carries a small slack so rounding of an exactly-met margin
// cannot trigger sub-ulp pushes forever.
bool sweep_once(const Polytope& poly, Eigen::Vector2d& p,
                double margin_target) {
  bool settled = true;
  auto push = [&](const Halfspace& h) {
    const double m = h.margin(p);
    if (m < margin_target - 1e-12) {
      p -= (margin_target - m) * h.a;
      settled = false;
    }
  };
  for (const auto& h : poly.facets) push(h);
  for (const auto& h : poly.box.facets()) push(h);
  return settled;
}

}  // namespace

TrajectoryPlan project_previous_plan(const TrajectoryPlan& prev,
                                     const Eigen::VectorXd& x0,
                                     std::span<const ReduceResult> stages,
                                     int position_index, double margin,
                                     int max_sweeps,
                                     ProjectionReport* report) {
  TrajectoryPlan out = prev;
  ProjectionReport rep;
  const int N = int(out.X.cols());
  for (int k = 0; k < N && k < int(stages.size()); ++k) {
    if (!stages[size_t(k)].feasible) {
      rep.empty++;
      continue;
    }
    const Polytope& poly = stages[size_t(k)].poly;
    Eigen::Vector2d p = out.X.col(k).segment<2>(position_index);
    if (poly.contains(p, 0.0)) continue;  // feasible stages stay untouched

    const Eigen::Vector2d behind =
        k == 0 ? Eigen::Vector2d(x0.segment<2>(position_index))
               : Eigen::Vector2d(out.X.col(k - 1).segment<2>(position_index));
    const Eigen::Vector2d motion = p - behind;
    bool translated = false;
    if (motion.norm() > 1e-9) {
      const Eigen::Vector2d dir = motion.normalized();
      const Eigen::Vector2d ortho(-dir.y(), dir.x());
      double lo, hi;
      if (offset_interval(poly, p, ortho, margin, lo, hi)) {
        p += std::clamp(0.0, lo, hi) * ortho;
        translated = true;
        rep.translated++;
      }
    }
    if (!translated) {
      bool settled = false;
      for (int sweep = 0; sweep < max_sweeps && !settled; ++sweep)
        settled = sweep_once(poly, p, margin);
      if (settled)
        rep.swept++;
      else
        rep.unresolved++;
    }
    out.X.col(k).segment<2>(position_index) = p;
  }
  if (report) *report = rep;
  return out;
}

// ---- planner ------------------------------------------------------------

Planner::Planner(PlannerConfig cfg)
    : cfg_((cfg.validate(), std::move(cfg))),
      path_(cfg_.waypoints),
      dynamics_(cfg_.dt),
      cost_(&path_, cfg_.weights, cfg_.v_ref) {
  S_ = cfg_.sample_size > 0
           ? cfg_.sample_size
           : compute_sample_size(cfg_.risk.epsilon, cfg_.risk.beta,
                                 cfg_.risk.support_limit);
}

TrajectoryPlan Planner::shift_plan(const TrajectoryPlan& plan) {
  TrajectoryPlan out = plan;
  const int N = int(plan.X.cols());
  for (int k = 0; k < N; ++k) {
    const int src = std::min(k + 1, N - 1);
    out.X.col(k) = plan.X.col(src);
    out.U.col(k) = plan.U.col(src);
  }
  return out;
}

Eigen::Vector2d Planner::fallback_input() {
  const double v = std::max(0.0, last_v_ - cfg_.brake_decel *
                                              cfg_.control_period);
  return {v, 0.0};
}

StepRecord Planner::step(const Eigen::Vector4d& state,
                         const std::vector<ObstacleModel>& obstacles,
                         uint64_t seed) {
  // pending warm-start shift: one stage per elapsed planning period
  bool shifted = false;
  if (grid_accum_ >= cfg_.dt - 1e-9) {
    grid_accum_ -= cfg_.dt;
    if (warm_) warm_ = shift_plan(*warm_);
    certified_stage_++;
    shifted = true;
  }

  StepRecord rec;
  try {
    rec = plan_step(state, obstacles, seed);
  } catch (const std::exception&) {
    rec.status = SpStatus::infeasible;  // solver/build failure, not fatal
  }
  rec.time = time_;
  rec.state = state;
  rec.shifted = shifted;

  if (rec.certified) {
    certified_ = rec.plan;
    certified_stage_ = 0;
    rec.mode = StepMode::plan;
    rec.input = rec.plan.U.col(0);
  } else if (certified_ && certified_stage_ < int(certified_->U.cols())) {
    rec.mode = StepMode::hold_previous;
    rec.input = certified_->U.col(certified_stage_);
  } else {
    certified_.reset();
    rec.mode = StepMode::brake;
    rec.input = fallback_input();
  }

  time_ += cfg_.control_period;
  grid_accum_ += cfg_.control_period;
  last_v_ = rec.input(0);
  return rec;
}

StepRecord Planner::plan_step(const Eigen::Vector4d& state,
                              const std::vector<ObstacleModel>& obstacles,
                              uint64_t seed) {
  const auto t0 = Clock::now();
  StepRecord rec;
  const int N = cfg_.horizon;
  const int M = int(obstacles.size());
  const int D = int(cfg_.disc_offsets.size());

  auto t = Clock::now();
  const ScenarioSet scen =
      sample_trajectories(obstacles, S_, N, cfg_.dt, seed,
                          rng_streams::scenario);
  rec.sample_ms = ms_since(t);

  if (!warm_) {
    // no previous plan: hold position, so the fixed collision linearizations
    // are taken in known-clear space near the robot rather than inside a
    // distant sample cloud the reference rollout would drive through
    TrajectoryPlan init;
    init.dt = cfg_.dt;
    init.U = Eigen::MatrixXd::Zero(2, N);
    init.U.row(0).setConstant(std::clamp(0.0, cfg_.v_min, cfg_.v_max));
    init.X.resize(4, N);
    Eigen::VectorXd x = state;
    for (int k = 0; k < N; ++k) {
      x = dynamics_.step(x, init.U.col(k));
      init.X.col(k) = x;
    }
    warm_ = std::move(init);
  }

  // one conservative halfspace per (scenario, obstacle, stage, disc),
  // linearized about the warm-start disc centers
  std::vector<std::vector<Halfspace>> rows(size_t(N) * size_t(D));
  std::vector<Eigen::Vector2d> witnesses(size_t(N) * size_t(D));
  for (int k = 1; k <= N; ++k)
    for (int d = 0; d < D; ++d) {
      const size_t g = size_t(k - 1) * size_t(D) + size_t(d);
      const Eigen::Vector2d p_hat =
          body_point(warm_->X.col(k - 1), 0, 2, cfg_.disc_offsets[size_t(d)]);
      witnesses[g] = p_hat;
      auto& list = rows[g];
      list.reserve(size_t(S_) * size_t(M));
      for (int j = 0; j < M; ++j) {
        const double r_comb = cfg_.robot_radius + obstacles[size_t(j)].radius;
        for (int s = 0; s < S_; ++s) {
          const Eigen::Vector2d& sample = scen.at(s, j, k - 1);
          if ((sample - p_hat).squaredNorm() < 1e-18) {
            // degenerate direction: any unit normal still excludes the disc
            list.push_back(Halfspace{{1.0, 0.0},
                                     sample.x() - r_comb,
                                     int32_t(s),
                                     int16_t(j),
                                     int16_t(k),
                                     int16_t(d)});
            continue;
          }
          list.push_back(linearize_collision(sample, p_hat, r_comb,
                                             int32_t(s), int16_t(j),
                                             int16_t(k), int16_t(d)));
        }
      }
    }

  t = Clock::now();
  const std::vector<ReduceResult> reduced =
      reduce_stagewise(rows, witnesses, cfg_.box_half, cfg_.max_facets);
  rec.reduce_ms = ms_since(t);

  // repair the warm start stage by stage before handing it to the solver;
  // only the body-center stages are projected (planner runs one disc)
  std::vector<ReduceResult> center(reduced.begin(), reduced.begin() + N);
  if (D > 1)
    for (int k = 0; k < N; ++k) center[size_t(k)] = reduced[size_t(k) * D];
  TrajectoryPlan projected = project_previous_plan(
      *warm_, state, center, 0, cfg_.projection_margin, 100, &rec.projection);

  SpProblem P;
  P.dynamics = &dynamics_;
  P.cost = &cost_;
  P.x0 = state;
  P.N = N;
  P.dt = cfg_.dt;
  P.u_bounds.lo = Eigen::Vector2d(cfg_.v_min, -cfg_.omega_max);
  P.u_bounds.hi = Eigen::Vector2d(cfg_.v_max, cfg_.omega_max);
  P.disc_offsets = cfg_.disc_offsets;
  P.X0 = projected.X;
  P.U0 = projected.U;
  P.constraints.reserve(rows.size());
  for (int k = 1; k <= N; ++k)
    for (int d = 0; d < D; ++d) {
      StageConstraintSet grp;
      grp.step = k;
      grp.disc = d;
      grp.rows = std::move(rows[size_t(k - 1) * size_t(D) + size_t(d)]);
      P.constraints.push_back(std::move(grp));
    }
  P.settings.max_facets = cfg_.max_facets;
  P.settings.box_half = cfg_.box_half;
  P.settings.max_iterations = cfg_.max_iterations;
  P.settings.support_limit = cfg_.risk.support_limit;
  P.settings.removal_budget = cfg_.risk.removal_budget;
  // receding-horizon tolerances: a micrometre-level plan mismatch is far
  // below actuation relevance, and the strict defaults would spend dozens of
  // extra iterations on the linear convergence tail
  P.settings.step_tol = 1e-6;
  P.settings.defect_tol = 1e-6;

  SolveResult res = solve_sp(P);
  rec.solve_ms = res.solve_ms;
  rec.status = res.status;
  rec.support = int(res.support.size());
  rec.removed = int(res.removed.size());
  rec.conflicts = int(res.conflict.size());
  rec.plan = res.plan;
  rec.plan.dt = cfg_.dt;

  // A feasible plan is actuatable even when the iteration budget ran out
  // before full convergence (the receding horizon keeps polishing it);
  // optimality is a performance concern, the certificate is the safety one.
  const bool plan_ok = res.usable() || res.plan_feasible;

  // actuation requires the certificate AND that its bound meets the target
  // (an undersized sample_size override can satisfy n_hat <= nbar while
  // eps(n_hat) still exceeds epsilon)
  const RiskCertificate cert = certify(rec.support, S_, cfg_.risk);
  rec.epsilon_bound = cert.epsilon_bound;
  rec.certified =
      cert.certified && cert.epsilon_bound <= cfg_.risk.epsilon && plan_ok;

  if (plan_ok) warm_ = rec.plan;  // best available initial guess
  rec.total_ms = ms_since(t0);
  return rec;
}

}  // namespace shmpc
