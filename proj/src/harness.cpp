#include "shmpc/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "shmpc/reference.hpp"
#include "shmpc/risk.hpp"
#include "shmpc/rng.hpp"

namespace shmpc {

namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

std::string str_fmt(const char* fmt, ...) {
  char buf[256];
  va_list ap;
  va_start(ap, fmt);
  vsnprintf(buf, sizeof(buf), fmt, ap);
  va_end(ap);
  return buf;
}

Eigen::Vector2d body_point(const Eigen::Vector4d& x,
                           const Eigen::Vector2d& off) {
  Eigen::Vector2d p(x(0), x(1));
  if (off.isZero()) return p;
  const double c = std::cos(x(2)), s = std::sin(x(2));
  return p + Eigen::Vector2d(c * off.x() - s * off.y(),
                             s * off.x() + c * off.y());
}

const char* mode_name(StepMode m) {
  switch (m) {
    case StepMode::plan: return "plan";
    case StepMode::hold_previous: return "hold_previous";
    case StepMode::brake: return "brake";
  }
  return "?";
}

const char* status_name(SpStatus s) {
  switch (s) {
    case SpStatus::optimal: return "optimal";
    case SpStatus::early_terminated: return "early_terminated";
    case SpStatus::infeasible: return "infeasible";
    case SpStatus::max_iterations: return "max_iterations";
  }
  return "?";
}

// ------------------------------------------------------------ MC kernel ---

// Tally one sampled joint future: sets per-stage hit flags and returns
// whether any stage collided. Buffer `traj` must hold N positions.
bool mc_one_future(const std::vector<ObstacleModel>& models,
                   const std::vector<Eigen::Vector2d>& disc_pos,
                   const std::vector<double>& comb_radius, int N, int D,
                   double dt, uint64_t seed, uint32_t scenario,
                   Eigen::Vector2d* traj, uint8_t* stage_hit) {
  std::fill(stage_hit, stage_hit + N, uint8_t(0));
  bool any = false;
  for (size_t j = 0; j < models.size(); ++j) {
    sample_obstacle_path(models[j], N, dt, seed, rng_streams::mc_validation,
                         scenario, uint32_t(j), traj, nullptr);
    const double rc = comb_radius[j];
    for (int k = 0; k < N; ++k) {
      for (int d = 0; d < D; ++d) {
        const Eigen::Vector2d& p = disc_pos[size_t(k) * size_t(D) + size_t(d)];
        if ((p - traj[k]).squaredNorm() < rc * rc) {
          stage_hit[k] = 1;
          any = true;
          break;
        }
      }
    }
  }
  return any;
}

CpEstimate mc_cp_impl(const TrajectoryPlan& plan,
                      const std::vector<ObstacleModel>& models,
                      const std::vector<Eigen::Vector2d>& disc_offsets,
                      double robot_radius, int n_mc, uint64_t seed,
                      bool parallel) {
  if (n_mc < 1) throw std::invalid_argument("monte_carlo_cp: n_mc must be >= 1");
  if (plan.X.cols() < 1 || plan.X.rows() < 3)
    throw std::invalid_argument("monte_carlo_cp: plan has no stages");
  if (disc_offsets.empty())
    throw std::invalid_argument("monte_carlo_cp: need at least one disc");
  if (!(robot_radius > 0.0))
    throw std::invalid_argument("monte_carlo_cp: robot_radius must be > 0");
  for (const auto& m : models) m.validate(plan.dt);

  const int N = int(plan.X.cols());
  const int D = int(disc_offsets.size());

  std::vector<Eigen::Vector2d> disc_pos(size_t(N) * size_t(D));
  for (int k = 0; k < N; ++k) {
    const Eigen::Vector4d xk = plan.X.col(k).head<4>();
    for (int d = 0; d < D; ++d)
      disc_pos[size_t(k) * size_t(D) + size_t(d)] =
          body_point(xk, disc_offsets[size_t(d)]);
  }
  std::vector<double> comb_radius(models.size());
  for (size_t j = 0; j < models.size(); ++j)
    comb_radius[j] = robot_radius + models[j].radius;

  long long joint = 0;
  std::vector<long long> stage(size_t(N), 0);

  if (parallel) {
#pragma omp parallel
    {
      long long my_joint = 0;
      std::vector<long long> my_stage(size_t(N), 0);
      std::vector<Eigen::Vector2d> traj(size_t(N), Eigen::Vector2d::Zero());
      std::vector<uint8_t> hit(size_t(N), 0);
#pragma omp for schedule(static)
      for (int s = 0; s < n_mc; ++s) {
        if (mc_one_future(models, disc_pos, comb_radius, N, D, plan.dt, seed,
                          uint32_t(s), traj.data(), hit.data()))
          ++my_joint;
        for (int k = 0; k < N; ++k) my_stage[size_t(k)] += hit[size_t(k)];
      }
#pragma omp critical
      {
        joint += my_joint;
        for (int k = 0; k < N; ++k) stage[size_t(k)] += my_stage[size_t(k)];
      }
    }
  } else {
    std::vector<Eigen::Vector2d> traj(size_t(N), Eigen::Vector2d::Zero());
    std::vector<uint8_t> hit(size_t(N), 0);
    for (int s = 0; s < n_mc; ++s) {
      if (mc_one_future(models, disc_pos, comb_radius, N, D, plan.dt, seed,
                        uint32_t(s), traj.data(), hit.data()))
        ++joint;
      for (int k = 0; k < N; ++k) stage[size_t(k)] += hit[size_t(k)];
    }
  }

  CpEstimate est;
  est.samples = n_mc;
  auto se = [n_mc](double p) {
    return std::sqrt(std::max(0.0, p * (1.0 - p)) / double(n_mc));
  };
  est.joint = double(joint) / double(n_mc);
  est.joint_se = se(est.joint);
  est.marginal.resize(size_t(N));
  est.marginal_se.resize(size_t(N));
  for (int k = 0; k < N; ++k) {
    est.marginal[size_t(k)] = double(stage[size_t(k)]) / double(n_mc);
    est.marginal_se[size_t(k)] = se(est.marginal[size_t(k)]);
  }
  return est;
}

// ------------------------------------------------------------ JSON glue ---

json jv(const Eigen::Vector2d& v) { return json::array({v.x(), v.y()}); }

Eigen::Vector2d v2(const json& j) {
  if (!j.is_array() || j.size() != 2)
    throw std::invalid_argument("expected a 2-element array");
  return {j.at(0).get<double>(), j.at(1).get<double>()};
}

json jm(const Eigen::Matrix2d& m) {
  return json::array({json::array({m(0, 0), m(0, 1)}),
                      json::array({m(1, 0), m(1, 1)})});
}

Eigen::Matrix2d m2(const json& j) {
  if (!j.is_array() || j.size() != 2)
    throw std::invalid_argument("expected a 2x2 array");
  Eigen::Matrix2d m;
  m << j.at(0).at(0).get<double>(), j.at(0).at(1).get<double>(),
      j.at(1).at(0).get<double>(), j.at(1).at(1).get<double>();
  return m;
}

const char* kind_name(ObstacleKind k) {
  switch (k) {
    case ObstacleKind::random_walk: return "random_walk";
    case ObstacleKind::constant_velocity: return "constant_velocity";
    case ObstacleKind::markov_gmm: return "markov_gmm";
  }
  return "?";
}

ObstacleKind kind_from(const std::string& s) {
  if (s == "random_walk") return ObstacleKind::random_walk;
  if (s == "constant_velocity") return ObstacleKind::constant_velocity;
  if (s == "markov_gmm") return ObstacleKind::markov_gmm;
  throw std::invalid_argument("unknown obstacle kind: " + s);
}

json obstacle_to_json(const ObstacleModel& m) {
  json j;
  j["kind"] = kind_name(m.kind);
  j["position"] = jv(m.position);
  j["velocity"] = jv(m.velocity);
  j["sigma_w"] = jv(m.sigma_w);
  j["radius"] = m.radius;
  if (m.kind == ObstacleKind::markov_gmm) {
    j["dir_pre"] = jm(m.dir_pre);
    j["dir_post"] = jm(m.dir_post);
    j["crossing_prob"] = m.crossing_prob;
    j["crossed"] = m.crossed;
  }
  return j;
}

ObstacleModel obstacle_from_json(const json& j) {
  ObstacleModel m;
  m.kind = kind_from(j.at("kind").get<std::string>());
  if (j.contains("position")) m.position = v2(j.at("position"));
  if (j.contains("velocity")) m.velocity = v2(j.at("velocity"));
  if (j.contains("sigma_w")) m.sigma_w = v2(j.at("sigma_w"));
  m.radius = j.value("radius", m.radius);
  if (j.contains("dir_pre")) m.dir_pre = m2(j.at("dir_pre"));
  if (j.contains("dir_post")) m.dir_post = m2(j.at("dir_post"));
  m.crossing_prob = j.value("crossing_prob", m.crossing_prob);
  m.crossed = j.value("crossed", m.crossed);
  return m;
}

json planner_to_json(const PlannerConfig& c) {
  json j;
  j["horizon"] = c.horizon;
  j["dt"] = c.dt;
  j["control_period"] = c.control_period;
  j["weights"] = {{"velocity", c.weights.velocity},
                  {"angular", c.weights.angular},
                  {"contour", c.weights.contour},
                  {"lag", c.weights.lag}};
  j["waypoints"] = json::array();
  for (const auto& w : c.waypoints) j["waypoints"].push_back(jv(w));
  j["v_ref"] = c.v_ref;
  j["v_min"] = c.v_min;
  j["v_max"] = c.v_max;
  j["omega_max"] = c.omega_max;
  j["brake_decel"] = c.brake_decel;
  j["disc_offsets"] = json::array();
  for (const auto& d : c.disc_offsets) j["disc_offsets"].push_back(jv(d));
  j["robot_radius"] = c.robot_radius;
  j["risk"] = {{"epsilon", c.risk.epsilon},
               {"beta", c.risk.beta},
               {"support_limit", c.risk.support_limit},
               {"removal_budget", c.risk.removal_budget}};
  j["sample_size"] = c.sample_size;
  j["max_facets"] = c.max_facets;
  j["box_half"] = c.box_half;
  j["max_iterations"] = c.max_iterations;
  j["projection_margin"] = c.projection_margin;
  return j;
}

PlannerConfig planner_from_json(const json& j) {
  PlannerConfig c;
  c.horizon = j.value("horizon", c.horizon);
  c.dt = j.value("dt", c.dt);
  c.control_period = j.value("control_period", c.control_period);
  if (j.contains("weights")) {
    const json& w = j.at("weights");
    c.weights.velocity = w.value("velocity", c.weights.velocity);
    c.weights.angular = w.value("angular", c.weights.angular);
    c.weights.contour = w.value("contour", c.weights.contour);
    c.weights.lag = w.value("lag", c.weights.lag);
  }
  if (j.contains("waypoints")) {
    c.waypoints.clear();
    for (const auto& e : j.at("waypoints")) c.waypoints.push_back(v2(e));
  }
  c.v_ref = j.value("v_ref", c.v_ref);
  c.v_min = j.value("v_min", c.v_min);
  c.v_max = j.value("v_max", c.v_max);
  c.omega_max = j.value("omega_max", c.omega_max);
  c.brake_decel = j.value("brake_decel", c.brake_decel);
  if (j.contains("disc_offsets")) {
    c.disc_offsets.clear();
    for (const auto& e : j.at("disc_offsets")) c.disc_offsets.push_back(v2(e));
  }
  c.robot_radius = j.value("robot_radius", c.robot_radius);
  if (j.contains("risk")) {
    const json& r = j.at("risk");
    c.risk.epsilon = r.value("epsilon", c.risk.epsilon);
    c.risk.beta = r.value("beta", c.risk.beta);
    c.risk.support_limit = r.value("support_limit", c.risk.support_limit);
    c.risk.removal_budget = r.value("removal_budget", c.risk.removal_budget);
  }
  c.sample_size = j.value("sample_size", c.sample_size);
  c.max_facets = j.value("max_facets", c.max_facets);
  c.box_half = j.value("box_half", c.box_half);
  c.max_iterations = j.value("max_iterations", c.max_iterations);
  c.projection_margin = j.value("projection_margin", c.projection_margin);
  return c;
}

json experiment_to_json(const ExperimentConfig& c) {
  json j;
  j["name"] = c.name;
  j["method"] = c.method == PlanMethod::scenario ? "scenario" : "gaussian";
  j["baseline_epsilon_k"] = c.baseline_epsilon_k;
  j["planner"] = planner_to_json(c.planner);
  j["obstacles"] = json::array();
  for (const auto& m : c.obstacles) j["obstacles"].push_back(obstacle_to_json(m));
  j["repetitions"] = c.repetitions;
  j["master_seed"] = c.master_seed;
  j["n_mc"] = c.n_mc;
  j["time_cap"] = c.time_cap;
  j["goal_tolerance"] = c.goal_tolerance;
  j["output_dir"] = c.output_dir;
  return j;
}

ExperimentConfig experiment_from_json_obj(const json& j) {
  ExperimentConfig c;
  c.name = j.value("name", c.name);
  if (j.contains("method")) {
    const std::string m = j.at("method").get<std::string>();
    if (m == "scenario") c.method = PlanMethod::scenario;
    else if (m == "gaussian") c.method = PlanMethod::gaussian;
    else throw std::invalid_argument("unknown method: " + m);
  }
  c.baseline_epsilon_k = j.value("baseline_epsilon_k", c.baseline_epsilon_k);
  if (j.contains("planner")) c.planner = planner_from_json(j.at("planner"));
  if (j.contains("obstacles")) {
    c.obstacles.clear();
    for (const auto& e : j.at("obstacles"))
      c.obstacles.push_back(obstacle_from_json(e));
  }
  c.repetitions = j.value("repetitions", c.repetitions);
  c.master_seed = j.value("master_seed", c.master_seed);
  c.n_mc = j.value("n_mc", c.n_mc);
  c.time_cap = j.value("time_cap", c.time_cap);
  c.goal_tolerance = j.value("goal_tolerance", c.goal_tolerance);
  c.output_dir = j.value("output_dir", c.output_dir);
  return c;
}

json plan_to_json(const TrajectoryPlan& p) {
  json j;
  j["dt"] = p.dt;
  json X = json::array(), U = json::array();
  for (int c = 0; c < p.X.cols(); ++c) {
    json col = json::array();
    for (int r = 0; r < p.X.rows(); ++r) col.push_back(p.X(r, c));
    X.push_back(std::move(col));
  }
  for (int c = 0; c < p.U.cols(); ++c) {
    json col = json::array();
    for (int r = 0; r < p.U.rows(); ++r) col.push_back(p.U(r, c));
    U.push_back(std::move(col));
  }
  j["X"] = std::move(X);
  j["U"] = std::move(U);
  return j;
}

TrajectoryPlan plan_from_json(const json& j) {
  TrajectoryPlan p;
  p.dt = j.at("dt").get<double>();
  const json& X = j.at("X");
  const json& U = j.at("U");
  if (!X.empty()) {
    p.X.resize(Eigen::Index(X.at(0).size()), Eigen::Index(X.size()));
    for (Eigen::Index c = 0; c < p.X.cols(); ++c)
      for (Eigen::Index r = 0; r < p.X.rows(); ++r)
        p.X(r, c) = X.at(size_t(c)).at(size_t(r)).get<double>();
  }
  if (!U.empty()) {
    p.U.resize(Eigen::Index(U.at(0).size()), Eigen::Index(U.size()));
    for (Eigen::Index c = 0; c < p.U.cols(); ++c)
      for (Eigen::Index r = 0; r < p.U.rows(); ++r)
        p.U(r, c) = U.at(size_t(c)).at(size_t(r)).get<double>();
  }
  return p;
}

// ------------------------------------------------------------ simulator ---

TrajectoryPlan shift_one(const TrajectoryPlan& plan) {
  TrajectoryPlan out;
  out.dt = plan.dt;
  const int N = int(plan.X.cols());
  out.X.resize(plan.X.rows(), N);
  out.U.resize(plan.U.rows(), N);
  for (int k = 0; k < N; ++k) {
    out.X.col(k) = plan.X.col(std::min(k + 1, N - 1));
    out.U.col(k) = plan.U.col(std::min(k + 1, N - 1));
  }
  return out;
}

// Ground truth for one obstacle: chain state and grid-tick positions drawn
// from the same model the planner samples, one dt step at a time.
struct TruthState {
  ObstacleModel model;           // position/crossed = state at tick `tick`
  Eigen::Vector2d prev, next;    // positions at tick and tick+1
  bool next_crossed = false;     // chain state at tick+1
  int tick = 0;
};

class Simulator {
 public:
  Simulator(const ExperimentConfig& cfg, int rep, uint64_t seed)
      : cfg_(cfg), rep_(rep), seed_(seed) {}

  RunResult run() {
    RunResult rr;
    rr.rep = rep_;
    rr.seed = seed_;
    try {
      run_inner(rr);
    } catch (const std::exception& e) {
      rr.error = e.what();
      rr.completed = false;
      if (rr.duration <= 0.0) rr.duration = cfg_.time_cap;
    }
    return rr;
  }

 private:
  void advance_truth(TruthState& ts, int obstacle) const {
    ts.model.position = ts.next;
    ts.model.crossed = ts.next_crossed;
    ts.tick++;
    int32_t sw = -1;
    sample_obstacle_path(ts.model, 1, cfg_.planner.dt, seed_,
                         rng_streams::sim_truth, uint32_t(ts.tick),
                         uint32_t(obstacle), &ts.next, &sw);
    ts.prev = ts.model.position;
    ts.next_crossed = ts.model.crossed || sw > 0;
  }

  void run_inner(RunResult& rr) {
    const PlannerConfig& pc = cfg_.planner;
    const double dt = pc.dt, cp = pc.control_period;
    const int per_grid = std::max(1, int(std::llround(dt / cp)));

    ReferencePath path(pc.waypoints);
    std::optional<Planner> scenario_planner;
    std::optional<GaussianPlanner> gaussian_planner;
    if (cfg_.method == PlanMethod::scenario)
      scenario_planner.emplace(pc);
    else
      gaussian_planner.emplace(pc, cfg_.baseline_epsilon_k);

    // robot starts at the path origin, aligned with it
    Eigen::Vector4d state;
    {
      const PathFrame f0 = path.frame(0.0);
      state << f0.point.x(), f0.point.y(),
          std::atan2(f0.tangent.y(), f0.tangent.x()), 0.0;
    }
    UnicycleProgress integrator(cp);

    std::vector<TruthState> truth(cfg_.obstacles.size());
    for (size_t j = 0; j < truth.size(); ++j) {
      truth[j].model = cfg_.obstacles[j];
      truth[j].tick = -1;
      truth[j].next = truth[j].model.position;
      truth[j].next_crossed = truth[j].model.crossed;
      advance_truth(truth[j], int(j));  // draw motion over (0, dt]
    }

    const int max_steps = int(std::ceil(cfg_.time_cap / cp));
    std::vector<ObstacleModel> visible(cfg_.obstacles.size());
    const double brake_eps = 1e-12;

    for (int i = 0; i <= max_steps; ++i) {
      const double t = double(i) * cp;

      // advance the truth grid so that t lies inside (tick, tick+1] * dt;
      // a grid instant itself belongs to the completed step, so any chain
      // switch realized by that step is visible from t onward
      for (size_t j = 0; j < truth.size(); ++j)
        while ((double(truth[j].tick) + 1.0) * dt <= t + 1e-9)
          advance_truth(truth[j], int(j));

      // interpolated true obstacle positions at t; chain switches become
      // visible once the grid step that realized them has completed
      double min_gap = std::numeric_limits<double>::infinity();
      for (size_t j = 0; j < truth.size(); ++j) {
        const TruthState& ts = truth[j];
        const double frac =
            std::clamp((t - double(ts.tick) * dt) / dt, 0.0, 1.0);
        const Eigen::Vector2d pos = ts.prev + frac * (ts.next - ts.prev);
        visible[j] = cfg_.obstacles[j];
        visible[j].position = pos;
        visible[j].crossed = ts.model.crossed;  // state at the last full tick
        for (const auto& off : pc.disc_offsets) {
          const double gap = (body_point(state, off) - pos).norm() -
                             (pc.robot_radius + visible[j].radius);
          min_gap = std::min(min_gap, gap);
        }
      }
      if (!truth.empty()) {
        rr.min_distance = std::min(rr.min_distance, min_gap);
        if (min_gap < 0.0) {
          rr.collision_steps++;
          rr.collided = true;
        }
      }

      if (path.closest_progress(state.head<2>()) >=
          path.length() - cfg_.goal_tolerance) {
        rr.duration = t;
        rr.completed = true;
        break;
      }
      if (t >= cfg_.time_cap - brake_eps) break;

      const uint64_t step_seed =
          derive_seed(seed_, rng_streams::experiment, uint32_t(i), 0x57E9u);
      StepRecord rec = scenario_planner
                           ? scenario_planner->step(state, visible, step_seed)
                           : gaussian_planner->step(state, visible, step_seed);

      if (rec.mode == StepMode::plan && i % per_grid == 0) {
        StoredPlan sp;
        sp.rep = rep_;
        sp.time = t;
        sp.plan = rec.plan;
        sp.models = visible;
        sp.epsilon_bound = rec.epsilon_bound;
        sp.support = rec.support;
        sp.certified = rec.certified;
        rr.plans.push_back(std::move(sp));
      }

      const Eigen::Vector4d before = state;
      state = integrator.step(state, rec.input);
      rr.traveled += (state.head<2>() - before.head<2>()).norm();

      rec.plan = TrajectoryPlan{};  // stored separately; keep the log lean
      rr.steps.push_back(std::move(rec));
    }

    if (!rr.completed) rr.duration = cfg_.time_cap;
  }

  const ExperimentConfig& cfg_;
  int rep_;
  uint64_t seed_;
};

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / double(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / double(v.size() - 1));
}

void write_outputs(const ExperimentResult& R) {
  namespace fs = std::filesystem;
  const fs::path dir(R.config.output_dir);
  fs::create_directories(dir);

  {
    std::ofstream f(dir / "config.json");
    f << to_json_string(R.config) << "\n";
  }
  {
    std::ofstream f(dir / "runs.jsonl");
    for (const auto& run : R.runs) {
      for (const auto& s : run.steps) {
        json j;
        j["rep"] = run.rep;
        j["time"] = s.time;
        j["x"] = s.state(0);
        j["y"] = s.state(1);
        j["heading"] = s.state(2);
        j["progress"] = s.state(3);
        j["v"] = s.input(0);
        j["omega"] = s.input(1);
        j["mode"] = mode_name(s.mode);
        j["status"] = status_name(s.status);
        j["support"] = s.support;
        j["removed"] = s.removed;
        j["conflicts"] = s.conflicts;
        j["epsilon_bound"] = s.epsilon_bound;
        j["certified"] = s.certified;
        j["shifted"] = s.shifted;
        j["sample_ms"] = s.sample_ms;
        j["reduce_ms"] = s.reduce_ms;
        j["solve_ms"] = s.solve_ms;
        j["total_ms"] = s.total_ms;
        f << j.dump() << "\n";
      }
    }
  }
  {
    std::ofstream f(dir / "plans.jsonl");
    for (const auto& run : R.runs) {
      for (const auto& p : run.plans) {
        json j;
        j["rep"] = p.rep;
        j["time"] = p.time;
        j["epsilon_bound"] = p.epsilon_bound;
        j["support"] = p.support;
        j["certified"] = p.certified;
        if (p.validated) {
          j["joint_cp"] = p.cp.joint;
          j["joint_se"] = p.cp.joint_se;
          j["max_marginal_cp"] = p.cp.max_marginal();
          j["n_mc"] = p.cp.samples;
        }
        j["plan"] = plan_to_json(p.plan);
        j["obstacles"] = json::array();
        for (const auto& m : p.models)
          j["obstacles"].push_back(obstacle_to_json(m));
        j["disc_offsets"] = json::array();
        for (const auto& d : R.config.planner.disc_offsets)
          j["disc_offsets"].push_back(jv(d));
        j["robot_radius"] = R.config.planner.robot_radius;
        f << j.dump() << "\n";
      }
    }
  }
  {
    std::ofstream f(dir / "summary.csv");
    f << R.summary.to_csv();
  }
}

}  // namespace

// ---------------------------------------------------------------- MC CP ---

double CpEstimate::max_marginal() const {
  double m = 0.0;
  for (double x : marginal) m = std::max(m, x);
  return m;
}

int CpEstimate::max_marginal_stage() const {
  int arg = 0;
  double m = -1.0;
  for (size_t k = 0; k < marginal.size(); ++k)
    if (marginal[k] > m) {
      m = marginal[k];
      arg = int(k) + 1;
    }
  return marginal.empty() ? 0 : arg;
}

CpEstimate monte_carlo_cp(const TrajectoryPlan& plan,
                          const std::vector<ObstacleModel>& models,
                          const std::vector<Eigen::Vector2d>& disc_offsets,
                          double robot_radius, int n_mc, uint64_t seed) {
  return mc_cp_impl(plan, models, disc_offsets, robot_radius, n_mc, seed,
                    true);
}

namespace reference {
CpEstimate monte_carlo_cp(const TrajectoryPlan& plan,
                          const std::vector<ObstacleModel>& models,
                          const std::vector<Eigen::Vector2d>& disc_offsets,
                          double robot_radius, int n_mc, uint64_t seed) {
  return mc_cp_impl(plan, models, disc_offsets, robot_radius, n_mc, seed,
                    false);
}
}  // namespace reference

// ------------------------------------------------- Gaussian CDF baseline ---

Halfspace gaussian_baseline_halfspace(const Eigen::Vector2d& p_hat,
                                      const Eigen::Vector2d& mean,
                                      const Eigen::Matrix2d& Sigma,
                                      double r_comb, double epsilon_k,
                                      int32_t scenario, int16_t obstacle,
                                      int16_t step, int16_t disc) {
  if (!(epsilon_k > 0.0 && epsilon_k < 0.5))
    throw std::invalid_argument(
        "gaussian_baseline_halfspace: epsilon_k must be in (0, 0.5)");
  const Eigen::Vector2d d = mean - p_hat;
  const double n = d.norm();
  if (!(n > 1e-12))
    throw std::domain_error(
        "gaussian_baseline_halfspace: point coincides with the mean");
  const Eigen::Vector2d a = d / n;
  double var = a.dot(Sigma * a);
  if (var < -1e-12)
    throw std::invalid_argument(
        "gaussian_baseline_halfspace: Sigma is not PSD along the constraint");
  var = std::max(var, 0.0);
  const double tight = erf_inv(1.0 - 2.0 * epsilon_k) * std::sqrt(2.0 * var);
  Halfspace h;
  h.a = a;
  h.b = a.dot(mean) - r_comb - tight;
  h.scenario = scenario;
  h.obstacle = obstacle;
  h.step = step;
  h.disc = disc;
  return h;
}

GaussianPlanner::GaussianPlanner(PlannerConfig cfg, double epsilon_k)
    : cfg_((cfg.validate(), std::move(cfg))),
      path_(cfg_.waypoints),
      dynamics_(cfg_.dt),
      cost_(&path_, cfg_.weights, cfg_.v_ref),
      eps_k_(epsilon_k) {
  if (!(epsilon_k > 0.0 && epsilon_k < 0.5))
    throw std::invalid_argument(
        "GaussianPlanner: epsilon_k must be in (0, 0.5)");
}

StepRecord GaussianPlanner::step(const Eigen::Vector4d& state,
                                 const std::vector<ObstacleModel>& obstacles,
                                 uint64_t /*seed*/) {
  bool shifted = false;
  if (grid_accum_ >= cfg_.dt - 1e-9) {
    grid_accum_ -= cfg_.dt;
    if (warm_) warm_ = shift_one(*warm_);
    accepted_stage_++;
    shifted = true;
  }

  StepRecord rec;
  bool accepted = false;
  try {
    rec = plan_step(state, obstacles);
    accepted = rec.mode == StepMode::plan;
  } catch (const std::exception&) {
    rec.status = SpStatus::infeasible;
  }
  rec.time = time_;
  rec.state = state;
  rec.shifted = shifted;

  if (accepted) {
    accepted_ = rec.plan;
    accepted_stage_ = 0;
    rec.input = rec.plan.U.col(0);
  } else if (accepted_ && accepted_stage_ < int(accepted_->U.cols())) {
    rec.mode = StepMode::hold_previous;
    rec.input = accepted_->U.col(accepted_stage_);
  } else {
    accepted_.reset();
    rec.mode = StepMode::brake;
    rec.input = Eigen::Vector2d(
        std::max(0.0, last_v_ - cfg_.brake_decel * cfg_.control_period), 0.0);
  }

  time_ += cfg_.control_period;
  grid_accum_ += cfg_.control_period;
  last_v_ = rec.input(0);
  return rec;
}

StepRecord GaussianPlanner::plan_step(
    const Eigen::Vector4d& state, const std::vector<ObstacleModel>& obstacles) {
  const auto t0 = Clock::now();
  auto ms_since = [](Clock::time_point t) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t).count();
  };
  StepRecord rec;
  rec.mode = StepMode::brake;
  const int N = cfg_.horizon;
  const int D = int(cfg_.disc_offsets.size());
  for (const auto& m : obstacles) m.validate(cfg_.dt);

  if (!warm_) {
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

  // one tightened halfspace per (stage, obstacle, mixture mode, disc)
  const auto tb = Clock::now();
  std::vector<std::vector<Halfspace>> rows(size_t(N) * size_t(D));
  std::vector<Eigen::Vector2d> witnesses(size_t(N) * size_t(D));
  std::vector<Eigen::Vector2d> means;
  for (int k = 1; k <= N; ++k) {
    for (int d = 0; d < D; ++d) {
      Eigen::Vector2d p_hat = body_point(
          Eigen::Vector4d(warm_->X.col(k - 1).head<4>()),
          cfg_.disc_offsets[size_t(d)]);
      const size_t g = size_t(k - 1) * size_t(D) + size_t(d);
      witnesses[g] = p_hat;
      for (size_t j = 0; j < obstacles.size(); ++j) {
        const ObstacleModel& m = obstacles[j];
        means.clear();
        if (m.kind == ObstacleKind::markov_gmm && !m.crossed) {
          // distinct mode means at stage k: no switch by k, or switch at
          // step s0 = 1..k (switching after k coincides with "not yet")
          const Eigen::Vector2d vpre = m.dir_pre * m.velocity;
          const Eigen::Vector2d vpost = m.dir_post * m.velocity;
          means.push_back(m.position + double(k) * cfg_.dt * vpre);
          for (int s0 = 1; s0 <= k; ++s0) {
            const int npost = k - s0 + 1;
            means.push_back(m.position +
                            cfg_.dt * (double(k - npost) * vpre +
                                       double(npost) * vpost));
          }
        } else {
          means.push_back(marginal_mean(m, k, cfg_.dt));
        }
        const double sx = m.sigma_w.x() * cfg_.dt;
        const double sy = m.sigma_w.y() * cfg_.dt;
        Eigen::Matrix2d Sigma = Eigen::Matrix2d::Zero();
        Sigma(0, 0) = propagate_marginal_variance(0.0, sx * sx, k);
        Sigma(1, 1) = propagate_marginal_variance(0.0, sy * sy, k);
        const double r_comb = cfg_.robot_radius + m.radius;
        for (size_t mi = 0; mi < means.size(); ++mi) {
          Eigen::Vector2d lin = p_hat;
          if ((means[mi] - lin).norm() <= 1e-12)
            lin += Eigen::Vector2d(1e-6, 0.0);  // nudge off the exact mean
          rows[g].push_back(gaussian_baseline_halfspace(
              lin, means[mi], Sigma, r_comb, eps_k_,
              int32_t(j) * 1024 + int32_t(mi), int16_t(j), int16_t(k),
              int16_t(d)));
        }
      }
    }
  }

  const auto reduced = reduce_stagewise(rows, witnesses, cfg_.box_half,
                                        cfg_.max_facets);
  rec.reduce_ms = ms_since(tb);

  std::vector<ReduceResult> center(size_t(N), ReduceResult{});
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
  P.settings.track_support = false;
  P.settings.step_tol = 1e-6;
  P.settings.defect_tol = 1e-6;

  SolveResult res = solve_sp(P);
  rec.solve_ms = res.solve_ms;
  rec.status = res.status;
  rec.plan = res.plan;
  rec.plan.dt = cfg_.dt;
  rec.support = 0;
  rec.removed = int(res.removed.size());
  rec.conflicts = int(res.conflict.size());
  rec.epsilon_bound = 1.0;
  rec.certified = false;

  // the marginal baseline has no discard semantics: a constraint set that
  // empties a stage means the problem is infeasible and the fallback runs
  const bool ok =
      (res.usable() || res.plan_feasible) && res.conflict.empty();
  if (ok) {
    warm_ = rec.plan;
    rec.mode = StepMode::plan;
  }
  rec.total_ms = ms_since(t0);
  return rec;
}

// ------------------------------------------------------------- config -----

void ExperimentConfig::validate() const {
  planner.validate();
  if (repetitions < 1)
    throw std::invalid_argument("experiment: repetitions must be >= 1");
  if (n_mc < 1000)
    throw std::invalid_argument("experiment: n_mc must be >= 1000");
  if (!(time_cap > 0.0))
    throw std::invalid_argument("experiment: time_cap must be > 0");
  if (!(goal_tolerance >= 0.0))
    throw std::invalid_argument("experiment: goal_tolerance must be >= 0");
  if (method == PlanMethod::gaussian &&
      !(baseline_epsilon_k > 0.0 && baseline_epsilon_k < 0.5))
    throw std::invalid_argument(
        "experiment: baseline_epsilon_k must be in (0, 0.5)");
  for (const auto& m : obstacles) m.validate(planner.dt);
}

std::string ExperimentConfig::method_label() const {
  if (method == PlanMethod::scenario)
    return str_fmt("scenario (eps=%g)", planner.risk.epsilon);
  return str_fmt("gaussian (eps_k=%g)", baseline_epsilon_k);
}

std::string to_json_string(const ExperimentConfig& cfg, int indent) {
  return experiment_to_json(cfg).dump(indent);
}

ExperimentConfig experiment_from_json(const std::string& text) {
  return experiment_from_json_obj(json::parse(text));
}

// ------------------------------------------------------------- presets ----

namespace {
ObstacleModel walker(double x, double y, double vx, double vy,
                     double sigma = 0.3, double radius = 0.3) {
  ObstacleModel m;
  m.kind = ObstacleKind::constant_velocity;
  m.position = {x, y};
  m.velocity = {vx, vy};
  m.sigma_w = {sigma, sigma};
  m.radius = radius;
  return m;
}

ObstacleModel crosser(double x, double y, double speed, double cross_sign,
                      double sigma = 0.3, double radius = 0.3) {
  ObstacleModel m;
  m.kind = ObstacleKind::markov_gmm;
  m.position = {x, y};
  m.velocity = {speed, 0.0};
  m.sigma_w = {sigma, sigma};
  m.radius = radius;
  m.dir_pre << 1, 0, 0, 0;  // walk straight along +x
  const double c = 1.0 / std::sqrt(2.0);
  m.dir_post << c, 0, cross_sign * c, 0;  // veer diagonally across the path
  m.crossing_prob = 0.025;
  return m;
}
}  // namespace

ExperimentConfig static_scene() {
  ExperimentConfig c;
  c.name = "static";
  c.planner.waypoints = {{0.0, 0.0}, {12.0, 0.0}};
  ObstacleModel m;
  m.kind = ObstacleKind::random_walk;
  m.position = {6.0, 0.0};
  m.sigma_w = {0.3, 0.3};
  m.radius = 0.3;
  c.obstacles = {m};
  c.time_cap = 15.0;
  return c;
}

ExperimentConfig gauss4_scene() {
  ExperimentConfig c;
  c.name = "gauss4";
  c.planner.waypoints = {{0.0, 0.0}, {8.5, 0.0}};
  c.obstacles = {
      walker(5.0, 2.2, 0.0, -0.55),
      walker(7.0, -2.6, 0.0, 0.60),
      walker(9.5, 0.7, -0.80, -0.15),
      walker(4.0, -1.6, 0.30, 0.40),
  };
  c.time_cap = 20.0;
  return c;
}

ExperimentConfig gauss8_scene() {
  ExperimentConfig c;
  c.name = "gauss8";
  c.planner.waypoints = {{0.0, 0.0}, {18.0, 0.0}};
  c.obstacles = {
      walker(4.5, 2.5, 0.0, -0.60),
      walker(6.5, -3.0, 0.05, 0.65),
      walker(10.0, 1.00, -0.05, -0.02),   // gate, upper
      walker(10.0, -1.05, -0.05, 0.02),   // gate, lower
      walker(8.0, 3.5, 0.0, -0.50),
      walker(13.0, 2.0, -0.30, -0.40),
      walker(15.5, -2.0, -0.40, 0.35),
      walker(16.5, 1.0, -0.70, -0.10),
  };
  c.time_cap = 30.0;
  return c;
}

ExperimentConfig gmm8_scene() {
  ExperimentConfig c;
  c.name = "gmm8";
  c.planner.weights = {0.15, 0.05, 0.005, 0.1};
  c.planner.waypoints = {{0.0, 0.0}, {18.0, 0.0}};
  c.obstacles = {
      crosser(3.0, -0.8, 0.5, +1.0),
      crosser(4.5, 0.6, 0.5, -1.0),
      crosser(6.0, -0.4, 0.5, +1.0),
      crosser(8.0, -1.2, 0.5, +1.0),
      crosser(9.5, 0.9, 0.5, -1.0),
      crosser(11.0, -0.6, 0.5, +1.0),
      crosser(13.0, 0.3, 0.5, -1.0),
      crosser(15.0, -1.0, 0.5, +1.0),
  };
  c.time_cap = 40.0;
  return c;
}

std::vector<std::string> preset_names() {
  return {"static", "gauss4", "gauss8", "gmm8"};
}

ExperimentConfig preset_scene(const std::string& name) {
  if (name == "static") return static_scene();
  if (name == "gauss4") return gauss4_scene();
  if (name == "gauss8") return gauss8_scene();
  if (name == "gmm8") return gmm8_scene();
  throw std::invalid_argument("unknown scene preset: " + name);
}

// --------------------------------------------------------------- results --

int RunResult::planned_steps() const {
  int n = 0;
  for (const auto& s : steps) n += s.mode == StepMode::plan;
  return n;
}

std::string SummaryTable::csv_header() {
  return "Method,Max CPk,CPk Spec.,Max CP,CP Spec.,Dur. [s],Trav. [m],"
         "Min Dist. [m],Collisions,Runtime (Max) [ms],Incomplete";
}

std::string SummaryTable::to_csv() const {
  std::ostringstream out;
  out << csv_header() << "\n";
  for (const auto& r : rows) {
    auto spec = [](double v) {
      return v < 0.0 ? std::string("-") : str_fmt("%.6g", v);
    };
    out << '"' << r.method << '"' << ',' << str_fmt("%.4f", r.max_cp_k) << ','
        << spec(r.cp_k_spec) << ',' << str_fmt("%.4f", r.max_cp) << ','
        << spec(r.cp_spec) << ','
        << str_fmt("\"%.2f (%.2f)\"", r.dur_mean, r.dur_std) << ','
        << str_fmt("\"%.2f (%.2f)\"", r.trav_mean, r.trav_std) << ','
        << str_fmt("\"%.2f (%.2f)\"", r.mind_mean, r.mind_std) << ','
        << r.collisions << ','
        << str_fmt("\"%.1f (%.1f)\"", r.runtime_mean, r.runtime_max) << ','
        << r.incomplete << "\n";
  }
  return out.str();
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  ExperimentResult R;
  R.config = config;
  const int reps = config.repetitions;
  R.runs.resize(size_t(reps));

#pragma omp parallel for schedule(dynamic)
  for (int rep = 0; rep < reps; ++rep) {
    const uint64_t rs =
        derive_seed(config.master_seed, rng_streams::experiment,
                    uint32_t(rep), 0xB007u);
    Simulator sim(config, rep, rs);
    R.runs[size_t(rep)] = sim.run();
  }

  // validate every stored plan (order-independent: seeds keyed by rep/index)
  struct Task { int rep; int idx; };
  std::vector<Task> tasks;
  for (const auto& run : R.runs)
    for (size_t i = 0; i < run.plans.size(); ++i)
      tasks.push_back({run.rep, int(i)});

#pragma omp parallel for schedule(dynamic)
  for (long long ti = 0; ti < (long long)tasks.size(); ++ti) {
    StoredPlan& sp = R.runs[size_t(tasks[ti].rep)].plans[size_t(tasks[ti].idx)];
    const uint64_t ms =
        derive_seed(config.master_seed, rng_streams::mc_validation,
                    uint32_t(tasks[ti].rep), uint32_t(tasks[ti].idx));
    sp.cp = mc_cp_impl(sp.plan, sp.models, config.planner.disc_offsets,
                       config.planner.robot_radius, config.n_mc, ms, false);
    sp.validated = true;
  }

  // aggregate in run/plan order so reruns reproduce bit-identical tables
  std::vector<double> durs, travs, minds, rt;
  double rt_max = 0.0;
  int collided_runs = 0, incomplete = 0;
  for (const auto& run : R.runs) {
    if (run.error.empty()) {
      durs.push_back(run.duration);
      travs.push_back(run.traveled);
      if (std::isfinite(run.min_distance)) minds.push_back(run.min_distance);
    }
    collided_runs += run.collided ? 1 : 0;
    incomplete += run.completed ? 0 : 1;
    for (const auto& s : run.steps) {
      rt.push_back(s.total_ms);
      rt_max = std::max(rt_max, s.total_ms);
    }
    for (const auto& p : run.plans) {
      if (!p.validated) continue;
      ++R.validated_plans;
      if (p.cp.joint > R.max_joint_cp) {
        R.max_joint_cp = p.cp.joint;
        R.max_joint_cp_se = p.cp.joint_se;
      }
      const double mm = p.cp.max_marginal();
      if (mm > R.max_marginal_cp) {
        R.max_marginal_cp = mm;
        const int k = p.cp.max_marginal_stage();
        R.max_marginal_cp_se = k > 0 ? p.cp.marginal_se[size_t(k - 1)] : 0.0;
      }
      if (p.certified && p.cp.joint > p.epsilon_bound + 3.0 * p.cp.joint_se)
        ++R.certificate_violations;
    }
  }

  SummaryRow row;
  row.method = config.method_label();
  row.max_cp_k = R.max_marginal_cp;
  row.max_cp = R.max_joint_cp;
  if (config.method == PlanMethod::scenario)
    row.cp_spec = config.planner.risk.epsilon;
  else
    row.cp_k_spec = config.baseline_epsilon_k;
  row.dur_mean = mean_of(durs);
  row.dur_std = std_of(durs);
  row.trav_mean = mean_of(travs);
  row.trav_std = std_of(travs);
  row.mind_mean = mean_of(minds);
  row.mind_std = std_of(minds);
  row.collisions = collided_runs;
  row.runtime_mean = mean_of(rt);
  row.runtime_max = rt_max;
  row.incomplete = incomplete;
  R.summary.rows = {row};

  if (!config.output_dir.empty()) write_outputs(R);
  return R;
}

std::vector<PlanCheck> validate_plans_file(const std::string& plans_jsonl,
                                           int n_mc, uint64_t seed) {
  std::ifstream f(plans_jsonl);
  if (!f) throw std::runtime_error("cannot open " + plans_jsonl);
  std::vector<PlanCheck> out;
  std::string line;
  uint32_t index = 0;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    PlanCheck pc;
    pc.rep = j.value("rep", 0);
    pc.time = j.value("time", 0.0);
    pc.epsilon_bound = j.value("epsilon_bound", 1.0);
    pc.certified = j.value("certified", false);
    const TrajectoryPlan plan = plan_from_json(j.at("plan"));
    std::vector<ObstacleModel> models;
    for (const auto& e : j.at("obstacles"))
      models.push_back(obstacle_from_json(e));
    std::vector<Eigen::Vector2d> discs;
    for (const auto& e : j.at("disc_offsets")) discs.push_back(v2(e));
    const double rr = j.at("robot_radius").get<double>();
    pc.cp = monte_carlo_cp(plan, models, discs, rr, n_mc,
                           derive_seed(seed, rng_streams::mc_validation,
                                       index, 0xF11Eu));
    pc.violates_certificate =
        pc.certified && pc.cp.joint > pc.epsilon_bound + 3.0 * pc.cp.joint_se;
    out.push_back(std::move(pc));
    ++index;
  }
  return out;
}

// ---------------------------------------------------------------- sweeps --

std::vector<SweepPoint> sensitivity_sweep(const std::string& parameter,
                                          const std::vector<double>& values,
                                          ExperimentConfig base) {
  if (values.empty())
    throw std::invalid_argument("sensitivity_sweep: no values");
  if (parameter != "epsilon" && parameter != "horizon")
    throw std::invalid_argument(
        "sensitivity_sweep: parameter must be \"epsilon\" or \"horizon\"");
  base.repetitions = std::max(base.repetitions, 10);
  base.output_dir.clear();

  std::vector<SweepPoint> out;
  for (double v : values) {
    ExperimentConfig cfg = base;
    if (parameter == "epsilon") {
      cfg.planner.risk.epsilon = v;
      cfg.planner.sample_size = 0;  // re-derive S from the new risk budget
    } else {
      cfg.planner.horizon = int(std::llround(v));
    }
    const ExperimentResult R = run_experiment(cfg);

    SweepPoint pt;
    pt.value = v;
    pt.sample_size =
        cfg.planner.sample_size > 0
            ? cfg.planner.sample_size
            : compute_sample_size(cfg.planner.risk.epsilon,
                                  cfg.planner.risk.beta,
                                  cfg.planner.risk.support_limit);
    pt.max_joint_cp = R.max_joint_cp;
    pt.max_marginal_cp = R.max_marginal_cp;
    std::vector<double> durs, solve, reduce, total;
    for (const auto& run : R.runs) {
      if (run.error.empty()) durs.push_back(run.duration);
      for (const auto& s : run.steps) {
        solve.push_back(s.solve_ms);
        reduce.push_back(s.reduce_ms);
        total.push_back(s.total_ms);
      }
      pt.collisions += run.collided ? 1 : 0;
      pt.incomplete += run.completed ? 0 : 1;
    }
    pt.mean_duration = mean_of(durs);
    pt.solve_ms_mean = mean_of(solve);
    pt.reduce_ms_mean = mean_of(reduce);
    pt.step_ms_mean = mean_of(total);
    out.push_back(pt);
  }
  return out;
}

std::string sweep_csv(const std::string& parameter,
                      const std::vector<SweepPoint>& points) {
  std::ostringstream out;
  out << parameter
      << ",sample_size,max_joint_cp,max_marginal_cp,mean_duration_s,"
         "solve_ms_mean,reduce_ms_mean,step_ms_mean,collisions,incomplete\n";
  for (const auto& p : points) {
    out << str_fmt("%.6g", p.value) << ',' << p.sample_size << ','
        << str_fmt("%.4f", p.max_joint_cp) << ','
        << str_fmt("%.4f", p.max_marginal_cp) << ','
        << str_fmt("%.3f", p.mean_duration) << ','
        << str_fmt("%.3f", p.solve_ms_mean) << ','
        << str_fmt("%.3f", p.reduce_ms_mean) << ','
        << str_fmt("%.3f", p.step_ms_mean) << ',' << p.collisions << ','
        << p.incomplete << "\n";
  }
  return out.str();
}

}  // namespace shmpc
