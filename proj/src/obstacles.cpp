#include "shmpc/obstacles.hpp"

#include <cmath>
#include <stdexcept>

#include "shmpc/rng.hpp"

namespace shmpc {

namespace {
// Counter tag for the per-(scenario, obstacle) switch draw; ordinary step
// indices stay well below this.
constexpr uint32_t kSwitchDrawTag = 0xFFFFFFFFu;
}  // namespace

void ObstacleModel::validate(double dt) const {
  if (!(dt > 0.0)) throw std::invalid_argument("obstacle: dt must be > 0");
  if (!(radius > 0.0)) throw std::invalid_argument("obstacle: radius must be > 0");
  if (sigma_w.x() < 0.0 || sigma_w.y() < 0.0)
    throw std::invalid_argument("obstacle: sigma_w must be >= 0");
  if (kind == ObstacleKind::markov_gmm &&
      !(crossing_prob >= 0.0 && crossing_prob <= 1.0))
    throw std::invalid_argument("obstacle: crossing_prob must be in [0,1]");
}

void sample_obstacle_path(const ObstacleModel& m, int N, double dt,
                          uint64_t seed, uint32_t stream, uint32_t scenario,
                          uint32_t obstacle, Eigen::Vector2d* out,
                          int32_t* switch_step) {
  int32_t sw = -1;
  if (m.kind == ObstacleKind::markov_gmm) {
    if (m.crossed) {
      sw = 1;  // chain already switched; diagonal from the first step
    } else {
      // Geometric switch step by inversion: smallest j >= 1 with
      // 1 - (1-p)^j >= u; j > N means no switch inside the horizon.
      const double u = uniform(seed, stream, scenario, obstacle, kSwitchDrawTag);
      if (m.crossing_prob >= 1.0) {
        sw = 1;
      } else if (m.crossing_prob <= 0.0) {
        sw = 0;
      } else {
        const double j = std::ceil(std::log1p(-u) / std::log1p(-m.crossing_prob));
        sw = (j > double(N)) ? 0 : int32_t(j);
      }
    }
  }
  if (switch_step) *switch_step = sw;

  Eigen::Vector2d p = m.position;
  for (int k = 0; k < N; ++k) {
    const auto [w1, w2] =
        normal_pair(seed, stream, scenario, obstacle, uint32_t(k));
    const Eigen::Vector2d w(m.sigma_w.x() * w1, m.sigma_w.y() * w2);
    Eigen::Vector2d vel = Eigen::Vector2d::Zero();
    switch (m.kind) {
      case ObstacleKind::random_walk:
        break;
      case ObstacleKind::constant_velocity:
        vel = m.velocity;
        break;
      case ObstacleKind::markov_gmm: {
        const bool diagonal = sw > 0 && (k + 1) >= sw;
        vel = (diagonal ? m.dir_post : m.dir_pre) * m.velocity;
        break;
      }
    }
    p += (vel + w) * dt;
    out[k] = p;
  }
}

ScenarioSet sample_trajectories(const std::vector<ObstacleModel>& models,
                                int S, int N, double dt, uint64_t seed,
                                uint32_t stream) {
  if (S < 1 || N < 1)
    throw std::invalid_argument("sample_trajectories: need S >= 1, N >= 1");
  for (const auto& m : models) m.validate(dt);

  ScenarioSet set;
  set.S = S;
  set.M = int(models.size());
  set.N = N;
  set.dt = dt;
  set.seed = seed;
  set.stream = stream;
  set.pos.resize(size_t(S) * size_t(set.M) * size_t(N));
  set.switch_step.assign(size_t(S) * size_t(set.M), -1);
  set.removed.assign(size_t(S), 0);

#pragma omp parallel for schedule(static)
  for (int s = 0; s < S; ++s) {
    for (int j = 0; j < set.M; ++j) {
      sample_obstacle_path(models[size_t(j)], N, dt, seed, stream, uint32_t(s),
                           uint32_t(j), &set.pos[set.idx(s, j, 0)],
                           &set.switch_step[size_t(s) * size_t(set.M) + size_t(j)]);
    }
  }
  return set;
}

Eigen::Vector2d marginal_mean(const ObstacleModel& m, int k, double dt) {
  switch (m.kind) {
    case ObstacleKind::random_walk:
      return m.position;
    case ObstacleKind::constant_velocity:
      return m.position + double(k) * dt * m.velocity;
    case ObstacleKind::markov_gmm: {
      const Eigen::Matrix2d& B = m.crossed ? m.dir_post : m.dir_pre;
      return m.position + double(k) * dt * (B * m.velocity);
    }
  }
  return m.position;
}

double propagate_marginal_variance(double sigma0_sq, double sigma_step_sq,
                                   int k) {
  if (sigma0_sq < 0.0 || sigma_step_sq < 0.0 || k < 0)
    throw std::invalid_argument("propagate_marginal_variance: negative input");
  return sigma0_sq + double(k) * sigma_step_sq;
}

std::vector<double> gmm_mode_probabilities(double crossing_prob, int N) {
  if (!(crossing_prob >= 0.0 && crossing_prob <= 1.0) || N < 1)
    throw std::invalid_argument("gmm_mode_probabilities: bad input");
  std::vector<double> p(size_t(N) + 1, 0.0);
  double stay = 1.0;
  for (int j = 1; j <= N; ++j) {
    p[size_t(j)] = stay * crossing_prob;
    stay *= 1.0 - crossing_prob;
  }
  p[0] = stay;  // never switches within the horizon
  return p;
}

}  // namespace shmpc
