#pragma once
// Obstacle motion models and joint scenario sampling.
//
// All models evolve 2-D positions on the planning grid with step dt:
//   random walk        delta_{k+1} = delta_k + w_k dt
//   constant velocity  delta_{k+1} = delta_k + (v + w_k) dt
//   markov gmm         delta_{k+1} = delta_k + (B_k v + w_k) dt
// with w_k ~ N(0, diag(sigma_w)^2) white. The markov variant starts with
// direction matrix B_pre and switches once, permanently, to B_post with
// probability crossing_prob at each step; over a horizon N this yields an
// (N+1)-mode mixture (switch at step 1..N, or never).
//
// A scenario is one joint realization of all obstacles over the horizon.
// Draws are keyed by (seed, stream, scenario, obstacle, step) so sampling is
// embarrassingly parallel and bit-reproducible.

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace shmpc {

enum class ObstacleKind { random_walk, constant_velocity, markov_gmm };

struct ObstacleModel {
  ObstacleKind kind = ObstacleKind::random_walk;
  Eigen::Vector2d position = Eigen::Vector2d::Zero();  // current position
  Eigen::Vector2d velocity = Eigen::Vector2d::Zero();  // mean velocity (m/s)
  Eigen::Vector2d sigma_w = Eigen::Vector2d::Zero();   // noise std (m/s)
  double radius = 0.3;

  // markov_gmm only:
  Eigen::Matrix2d dir_pre = Eigen::Matrix2d::Identity();   // B before switch
  Eigen::Matrix2d dir_post = Eigen::Matrix2d::Identity();  // B after switch
  double crossing_prob = 0.025;  // switch probability per step
  bool crossed = false;          // chain state carried between plans

  void validate(double dt) const;
};

// Joint obstacle trajectories for S scenarios over N steps.
// pos is laid out scenario-major: idx(s, j, k) for step k+1 of obstacle j.
struct ScenarioSet {
  int S = 0, M = 0, N = 0;
  double dt = 0.0;
  uint64_t seed = 0;
  uint32_t stream = 0;
  std::vector<Eigen::Vector2d> pos;   // S*M*N
  std::vector<int32_t> switch_step;   // S*M; 1..N, 0 = never, -1 = n/a
  std::vector<uint8_t> removed;       // S flags, set by the solver

  size_t idx(int s, int j, int k) const {
    return (size_t(s) * size_t(M) + size_t(j)) * size_t(N) + size_t(k);
  }
  const Eigen::Vector2d& at(int s, int j, int k) const {
    return pos[idx(s, j, k)];
  }
  int removed_count() const {
    int c = 0;
    for (uint8_t f : removed) c += f != 0;
    return c;
  }
};

// Sample one scenario of one obstacle into out[0..N-1] (steps 1..N).
// Shared by the parallel kernel, the serial reference and the simulator.
void sample_obstacle_path(const ObstacleModel& m, int N, double dt,
                          uint64_t seed, uint32_t stream, uint32_t scenario,
                          uint32_t obstacle, Eigen::Vector2d* out,
                          int32_t* switch_step);

// OpenMP-parallel over scenarios.
ScenarioSet sample_trajectories(const std::vector<ObstacleModel>& models,
                                int S, int N, double dt, uint64_t seed,
                                uint32_t stream);

// Mean position after k steps (k >= 0). Mixture models require the chain
// state to be resolved (crossed == true) or return the pre-switch mean.
Eigen::Vector2d marginal_mean(const ObstacleModel& m, int k, double dt);

// One-axis marginal variance after k steps given per-step noise variance:
// sigma_k^2 = sigma_0^2 + k sigma_step^2. Callers pass sigma_step = sigma_w*dt.
double propagate_marginal_variance(double sigma0_sq, double sigma_step_sq,
                                   int k);

// Switch-step distribution over a horizon of N steps: index j = 1..N is
// P(switch at step j) = (1-p)^(j-1) p, index 0 is P(never) = (1-p)^N.
std::vector<double> gmm_mode_probabilities(double crossing_prob, int N);

}  // namespace shmpc
