#pragma once
// Serial reference implementations of the OpenMP kernels. Plain loops, no
// pragmas; tests assert bit-identical results, bench_kernels compares wall
// time. Keep these boring.

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "shmpc/geometry.hpp"
#include "shmpc/harness.hpp"
#include "shmpc/obstacles.hpp"

namespace shmpc::reference {

ScenarioSet sample_trajectories(const std::vector<ObstacleModel>& models,
                                int S, int N, double dt, uint64_t seed,
                                uint32_t stream);

// Reduce each stage list independently; serial twin of
// shmpc::reduce_stagewise.
std::vector<ReduceResult> reduce_stagewise(
    const std::vector<std::vector<Halfspace>>& stages,
    const std::vector<Eigen::Vector2d>& witnesses, double box_half,
    int max_facets);

// Serial twin of shmpc::monte_carlo_cp.
CpEstimate monte_carlo_cp(const TrajectoryPlan& plan,
                          const std::vector<ObstacleModel>& models,
                          const std::vector<Eigen::Vector2d>& disc_offsets,
                          double robot_radius, int n_mc, uint64_t seed);

}  // namespace shmpc::reference
