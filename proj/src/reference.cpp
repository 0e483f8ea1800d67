#include "shmpc/reference.hpp"

namespace shmpc::reference {

ScenarioSet sample_trajectories(const std::vector<ObstacleModel>& models,
                                int S, int N, double dt, uint64_t seed,
                                uint32_t stream) {
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
  for (int s = 0; s < S; ++s)
    for (int j = 0; j < set.M; ++j)
      sample_obstacle_path(models[size_t(j)], N, dt, seed, stream, uint32_t(s),
                           uint32_t(j), &set.pos[set.idx(s, j, 0)],
                           &set.switch_step[size_t(s) * size_t(set.M) + size_t(j)]);
  return set;
}

std::vector<ReduceResult> reduce_stagewise(
    const std::vector<std::vector<Halfspace>>& stages,
    const std::vector<Eigen::Vector2d>& witnesses, double box_half,
    int max_facets) {
  std::vector<ReduceResult> out(stages.size());
  for (size_t k = 0; k < stages.size(); ++k)
    out[k] = reduce_polytope(stages[k], witnesses[k],
                             Box2::centered(witnesses[k], box_half), max_facets);
  return out;
}

}  // namespace shmpc::reference
