#pragma once
// Collision constraint geometry.
//
// A sampled obstacle position delta with combined radius r is kept away from
// a point p by the halfspace tangent to the disc, linearized about p_hat:
//
//   a = (delta - p_hat) / |delta - p_hat|,   a.p <= a.delta - r.
//
// Per stage the S*M halfspaces are cut down to the non-redundant facets of
// their intersection (clipped to a bounding box) via point/halfspace
// duality: translate a strictly interior point to the origin, map each
// halfspace a.p <= b (b > 0) to the dual point a/b, and take the convex
// hull; hull vertices correspond one-to-one to non-redundant facets.
// Each halfspace carries provenance (scenario, obstacle, step, disc) so the
// solver can attribute active facets to scenarios.

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "shmpc/obstacles.hpp"

namespace shmpc {

struct Halfspace {
  Eigen::Vector2d a;  // unit outward normal
  double b = 0.0;     // offset, constraint a.p <= b
  int32_t scenario = -1;
  int16_t obstacle = -1;
  int16_t step = -1;
  int16_t disc = 0;

  double margin(const Eigen::Vector2d& p) const { return b - a.dot(p); }
};

struct Box2 {
  Eigen::Vector2d lo{-10.0, -10.0};
  Eigen::Vector2d hi{10.0, 10.0};

  static Box2 centered(const Eigen::Vector2d& c, double half) {
    return {c - Eigen::Vector2d(half, half), c + Eigen::Vector2d(half, half)};
  }
  bool contains(const Eigen::Vector2d& p, double tol = 0.0) const {
    return p.x() >= lo.x() - tol && p.x() <= hi.x() + tol &&
           p.y() >= lo.y() - tol && p.y() <= hi.y() + tol;
  }
  std::array<Halfspace, 4> facets() const {
    return {Halfspace{{1, 0}, hi.x()}, Halfspace{{-1, 0}, -lo.x()},
            Halfspace{{0, 1}, hi.y()}, Halfspace{{0, -1}, -lo.y()}};
  }
};

struct Polytope {
  std::vector<Halfspace> facets;  // non-redundant, box facets excluded
  Box2 box;
  bool truncated = false;  // facet cap was hit; some facets were dropped

  bool contains(const Eigen::Vector2d& p, double tol = 1e-9) const {
    if (!box.contains(p, tol)) return false;
    for (const auto& h : facets)
      if (h.margin(p) < -tol) return false;
    return true;
  }
};

struct ReduceResult {
  bool feasible = false;
  Polytope poly;
  Eigen::Vector2d witness = Eigen::Vector2d::Zero();  // strictly interior
  std::vector<Halfspace> blocking;  // certificate when infeasible
};

// Tangent halfspace separating p_hat's side from the disc at sample.
// Throws std::domain_error when |sample - p_hat| is numerically zero (the
// direction is undefined).
Halfspace linearize_collision(const Eigen::Vector2d& sample,
                              const Eigen::Vector2d& p_hat, double r_comb,
                              int32_t scenario, int16_t obstacle, int16_t step,
                              int16_t disc = 0);

// Non-redundant facets of the intersection of halfspaces and box.
// `witness` should be strictly feasible; if it is not, a max-margin center
// is computed first, and an empty interior yields feasible = false with a
// blocking certificate. At most max_facets facets are returned (smallest
// slack at the witness wins, ties by provenance); overflow sets truncated.
ReduceResult reduce_polytope(std::span<const Halfspace> halfspaces,
                             const Eigen::Vector2d& witness, const Box2& box,
                             int max_facets);

// OpenMP-parallel per-stage reduction (stages are independent).
std::vector<ReduceResult> reduce_stagewise(
    const std::vector<std::vector<Halfspace>>& stages,
    const std::vector<Eigen::Vector2d>& witnesses, double box_half,
    int max_facets);

// Chebyshev-style max-margin point of halfspaces within box.
// Returns (point, margin); margin <= 0 means empty interior. When blocking
// is non-null and the margin is <= 0 it receives the facets whose duals
// certify the emptiness.
std::pair<Eigen::Vector2d, double> max_margin_point(
    std::span<const Halfspace> halfspaces, const Box2& box,
    std::vector<Halfspace>* blocking = nullptr);

// True when `candidate` is implied by `keeper` within the box:
// {box & keeper} subset of {candidate}.
bool is_redundant_pair(const Halfspace& keeper, const Halfspace& candidate,
                       const Box2& box);

// Fraction of trials in which no sampled halfspace is implied by another,
// for a single-step sampling of `model` at grid step dt linearized about
// p_hat, per sample count in S_values. Decays toward zero as S grows.
std::vector<double> redundancy_experiment(const ObstacleModel& model,
                                          const Eigen::Vector2d& p_hat,
                                          double r_comb, double dt,
                                          const std::vector<int>& S_values,
                                          int trials, uint64_t seed);

}  // namespace shmpc
