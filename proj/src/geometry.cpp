#include "shmpc/geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "shmpc/qp.hpp"
#include "shmpc/rng.hpp"

namespace shmpc {

Halfspace linearize_collision(const Eigen::Vector2d& sample,
                              const Eigen::Vector2d& p_hat, double r_comb,
                              int32_t scenario, int16_t obstacle, int16_t step,
                              int16_t disc) {
  const Eigen::Vector2d diff = sample - p_hat;
  const double dist = diff.norm();
  if (dist < 1e-12)
    throw std::domain_error("linearize_collision: sample coincides with linearization point");
  Halfspace h;
  h.a = diff / dist;
  h.b = h.a.dot(sample) - r_comb;
  h.scenario = scenario;
  h.obstacle = obstacle;
  h.step = step;
  h.disc = disc;
  return h;
}

namespace {

// Provenance-based ordering for deterministic tie-breaks.
bool provenance_less(const Halfspace& x, const Halfspace& y) {
  if (x.scenario != y.scenario) return x.scenario < y.scenario;
  if (x.obstacle != y.obstacle) return x.obstacle < y.obstacle;
  if (x.step != y.step) return x.step < y.step;
  return x.disc < y.disc;
}

struct DualPoint {
  Eigen::Vector2d d;
  int src;      // index into the combined halfspace list
  bool is_box;  // box facets never appear in the output
};

// Akl-Toussaint prefilter: a point strictly inside the polygon spanned by
// the extremes along 8 fixed directions cannot be a hull vertex, so it is
// dropped before the O(n log n) sort ever sees it. Only strictly interior
// points are discarded (conservative epsilon), which cannot change the set
// of hull vertices.
void akl_toussaint_filter(std::vector<DualPoint>& pts) {
  const int n = int(pts.size());
  if (n <= 96) return;  // not worth the two extra passes
  std::array<int, 8> ext{};
  std::array<double, 8> best;
  {
    const double x = pts[0].d.x(), y = pts[0].d.y();
    best = {x, x + y, y, y - x, -x, -x - y, -y, x - y};
  }
  for (int i = 1; i < n; ++i) {
    const double x = pts[size_t(i)].d.x(), y = pts[size_t(i)].d.y();
    const double s[8] = {x, x + y, y, y - x, -x, -x - y, -y, x - y};
    for (int d = 0; d < 8; ++d)
      if (s[d] > best[size_t(d)]) {
        best[size_t(d)] = s[d];
        ext[size_t(d)] = i;
      }
  }
  // the direction order is counterclockwise, so the distinct extreme points
  // form a convex polygon in counterclockwise order
  std::array<Eigen::Vector2d, 8> poly;
  int m = 0;
  for (int d = 0; d < 8; ++d) {
    const Eigen::Vector2d& v = pts[size_t(ext[size_t(d)])].d;
    if (m == 0 || poly[size_t(m - 1)] != v) poly[size_t(m++)] = v;
  }
  while (m > 1 && poly[size_t(m - 1)] == poly[0]) --m;
  if (m < 3) return;
  size_t w = 0;
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector2d& p = pts[size_t(i)].d;
    bool inside = true;
    for (int e = 0; e < m && inside; ++e) {
      const Eigen::Vector2d& a = poly[size_t(e)];
      const Eigen::Vector2d u = poly[size_t((e + 1) % m)] - a;
      const Eigen::Vector2d v = p - a;
      const double c = u.x() * v.y() - u.y() * v.x();
      inside = c > 1e-9 * (std::abs(u.x()) + std::abs(u.y())) *
                       (std::abs(v.x()) + std::abs(v.y()));
    }
    if (!inside) pts[w++] = pts[size_t(i)];
  }
  pts.resize(w);
}

// Strict convex hull (Andrew monotone chain); collinear points on hull edges
// are weakly redundant halfspaces and get dropped.
std::vector<int> hull_vertices(std::vector<DualPoint> pts) {
  akl_toussaint_filter(pts);
  std::sort(pts.begin(), pts.end(), [](const DualPoint& p, const DualPoint& q) {
    if (p.d.x() != q.d.x()) return p.d.x() < q.d.x();
    if (p.d.y() != q.d.y()) return p.d.y() < q.d.y();
    return p.src < q.src;
  });
  // exact duplicates: keep the first (smallest provenance after the sort)
  std::vector<DualPoint> uniq;
  uniq.reserve(pts.size());
  for (const auto& p : pts) {
    if (!uniq.empty() && (uniq.back().d - p.d).cwiseAbs().maxCoeff() <
                             1e-12 * (1.0 + p.d.cwiseAbs().maxCoeff()))
      continue;
    uniq.push_back(p);
  }
  const auto cross = [](const DualPoint& o, const DualPoint& a,
                        const DualPoint& b) {
    const Eigen::Vector2d u = a.d - o.d, v = b.d - o.d;
    const double c = u.x() * v.y() - u.y() * v.x();
    const double scale = u.norm() * v.norm();
    return (std::abs(c) <= 1e-12 * scale) ? 0.0 : c;
  };
  const int m = int(uniq.size());
  if (m <= 2) {
    std::vector<int> out;
    for (const auto& p : uniq) out.push_back(p.src);
    return out;
  }
  std::vector<int> h(size_t(2 * m));
  int k = 0;
  for (int i = 0; i < m; ++i) {  // lower
    while (k >= 2 && cross(uniq[size_t(h[size_t(k - 2)])],
                           uniq[size_t(h[size_t(k - 1)])], uniq[size_t(i)]) <= 0)
      --k;
    h[size_t(k++)] = i;
  }
  for (int i = m - 2, lower = k + 1; i >= 0; --i) {  // upper
    while (k >= lower && cross(uniq[size_t(h[size_t(k - 2)])],
                               uniq[size_t(h[size_t(k - 1)])], uniq[size_t(i)]) <= 0)
      --k;
    h[size_t(k++)] = i;
  }
  std::vector<int> out;
  out.reserve(size_t(k - 1));
  for (int i = 0; i < k - 1; ++i) out.push_back(uniq[size_t(h[size_t(i)])].src);
  return out;
}

}  // namespace

std::pair<Eigen::Vector2d, double> max_margin_point(
    std::span<const Halfspace> halfspaces, const Box2& box,
    std::vector<Halfspace>* blocking) {
  // max t  s.t.  a.p + t <= b for every halfspace and box facet,
  // regularized to an SPD QP in (px, py, t).
  const auto boxf = box.facets();
  const int m = int(halfspaces.size()) + 4;
  QpProblem qp;
  qp.G = 1e-8 * Eigen::Matrix3d::Identity();
  qp.g = Eigen::Vector3d(0, 0, -1);
  qp.Ain.resize(m, 3);
  qp.bin.resize(m);
  for (int i = 0; i < int(halfspaces.size()); ++i) {
    qp.Ain.row(i) << halfspaces[size_t(i)].a.transpose(), 1.0;
    qp.bin(i) = halfspaces[size_t(i)].b;
  }
  for (int i = 0; i < 4; ++i) {
    qp.Ain.row(int(halfspaces.size()) + i) << boxf[size_t(i)].a.transpose(), 1.0;
    qp.bin(int(halfspaces.size()) + i) = boxf[size_t(i)].b;
  }
  const auto res = solve_qp(qp, 1e-9);
  if (res.status != QpStatus::optimal)
    return {0.5 * (box.lo + box.hi), -std::numeric_limits<double>::infinity()};
  const Eigen::Vector2d p(res.x(0), res.x(1));
  const double t = res.x(2);
  if (blocking && t <= 0.0) {
    blocking->clear();
    for (int id : res.working_set)
      if (id < int(halfspaces.size()) && res.ineq_duals(id) > 1e-12)
        blocking->push_back(halfspaces[size_t(id)]);
  }
  return {p, t};
}

ReduceResult reduce_polytope(std::span<const Halfspace> halfspaces,
                             const Eigen::Vector2d& witness, const Box2& box,
                             int max_facets) {
  if (max_facets < 3)
    throw std::invalid_argument("reduce_polytope: max_facets must be >= 3");
  ReduceResult out;
  out.poly.box = box;

  Eigen::Vector2d z = witness;
  bool strict = box.contains(z, -1e-12);
  if (strict)
    for (const auto& h : halfspaces)
      if (h.margin(z) <= 1e-12) {
        strict = false;
        break;
      }
  if (!strict) {
    auto [p, t] = max_margin_point(halfspaces, box, &out.blocking);
    if (t <= 1e-12) {
      out.feasible = false;
      return out;
    }
    z = p;
  }
  out.feasible = true;
  out.witness = z;

  // Combined list: scenario halfspaces then box facets, dual points a/m.
  std::vector<DualPoint> dual;
  dual.reserve(halfspaces.size() + 4);
  std::vector<const Halfspace*> src;
  src.reserve(halfspaces.size() + 4);
  for (const auto& h : halfspaces) {
    const double m = h.margin(z);
    dual.push_back({h.a / m, int(src.size()), false});
    src.push_back(&h);
  }
  const auto boxf = box.facets();
  for (int i = 0; i < 4; ++i) {
    const double m = boxf[size_t(i)].margin(z);
    dual.push_back({boxf[size_t(i)].a / m, int(src.size()), true});
    src.push_back(&boxf[size_t(i)]);
  }
  const size_t n_scen = halfspaces.size();

  const auto verts = hull_vertices(std::move(dual));
  std::vector<Halfspace> kept;
  for (int v : verts)
    if (size_t(v) < n_scen) kept.push_back(*src[size_t(v)]);

  if (int(kept.size()) > max_facets) {
    // keep the most binding facets at the witness
    std::sort(kept.begin(), kept.end(), [&](const Halfspace& x, const Halfspace& y) {
      const double mx = x.margin(z), my = y.margin(z);
      if (mx != my) return mx < my;
      return provenance_less(x, y);
    });
    kept.resize(size_t(max_facets));
    out.poly.truncated = true;
  }
  // deterministic facet order: by provenance
  std::sort(kept.begin(), kept.end(), provenance_less);
  out.poly.facets = std::move(kept);
  return out;
}

std::vector<ReduceResult> reduce_stagewise(
    const std::vector<std::vector<Halfspace>>& stages,
    const std::vector<Eigen::Vector2d>& witnesses, double box_half,
    int max_facets) {
  if (stages.size() != witnesses.size())
    throw std::invalid_argument("reduce_stagewise: size mismatch");
  std::vector<ReduceResult> out(stages.size());
#pragma omp parallel for schedule(static)
  for (int k = 0; k < int(stages.size()); ++k) {
    out[size_t(k)] = reduce_polytope(
        stages[size_t(k)], witnesses[size_t(k)],
        Box2::centered(witnesses[size_t(k)], box_half), max_facets);
  }
  return out;
}

bool is_redundant_pair(const Halfspace& keeper, const Halfspace& candidate,
                       const Box2& box) {
  // max candidate.a . p over {box & keeper} via clipping the box rectangle.
  std::vector<Eigen::Vector2d> poly = {box.lo,
                                       {box.hi.x(), box.lo.y()},
                                       box.hi,
                                       {box.lo.x(), box.hi.y()}};
  std::vector<Eigen::Vector2d> clipped;
  for (size_t i = 0; i < poly.size(); ++i) {
    const Eigen::Vector2d& p = poly[i];
    const Eigen::Vector2d& q = poly[(i + 1) % poly.size()];
    const double mp = keeper.margin(p), mq = keeper.margin(q);
    if (mp >= 0) clipped.push_back(p);
    if ((mp > 0 && mq < 0) || (mp < 0 && mq > 0))
      clipped.push_back(p + (mp / (mp - mq)) * (q - p));
  }
  if (clipped.empty()) return true;  // keeper empties the box
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& v : clipped) best = std::max(best, candidate.a.dot(v));
  return best <= candidate.b + 1e-12;
}

std::vector<double> redundancy_experiment(const ObstacleModel& model,
                                          const Eigen::Vector2d& p_hat,
                                          double r_comb, double dt,
                                          const std::vector<int>& S_values,
                                          int trials, uint64_t seed) {
  std::vector<double> fraction;
  fraction.reserve(S_values.size());
  const Box2 box = Box2::centered(p_hat, 10.0);
  for (size_t si = 0; si < S_values.size(); ++si) {
    const int S = S_values[si];
    int zero_redundant = 0;
#pragma omp parallel for schedule(dynamic) reduction(+ : zero_redundant)
    for (int trial = 0; trial < trials; ++trial) {
      std::vector<Halfspace> hs(static_cast<size_t>(S));
      for (int s = 0; s < S; ++s) {
        Eigen::Vector2d pos;
        sample_obstacle_path(model, 1, dt, seed,
                             rng_streams::tests + uint32_t(si),
                             uint32_t(trial) * 100000u + uint32_t(s), 0, &pos,
                             nullptr);
        hs[size_t(s)] = linearize_collision(pos, p_hat, r_comb, s, 0, 1);
      }
      bool any = false;
      for (int i = 0; i < S && !any; ++i)
        for (int j = 0; j < S && !any; ++j)
          if (i != j && is_redundant_pair(hs[size_t(i)], hs[size_t(j)], box))
            any = true;
      if (!any) ++zero_redundant;
    }
    fraction.push_back(double(zero_redundant) / double(trials));
  }
  return fraction;
}

}  // namespace shmpc
