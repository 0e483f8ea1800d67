#include "shmpc/path.hpp"

#include <algorithm>
#include <stdexcept>

namespace shmpc {

ReferencePath::ReferencePath(std::vector<Eigen::Vector2d> waypoints) {
  for (const auto& w : waypoints)
    if (pts_.empty() || (w - pts_.back()).norm() > 1e-12) pts_.push_back(w);
  if (pts_.size() < 2)
    throw std::invalid_argument("path needs two distinct waypoints");
  cumulative_.resize(pts_.size());
  cumulative_[0] = 0.0;
  for (size_t i = 1; i < pts_.size(); ++i)
    cumulative_[i] = cumulative_[i - 1] + (pts_[i] - pts_[i - 1]).norm();
}

PathFrame ReferencePath::frame(double s) const {
  // segment i covers [cumulative_[i], cumulative_[i+1]); clamp outside ends
  const auto it =
      std::upper_bound(cumulative_.begin(), cumulative_.end(), s);
  int i = int(it - cumulative_.begin()) - 1;
  i = std::clamp(i, 0, int(pts_.size()) - 2);
  const Eigen::Vector2d d = pts_[size_t(i) + 1] - pts_[size_t(i)];
  PathFrame f;
  f.segment = i;
  f.segment_start = cumulative_[size_t(i)];
  f.tangent = d.normalized();
  f.normal = Eigen::Vector2d(-f.tangent.y(), f.tangent.x());
  f.point = pts_[size_t(i)] + (s - f.segment_start) * f.tangent;
  return f;
}

double ReferencePath::closest_progress(const Eigen::Vector2d& p) const {
  double best_s = 0.0;
  double best_d = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i + 1 < pts_.size(); ++i) {
    const Eigen::Vector2d d = pts_[i + 1] - pts_[i];
    const double len = d.norm();
    const double t =
        std::clamp((p - pts_[i]).dot(d) / (len * len), 0.0, 1.0);
    const Eigen::Vector2d q = pts_[i] + t * d;
    const double dist = (p - q).norm();
    if (dist < best_d) {
      best_d = dist;
      best_s = cumulative_[i] + t * len;
    }
  }
  return best_s;
}

}  // namespace shmpc
