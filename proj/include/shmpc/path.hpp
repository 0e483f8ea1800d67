#pragma once
// Piecewise-linear reference path with arc-length lookup.
//
// The path is a polyline; queries are by progress s (meters of arc length
// from the first waypoint). Beyond either end the first/last segment is
// extended linearly, so point/tangent/normal are defined for every real s.
// Frames follow the driving direction: tangent t points along increasing s,
// normal n = rot90(t) points to the left of travel.

#include <Eigen/Dense>
#include <vector>

namespace shmpc {

struct PathFrame {
  Eigen::Vector2d point;    // q(s)
  Eigen::Vector2d tangent;  // unit, d q / d s
  Eigen::Vector2d normal;   // unit, left of tangent
  double segment_start = 0.0;  // arc length at the segment's first vertex
  int segment = 0;             // index of the segment containing s
};

class ReferencePath {
 public:
  // Consecutive duplicate waypoints are dropped; at least two distinct
  // waypoints are required.
  explicit ReferencePath(std::vector<Eigen::Vector2d> waypoints);

  double length() const { return cumulative_.back(); }
  PathFrame frame(double s) const;
  Eigen::Vector2d point(double s) const { return frame(s).point; }

  // Arc length of the point on the path closest to p (clamped to [0, L]).
  double closest_progress(const Eigen::Vector2d& p) const;

  const std::vector<Eigen::Vector2d>& waypoints() const { return pts_; }

 private:
  std::vector<Eigen::Vector2d> pts_;
  std::vector<double> cumulative_;  // arc length at each waypoint
};

}  // namespace shmpc
