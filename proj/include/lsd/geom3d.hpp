#pragma once

#include "lsd/camera.hpp"
#include "lsd/track.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <vector>

namespace lsd {

struct Triangulation {
  Eigen::Vector3d point = Eigen::Vector3d::Zero();
  double residual = 0.0;  // RMS point-to-ray distance (m)
  bool degenerate = true;
};

/// Linear midpoint triangulation over all observation rays. `poses` is indexed by
/// frame id. Flagged degenerate when the widest camera baseline is below
/// `min_baseline_ratio` times the mean depth, or the normal equations are singular.
Triangulation triangulate(const FeatureTrack& track, std::span<const Pose> poses, const CameraModel& camera,
                          double min_baseline_ratio = 0.01);

struct DepthQueryConfig {
  int n = 5;
  int min_track_length = 3;
  double idw_power = 1.0;
  double epsilon = 1e-9;
  double min_baseline_ratio = 0.01;

  void validate() const;
};

/// Incrementally filled track table with a per-frame index and cached triangulations.
class TrackStore {
 public:
  TrackStore() = default;
  explicit TrackStore(std::vector<FeatureTrack> tracks);

  /// Appends an observation; frame ids must increase within a track.
  void add_observation(std::int64_t track_id, int frame_id, const Eigen::Vector2d& pixel);

  /// Re-triangulates tracks whose observation count changed since the last refresh.
  void refresh(std::span<const Pose> poses, const CameraModel& camera, const DepthQueryConfig& cfg);

  const std::vector<FeatureTrack>& tracks() const { return tracks_; }
  /// Indices into tracks() of tracks observed in `frame_id`.
  std::span<const std::size_t> in_frame(int frame_id) const;

 private:
  std::vector<FeatureTrack> tracks_;
  std::vector<std::size_t> refreshed_at_;  // observation count at the last refresh
  std::unordered_map<std::int64_t, std::size_t> by_id_;
  std::unordered_map<int, std::vector<std::size_t>> by_frame_;
};

/// IDW terrain height at `query_px` of frame `frame_id` from the `cfg.n` usable tracks
/// whose observation in that frame is nearest in pixels. Tracks with a cached
/// triangulated_point use it; others are triangulated on the fly. nullopt when no
/// usable track is observed in the frame.
std::optional<double> coarse_depth(const Eigen::Vector2d& query_px, int frame_id, std::span<const FeatureTrack> tracks,
                                   std::span<const Pose> poses, const CameraModel& camera, const DepthQueryConfig& cfg);

std::optional<double> coarse_depth(const Eigen::Vector2d& query_px, int frame_id, const TrackStore& store,
                                   const DepthQueryConfig& cfg);

/// Intersection of the viewing ray through `px` with the plane z = ground_z; nullopt
/// when the ray is parallel to the plane or meets it behind the camera.
std::optional<Eigen::Vector3d> project_to_ground(const Eigen::Vector2d& px, const Pose& pose, const CameraModel& camera,
                                                 double ground_z);

// ---------------------------------------------------------------------------
// Planar geometry, templated on the scalar type.

template <typename T>
using Point2 = Eigen::Matrix<T, 2, 1>;

template <typename T>
T cross2(const Point2<T>& a, const Point2<T>& b) {
  return a.x() * b.y() - a.y() * b.x();
}

/// Signed shoelace area; positive for counter-clockwise vertex order.
template <typename T>
T polygon_area(std::span<const Point2<T>> poly) {
  T twice = 0;
  for (std::size_t i = 0, n = poly.size(); i < n; ++i) twice += cross2<T>(poly[i], poly[(i + 1) % n]);
  return twice / 2;
}

/// Andrew's monotone chain; counter-clockwise, collinear points dropped.
template <typename T>
std::vector<Point2<T>> convex_hull(std::span<const Point2<T>> points) {
  std::vector<Point2<T>> p(points.begin(), points.end());
  std::sort(p.begin(), p.end(), [](const Point2<T>& a, const Point2<T>& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  p.erase(std::unique(p.begin(), p.end()), p.end());
  if (p.size() < 3) return p;
  std::vector<Point2<T>> h(2 * p.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    while (k >= 2 && cross2<T>(h[k - 1] - h[k - 2], p[i] - h[k - 2]) <= 0) --k;
    h[k++] = p[i];
  }
  for (std::size_t i = p.size() - 1, t = k + 1; i > 0; --i) {
    while (k >= t && cross2<T>(h[k - 1] - h[k - 2], p[i - 1] - h[k - 2]) <= 0) --k;
    h[k++] = p[i - 1];
  }
  h.resize(k - 1);
  return h;
}

/// Minimum-area enclosing rectangle by rotating calipers over the convex hull.
/// One side is collinear with a hull edge; corners are counter-clockwise.
template <typename T>
std::array<Point2<T>, 4> min_area_rect(std::span<const Point2<T>> points) {
  const auto hull = convex_hull<T>(points);
  const std::size_t n = hull.size();
  if (n < 3) throw std::invalid_argument("min_area_rect needs three non-collinear points");
  auto next = [n](std::size_t i) { return (i + 1) % n; };

  std::array<Point2<T>, 4> best;
  T best_area = std::numeric_limits<T>::infinity();
  std::size_t right = 0, top = 0, left = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Point2<T> e = (hull[next(i)] - hull[i]).normalized();
    const Point2<T> nrm(-e.y(), e.x());
    auto along = [&](std::size_t j) { return (hull[j] - hull[i]).dot(e); };
    auto up = [&](std::size_t j) { return (hull[j] - hull[i]).dot(nrm); };
    if (i == 0) {
      for (std::size_t j = 0; j < n; ++j) {
        if (along(j) > along(right)) right = j;
        if (up(j) > up(top)) top = j;
        if (along(j) < along(left)) left = j;
      }
    } else {
      for (std::size_t s = 0; s < n && along(next(right)) >= along(right); ++s) right = next(right);
      for (std::size_t s = 0; s < n && up(next(top)) >= up(top); ++s) top = next(top);
      for (std::size_t s = 0; s < n && along(next(left)) <= along(left); ++s) left = next(left);
    }
    const T a = along(left);
    const T b = along(right);
    const T h = up(top);
    const T area = (b - a) * h;
    if (area < best_area) {
      best_area = area;
      best = {hull[i] + a * e, hull[i] + b * e, hull[i] + b * e + h * nrm, hull[i] + a * e + h * nrm};
    }
  }
  return best;
}

/// Winding-number point-in-polygon; points on the boundary count as inside.
template <typename T>
bool winding_inside(const Point2<T>& p, std::span<const Point2<T>> poly) {
  const std::size_t n = poly.size();
  if (n < 3) throw std::invalid_argument("winding_inside needs a polygon with >= 3 vertices");
  T scale = 0;
  for (const auto& v : poly) scale = std::max(scale, (v - p).cwiseAbs().maxCoeff());
  const T tol = scale * T(64) * std::numeric_limits<T>::epsilon();
  int wn = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Point2<T>& a = poly[i];
    const Point2<T>& b = poly[(i + 1) % n];
    const T side = cross2<T>(b - a, p - a);
    const T len = (b - a).norm();
    if (std::abs(side) <= tol * std::max(len, T(1)) && (p - a).dot(b - a) >= -tol * len &&
        (p - b).dot(a - b) >= -tol * len)
      return true;
    if (a.y() <= p.y()) {
      if (b.y() > p.y() && side > 0) ++wn;
    } else if (b.y() <= p.y() && side < 0) {
      --wn;
    }
  }
  return wn != 0;
}

// ---------------------------------------------------------------------------

/// Keyframes among `frames` (ascending ids; `poses` indexed by frame id). The first
/// frame is a keyframe. Scanning forward, when the number of tracks seen in both the
/// current keyframe and a frame first drops below `min_connections`, the preceding
/// frame becomes the next keyframe if its camera is at least `min_baseline` from the
/// current keyframe; otherwise selection stops. When connectivity drops at the frame
/// right after the keyframe, that frame itself is the candidate.
std::vector<int> select_keyframes(std::span<const FeatureTrack> tracks, std::span<const int> frames,
                                  std::span<const Pose> poses, double min_baseline, int min_connections = 30);

/// All frames 0..poses.size()-1.
std::vector<int> select_keyframes(std::span<const FeatureTrack> tracks, std::span<const Pose> poses,
                                  double min_baseline, int min_connections = 30);

}  // namespace lsd
