#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <vector>

namespace lsd {

using PointCloud = Eigen::Matrix<double, 3, Eigen::Dynamic>;

struct TrackObservation {
  int frame_id = 0;
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
};

/// Pixel observations of one landmark. Frame ids are strictly increasing.
struct FeatureTrack {
  std::int64_t track_id = 0;
  std::vector<TrackObservation> observations;
  std::optional<Eigen::Vector3d> triangulated_point;

  const TrackObservation* in_frame(int frame_id) const;
};

}  // namespace lsd
