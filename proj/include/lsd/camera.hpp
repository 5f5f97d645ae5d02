#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <optional>
#include <stdexcept>

namespace lsd {

/// Pinhole intrinsics. Pixel (u, v) = (column, row); integer coordinates are pixel centers.
struct CameraModel {
  double fx = 450.0;
  double fy = 450.0;
  double cx = 375.5;
  double cy = 239.5;
  int width = 752;
  int height = 480;

  void validate() const {
    if (!(fx > 0 && fy > 0)) throw std::invalid_argument("camera focal lengths must be positive");
    if (!(cx > 0 && cx < width && cy > 0 && cy < height))
      throw std::invalid_argument("camera principal point outside the image");
  }

  /// Same field of view at a different resolution.
  CameraModel scaled(double factor) const {
    CameraModel c;
    c.width = static_cast<int>(std::lround(width * factor));
    c.height = static_cast<int>(std::lround(height * factor));
    c.fx = fx * factor;
    c.fy = fy * factor;
    c.cx = (cx + 0.5) * factor - 0.5;
    c.cy = (cy + 0.5) * factor - 0.5;
    return c;
  }

  bool contains(const Eigen::Vector2d& px) const {
    return px.x() >= -0.5 && px.y() >= -0.5 && px.x() < width - 0.5 && px.y() < height - 0.5;
  }
};

/// Camera pose in the world frame (x east, y north, z up). The orientation rotates
/// camera-frame vectors (x right, y down, z along the optical axis) into the world.
struct Pose {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();
};

/// Downward-looking orientation; image "up" points along the heading `yaw`
/// (radians from +x), tilted forward by `pitch` radians.
inline Eigen::Quaterniond nadir_orientation(double yaw, double pitch = 0.0) {
  const Eigen::Vector3d fwd(std::cos(yaw), std::sin(yaw), 0.0);
  const Eigen::Vector3d right(std::sin(yaw), -std::cos(yaw), 0.0);
  Eigen::Matrix3d r;
  r.col(0) = right;
  r.col(1) = -fwd;
  r.col(2) = Eigen::Vector3d(0, 0, -1);
  const Eigen::AngleAxisd tilt(pitch, right);
  return Eigen::Quaterniond(tilt.toRotationMatrix() * r).normalized();
}

/// World point to pixel; nullopt when the point is not in front of the camera.
inline std::optional<Eigen::Vector2d> project(const CameraModel& cam, const Pose& pose,
                                              const Eigen::Vector3d& world) {
  const Eigen::Vector3d pc = pose.orientation.conjugate() * (world - pose.position);
  if (pc.z() <= 1e-9) return std::nullopt;
  return Eigen::Vector2d(cam.fx * pc.x() / pc.z() + cam.cx, cam.fy * pc.y() / pc.z() + cam.cy);
}

/// Unit viewing-ray direction in the world frame.
inline Eigen::Vector3d ray_direction(const CameraModel& cam, const Pose& pose, const Eigen::Vector2d& px) {
  const Eigen::Vector3d dc((px.x() - cam.cx) / cam.fx, (px.y() - cam.cy) / cam.fy, 1.0);
  return (pose.orientation * dc).normalized();
}

}  // namespace lsd
