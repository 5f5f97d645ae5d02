#pragma once

#include "lsd/camera.hpp"
#include "lsd/image.hpp"
#include "lsd/track.hpp"

#include <Eigen/Geometry>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lsd {

enum class Label : std::uint8_t { grass = 0, crop = 1, forest = 2, building = 3, road = 4 };

std::string_view label_name(Label label);
Label label_from_name(std::string_view name);

/// Axis-aligned area of the scene overriding the background. Buildings and forest
/// canopies raise the ground by `height` (0 selects the label default); `slope`
/// tilts the patch ground along `slope_dir`, rising from the patch's lowest corner.
struct Patch {
  Label label = Label::grass;
  Eigen::AlignedBox2d area;
  double height = 0.0;
  double slope = 0.0;
  Eigen::Vector2d slope_dir = Eigen::Vector2d::UnitX();
};

/// Lawn-mower scan: lines parallel to x across `coverage`, stepping `line_spacing` in y.
struct FlightSpec {
  double altitude_agl = 100.0;
  Eigen::AlignedBox2d coverage{Eigen::Vector2d(0, 0), Eigen::Vector2d(0, 0)};
  double line_spacing = 60.0;
  double frame_spacing = 15.0;
  double speed = 16.0;
  double pitch = 0.0;
};

/// True wind rotates at `rotation_rate` rad/s; measurements add isotropic Gaussian noise.
struct WindSpec {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  double rotation_rate = 0.0;
  double noise_sigma = 0.3;
};

struct SceneSpec {
  int rows = 300;
  int cols = 300;
  double resolution = 1.0;
  std::uint64_t seed = 1;
  Label background = Label::grass;
  double base_elevation = 0.0;
  std::vector<Patch> patches;
  /// Scales all procedural color variation; 0 renders each label as a flat color.
  double texture_noise = 1.0;
  /// Single ambient lighting factor applied to every color.
  double ambient = 1.0;
  FlightSpec flight;
  WindSpec wind;
  CameraModel camera;

  void validate() const;
  Eigen::Vector2d extent() const { return {cols * resolution, rows * resolution}; }
};

/// Heightfield with labels and per-cell texture. Cell (r, c) is centered at
/// origin + (c, r) * resolution.
class Terrain {
 public:
  double resolution = 1.0;
  Eigen::Vector2d origin = Eigen::Vector2d::Zero();
  Grid elevation;
  Plane<std::uint8_t> semantic;
  std::array<Plane<float>, 3> texture;

  Eigen::Index rows() const { return elevation.rows(); }
  Eigen::Index cols() const { return elevation.cols(); }

  Eigen::Vector2d cell_center(Eigen::Index row, Eigen::Index col) const {
    return origin + Eigen::Vector2d(static_cast<double>(col), static_cast<double>(row)) * resolution;
  }
  bool contains(const Eigen::Vector2d& xy) const;

  /// Bilinear elevation; clamps to the border cells outside the grid.
  double height_at(const Eigen::Vector2d& xy) const {
    const double fx = (xy.x() - origin.x()) / resolution;
    const double fy = (xy.y() - origin.y()) / resolution;
    const double cx = std::clamp(fx, 0.0, static_cast<double>(cols() - 1));
    const double cy = std::clamp(fy, 0.0, static_cast<double>(rows() - 1));
    const auto c0 = std::min(static_cast<Eigen::Index>(cx), cols() - 2 < 0 ? 0 : cols() - 2);
    const auto r0 = std::min(static_cast<Eigen::Index>(cy), rows() - 2 < 0 ? 0 : rows() - 2);
    const auto c1 = std::min(c0 + 1, cols() - 1);
    const auto r1 = std::min(r0 + 1, rows() - 1);
    const double tx = cx - static_cast<double>(c0);
    const double ty = cy - static_cast<double>(r0);
    return (1 - ty) * ((1 - tx) * elevation(r0, c0) + tx * elevation(r0, c1)) +
           ty * ((1 - tx) * elevation(r1, c0) + tx * elevation(r1, c1));
  }

  Label label_at(const Eigen::Vector2d& xy) const;
  Eigen::Vector3f color_at(const Eigen::Vector2d& xy) const;

  double min_elevation() const { return min_elev_; }
  double max_elevation() const { return max_elev_; }
  void refresh_bounds();

  /// First intersection of the ray origin + t * dir (t > 0) with the surface;
  /// cells are walked in ray order and the bilinear patch is solved exactly per
  /// cell; stretches above a block's maximum height are skipped.
  std::optional<Eigen::Vector3d> intersect(const Eigen::Vector3d& ray_origin, const Eigen::Vector3d& dir) const;

  /// Line of sight from `eye` to a surface point, ignoring the point's own cell.
  bool visible_from(const Eigen::Vector3d& eye, const Eigen::Vector3d& point) const;

 private:
  static constexpr Eigen::Index kBlock = 8;
  double min_elev_ = 0.0;
  double max_elev_ = 0.0;
  Grid block_max_;  // max elevation over the cells a block's bilinear lookups touch
};

struct LogEntry {
  double time = 0.0;
  Pose pose;
  Eigen::Vector2d wind = Eigen::Vector2d::Zero();
};

using FlightLog = std::vector<LogEntry>;

/// Throws std::invalid_argument unless times strictly increase and quaternions are unit.
void validate_log(const FlightLog& log);

struct SceneBundle {
  SceneSpec spec;
  Terrain terrain;
  FlightLog log;
  CameraModel camera;
  std::vector<FeatureTrack> tracks;
  /// Directory holding pre-rendered frames (NNNNNN.png), if any.
  std::filesystem::path frame_dir;

  /// Loads frame `index` from frame_dir when present, otherwise renders it.
  RgbImage frame(std::size_t index) const;
  std::vector<Pose> poses() const;
};

Terrain generate_terrain(const SceneSpec& spec);
FlightLog lawnmower_log(const SceneSpec& spec, const Terrain& terrain);

/// Terrain + flight log + camera; deterministic in (spec, spec.seed). Tracks are left empty.
SceneBundle generate_scene(const SceneSpec& spec);

inline constexpr Rgb kSkyColor{135, 180, 230};
inline constexpr std::uint8_t kSkyLabel = 255;

/// Sky-colored where the ray misses the terrain. Throws if the pose is below the surface.
/// When `labels` is given it receives the label code of every pixel's surface hit
/// (kSkyLabel on a miss).
RgbImage render_frame(const Terrain& terrain, const Pose& pose, const CameraModel& camera,
                      Plane<std::uint8_t>* labels = nullptr);
inline RgbImage render_frame(const SceneBundle& scene, const Pose& pose, const CameraModel& camera) {
  return render_frame(scene.terrain, pose, camera);
}

/// `density` surface points seeded per frame, each observed in every frame where it
/// projects inside the image unoccluded, with N(0, sigma^2) pixel noise per axis.
std::vector<FeatureTrack> simulate_tracks(const SceneBundle& scene, const FlightLog& log, const CameraModel& camera,
                                          int density, double pixel_noise_sigma);

/// Dense stand-in for stereo reconstruction: `samples_per_frame` random pixels per
/// keyframe ray-cast onto the surface, z perturbed by N(0, sigma^2).
PointCloud sample_depth_oracle(const SceneBundle& scene, std::span<const Pose> keyframes, const CameraModel& camera,
                               double elev_noise_sigma, int samples_per_frame, std::uint64_t stream = 0);

/// Named layouts: "flat", "fields", "fields-house", "ramp".
SceneSpec preset_scene(std::string_view name, std::uint64_t seed);

/// Randomized multi-label layout for classifier training data.
SceneSpec random_layout_scene(std::uint64_t seed);

void save_bundle(const SceneBundle& bundle, const std::filesystem::path& dir, bool write_frames = true);
SceneBundle load_bundle(const std::filesystem::path& dir);

std::string scene_spec_to_json(const SceneSpec& spec);
SceneSpec scene_spec_from_json(const std::string& text);

void write_tracks_csv(const std::filesystem::path& path, const std::vector<FeatureTrack>& tracks);
std::vector<FeatureTrack> read_tracks_csv(const std::filesystem::path& path);

}  // namespace lsd
