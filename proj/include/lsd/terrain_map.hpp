#pragma once

#include "lsd/camera.hpp"
#include "lsd/image.hpp"
#include "lsd/track.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lsd {

/// Cell (r, c) is centered at origin + (c, r) * resolution (x east, y north).
struct GridGeometry {
  Eigen::Vector2d origin = Eigen::Vector2d::Zero();
  double resolution = 1.0;
  int rows = 300;
  int cols = 300;

  static GridGeometry centered(const Eigen::Vector2d& center, double resolution, int rows, int cols);

  void validate() const;
  Eigen::Vector2d cell_center(Eigen::Index row, Eigen::Index col) const {
    return origin + Eigen::Vector2d(static_cast<double>(col), static_cast<double>(row)) * resolution;
  }
  Eigen::Vector2d center() const { return cell_center(0, 0) + 0.5 * Eigen::Vector2d(cols - 1, rows - 1) * resolution; }
  /// Cell containing xy, or nullopt outside the grid. Returns (row, col).
  std::optional<Eigen::Vector2i> cell_of(const Eigen::Vector2d& xy) const;
  bool inside(Eigen::Index row, Eigen::Index col) const { return row >= 0 && col >= 0 && row < rows && col < cols; }
};

struct Layer {
  Grid values;
  Mask valid;

  static Layer make(const GridGeometry& g, double fill = 0.0, bool valid = false);
  bool ok(Eigen::Index r, Eigen::Index c) const { return valid(r, c) != 0; }
};

enum class TriMode { root_sum_square, mean_abs_diff };

struct HazardThresholds {
  double max_slope = 0.105;  // rad
  double max_tri = 0.3;      // m

  void validate() const;
};

struct TerrainConfig {
  double idw_radius_cells = 2.5;
  double idw_power = 2.0;
  TriMode tri_mode = TriMode::root_sum_square;
  HazardThresholds thresholds;
};

struct GridStack {
  GridGeometry geometry;
  Layer elevation;
  Layer normal_z;
  Layer slope;
  Layer roughness;
  Layer grass;
  Layer binary_slope;
  Layer binary_rough;
  Layer fused_hazard;
  Layer hazard_distance;
};

/// Per cell, inverse-distance weighting (1/d^power) of cloud points within `radius`
/// meters of the cell center; a point at the exact center is returned directly
/// (several are averaged). Cells without points are invalid.
Layer rasterize_elevation(const PointCloud& cloud, const GridGeometry& geometry, double radius, double power);

struct NormalsAndSlope {
  Layer normal_z;
  Layer slope;
};

/// PCA over the 3x3 neighborhood's cell-center points; the least-variance axis is
/// the normal with n_z >= 0, slope = arccos(n_z). Border cells and cells with an
/// invalid neighbor are invalid.
NormalsAndSlope normals_and_slope(const Layer& elevation, double resolution);

/// Ruggedness from the 8 neighbor differences: sqrt of the sum of squares, or the
/// mean absolute difference.
Layer tri(const Layer& elevation, TriMode mode = TriMode::root_sum_square);

struct PosedMask {
  Mask mask;
  Pose pose;
};

/// OR of the masks over the grid: a cell is grass when its center (at its own
/// elevation, or `fallback_z` where elevation is invalid) projects into any mask.
Layer fuse_grass_mask(std::span<const PosedMask> masks, const CameraModel& camera, const GridGeometry& geometry,
                      const Layer& elevation, double fallback_z);

struct HazardLayers {
  Layer binary_slope;
  Layer binary_rough;
  Layer fused;
};

/// Thresholds evaluated on grass cells; non-grass cells and cells lacking a valid
/// slope or roughness are hazards.
HazardLayers fuse_hazards(const Layer& slope, const Layer& roughness, const Layer& grass,
                          const HazardThresholds& thresholds);

/// Euclidean distance (m) to the nearest hazard cell; +inf when there is none.
Layer hazard_distance(const Layer& fused, double resolution);

/// Whole layer stack from a point cloud and the grass masks.
GridStack build_stack(const PointCloud& cloud, const GridGeometry& geometry, std::span<const PosedMask> grass_masks,
                      const CameraModel& camera, double fallback_z, const TerrainConfig& cfg);

/// Layer names in export order.
std::vector<std::string> layer_names();
const Layer& layer_by_name(const GridStack& stack, const std::string& name);
Layer& layer_by_name(GridStack& stack, const std::string& name);

/// Each layer as <name>.pgm (16-bit; value = code * scale + offset, code 65535 =
/// invalid or +inf) with a <name>.json sidecar. Files are replaced atomically.
void export_layers(const GridStack& stack, const std::filesystem::path& dir);
/// Reads the layers written by export_layers (quantized values).
GridStack import_layers(const std::filesystem::path& dir);

}  // namespace lsd
