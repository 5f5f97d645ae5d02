#pragma once

#include "lsd/image.hpp"
#include "lsd/imgproc.hpp"

#include <array>
#include <utility>
#include <vector>

namespace lsd {

/// Height-dependent segmentation thresholds, cubic in AGL (coefficients highest
/// power first), fitted over valid_agl.
struct SegmenterConfig {
  std::array<double, 4> canny_poly{-1.72e-6, 0.00148, -0.43, 62.97};
  std::array<double, 4> dtf_poly{-1.23e-6, 0.0011, -0.39, 56.82};
  double agl_min = 58.0;
  double agl_max = 382.0;
  Eigen::Index min_region_area_px = 2000;  // at 752 x 480

  void validate() const;
  /// min_region_area_px scaled from 752 x 480 to the given frame size.
  Eigen::Index min_area_for(Eigen::Index rows, Eigen::Index cols) const;
};

struct SegmentThresholds {
  double canny = 0.0;
  double dtf = 0.0;
};

/// Clamps agl into [agl_min, agl_max] and evaluates both cubics.
SegmentThresholds thresholds_for_agl(double agl, const SegmenterConfig& cfg);

/// Intermediate rasters of one segmentation pass (for debug dumps).
struct SegmentationTrace {
  GrayImage gray;
  Mask edges;
  FloatImage distance;
  Mask homogeneous;
  SegmentThresholds thresholds;
};

/// gray -> Canny -> EDT -> (distance > dtf threshold) -> regions.
std::vector<RegionMask> segment(const RgbImage& frame, double agl, const SegmenterConfig& cfg,
                                SegmentationTrace* trace = nullptr);

/// Writes the four panels (input, edges, distance, regions) as PNGs named <stem>_{a,b,c,d}.png.
void dump_segmentation(const std::filesystem::path& stem, const RgbImage& frame, const SegmentationTrace& trace,
                       const std::vector<RegionMask>& regions);

}  // namespace lsd
