#pragma once

#include "lsd/image.hpp"

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <memory>
#include <optional>
#include <numbers>
#include <vector>

namespace lsd {

/// gray = 0.299 R + 0.587 G + 0.114 B, rounded half up.
GrayImage rgb_to_gray(const RgbImage& img);

struct HsvImage {
  FloatImage h;  // degrees, [0, 360)
  FloatImage s;  // [0, 1]
  FloatImage v;  // [0, 1]
};

/// Hexcone HSV of a single color; H in [0, 360), S and V in [0, 1].
Eigen::Vector3f rgb_to_hsv(float r, float g, float b);
/// Inverse of rgb_to_hsv; returns RGB in [0, 255].
Eigen::Vector3f hsv_to_rgb(float h, float s, float v);
HsvImage rgb_to_hsv(const RgbImage& img);

inline constexpr double kCannySigma = 1.4;

/// Canny edges: 5x5 Gaussian (sigma 1.4), Sobel gradients, non-maximum suppression,
/// hysteresis with high = threshold and low = threshold / 2. Output 1 marks an edge.
Mask canny(const GrayImage& gray, double threshold);

/// Sobel gradient magnitude of the Gaussian-smoothed image (the quantity Canny thresholds).
FloatImage smoothed_gradient_magnitude(const GrayImage& gray);

/// Exact squared Euclidean distance to the nearest nonzero pixel (lower-envelope
/// transform, separable in rows and columns). +inf where the mask has no nonzero pixel.
Grid edt_squared(const Mask& mask);
/// sqrt of edt_squared, single precision.
FloatImage edt(const Mask& mask);

struct GaborParams {
  std::array<double, 3> wavelengths{0.5, 1.0, 5.0};
  std::array<double, 4> orientations{0.0, std::numbers::pi / 4, std::numbers::pi / 2, 3 * std::numbers::pi / 4};
  double phase = 0.0;
  double sigma = 4.0;
  double aspect_ratio = 0.02;
  int kernel_size = 25;

  void validate() const;
  int radius() const { return kernel_size / 2; }
};

/// Real Gabor kernel, kernel_size x kernel_size, centered.
Plane<double> gabor_kernel(const GaborParams& params, double wavelength, double theta);

/// Orientation-averaged kernel for one wavelength. Convolution is linear, so filtering
/// with this kernel equals averaging the per-orientation responses.
Plane<double> gabor_mean_kernel(const GaborParams& params, double wavelength);

/// One response image per wavelength, each the mean over all orientations.
/// Direct convolution with reflected borders.
std::array<FloatImage, 3> gabor_bank(const GrayImage& gray, const GaborParams& params);

/// Same responses restricted to a sub-window [row0, row0+rows) x [col0, col0+cols) of
/// `gray`; pixels outside the image come from reflection about its border.
std::array<FloatImage, 3> gabor_bank_window(const GrayImage& gray, const GaborParams& params, Eigen::Index row0,
                                            Eigen::Index col0, Eigen::Index rows, Eigen::Index cols);

/// Frequency-domain evaluation of gabor_bank for whole frames; caches kernel spectra
/// per frame size. Agrees with gabor_bank up to float rounding.
class GaborBankFft {
 public:
  explicit GaborBankFft(GaborParams params = {});
  ~GaborBankFft();
  GaborBankFft(GaborBankFft&&) noexcept;
  GaborBankFft& operator=(GaborBankFft&&) noexcept;

  std::array<FloatImage, 3> operator()(const GrayImage& gray);

 private:
  struct Impl;
  GaborParams params_;
  std::unique_ptr<Impl> impl_;
};

struct RegionMask {
  Mask mask;                                   // full-frame, 1 inside the region
  std::vector<Eigen::Vector2i> contour;        // outer boundary pixels (x, y), ordered
  Eigen::Index area = 0;                       // pixel count
  Eigen::AlignedBox2i bbox;                    // inclusive pixel bounds (x, y)
};

/// 8-connected components with at least `min_area_px` pixels, each with its traced
/// outer contour.
std::vector<RegionMask> extract_regions(const Mask& mask, Eigen::Index min_area_px);

/// Moore-neighbor trace of the outer boundary of the component containing `start`,
/// which must be its top-most, left-most pixel.
std::vector<Eigen::Vector2i> trace_contour(const Mask& component, const Eigen::Vector2i& start);

}  // namespace lsd
