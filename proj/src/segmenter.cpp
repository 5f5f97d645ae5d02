#include "lsd/segmenter.hpp"

#include <cmath>
#include <stdexcept>

namespace lsd {

namespace {

double cubic(const std::array<double, 4>& c, double x) { return ((c[0] * x + c[1]) * x + c[2]) * x + c[3]; }

}  // namespace

void SegmenterConfig::validate() const {
  if (!(agl_min < agl_max)) throw std::invalid_argument("segmenter AGL range must be increasing");
  if (min_region_area_px < 1) throw std::invalid_argument("min_region_area_px must be >= 1");
}

Eigen::Index SegmenterConfig::min_area_for(Eigen::Index rows, Eigen::Index cols) const {
  const double scale = static_cast<double>(rows * cols) / (752.0 * 480.0);
  return std::max<Eigen::Index>(1, std::llround(static_cast<double>(min_region_area_px) * scale));
}

SegmentThresholds thresholds_for_agl(double agl, const SegmenterConfig& cfg) {
  if (!(agl > 0)) throw std::invalid_argument("AGL must be positive");
  const double h = std::clamp(agl, cfg.agl_min, cfg.agl_max);
  return {cubic(cfg.canny_poly, h), cubic(cfg.dtf_poly, h)};
}

std::vector<RegionMask> segment(const RgbImage& frame, double agl, const SegmenterConfig& cfg,
                                SegmentationTrace* trace) {
  cfg.validate();
  const auto th = thresholds_for_agl(agl, cfg);
  GrayImage gray = rgb_to_gray(frame);
  Mask edges = canny(gray, th.canny);
  FloatImage dist = edt(edges);
  Mask homogeneous = (dist > static_cast<float>(th.dtf)).cast<std::uint8_t>();
  auto regions = extract_regions(homogeneous, cfg.min_area_for(frame.rows(), frame.cols()));
  if (trace) {
    trace->gray = std::move(gray);
    trace->edges = std::move(edges);
    trace->distance = std::move(dist);
    trace->homogeneous = std::move(homogeneous);
    trace->thresholds = th;
  }
  return regions;
}

void dump_segmentation(const std::filesystem::path& stem, const RgbImage& frame, const SegmentationTrace& trace,
                       const std::vector<RegionMask>& regions) {
  auto with = [&](const char* suffix) {
    auto p = stem;
    p += suffix;
    return p;
  };
  write_png(with("_a.png"), frame);
  write_png(with("_b.png"), GrayImage((trace.edges * 255).cast<std::uint8_t>()));
  FloatImage capped = trace.distance.min(4.0f * static_cast<float>(trace.thresholds.dtf));
  write_png(with("_c.png"), to_gray8(capped, 0.0f, 4.0f * static_cast<float>(trace.thresholds.dtf)));
  GrayImage labels = GrayImage::Zero(frame.rows(), frame.cols());
  for (std::size_t i = 0; i < regions.size(); ++i) {
    const auto shade = static_cast<std::uint8_t>(64 + (i * 47) % 192);
    labels = (regions[i].mask != 0).select(GrayImage::Constant(frame.rows(), frame.cols(), shade), labels);
  }
  write_png(with("_d.png"), labels);
}

}  // namespace lsd
