#pragma once

#include "lsd/image.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lsd {

struct GradeConfig {
  double area_min = 900.0;  // m^2
  int n_obs_min = 3;
};

/// 0 if area < area_min or n_obs < n_obs_min, n_grass / n_obs otherwise.
double grade(int n_grass, int n_obs, double area, const GradeConfig& cfg);

struct FineMaskRef {
  int frame_id = 0;
  std::int64_t mask_id = -1;
  bool grass = false;
};

struct RegionObservation {
  int frame_id = 0;
  std::int64_t mask_id = -1;  // MaskArchive id of the fine mask, -1 if not archived
  bool grass = false;
  double probability = 0.0;
  std::array<Eigen::Vector2d, 4> rect_px;
  std::array<Eigen::Vector3d, 4> corners;
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  bool fully_visible = false;
};

/// True iff every rectangle corner lies strictly inside the pixel-center range.
bool rect_fully_visible(const std::array<Eigen::Vector2d, 4>& rect_px, int width, int height);

struct RoiRecord {
  int roi_id = 0;
  std::array<Eigen::Vector3d, 4> corners;  // counter-clockwise in xy
  bool corners_fixed = false;
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  int n_grass = 0;
  int n_obs = 0;
  double area = 0.0;
  double grade = 0.0;
  std::vector<FineMaskRef> fine_masks;
  int first_seen_frame = 0;
  int last_seen_frame = 0;

  double certainty() const { return n_obs > 0 ? static_cast<double>(n_grass) / n_obs : 0.0; }
};

/// Shoelace area of the corners' xy projection (absolute value).
double corners_area(const std::array<Eigen::Vector3d, 4>& corners);

/// Corner xy containment (boundary inclusive).
bool roi_contains(const RoiRecord& roi, const Eigen::Vector3d& point);

struct ObserveResult {
  int roi_id = 0;
  bool created = false;
};

struct RoiSeriesRow {
  int frame_id;
  int roi_id;
  int n_obs;
  int n_grass;
  double certainty;
  double area;
  double grade;
};

/// Immutable copy of the store handed to the backend.
struct RoiSnapshot {
  int frame_id = -1;
  std::vector<RoiRecord> rois;

  std::vector<RoiRecord> best_candidates(std::size_t n) const;
};

class RoiStore {
 public:
  explicit RoiStore(GradeConfig cfg = {}, std::size_t capacity = 20);

  /// Re-detects the oldest ROI whose corners contain obs.centroid, else creates one.
  ObserveResult observe(const RegionObservation& obs);

  /// Repeatedly merges ROIs whose centroid lies within `roi_id`'s corners (or the
  /// reverse). The larger-area record keeps its corners and absorbs the counts and
  /// masks of the smaller, which is removed. Returns the removed ids.
  std::vector<int> merge_pass(int roi_id);

  /// Evicts lowest-grade ROIs (ties: least recently seen, then oldest id) until the
  /// store holds at most `capacity`. Returns the evicted ids.
  std::vector<int> retain_top();

  /// Positive-grade ROIs by descending grade, ties by most recent sighting.
  std::vector<RoiRecord> best_candidates(std::size_t n) const;

  /// Appends one time-series row per ROI.
  void record(int frame_id);

  RoiSnapshot snapshot(int frame_id) const;

  const std::vector<RoiRecord>& rois() const { return rois_; }
  const RoiRecord* find(int roi_id) const;
  const std::vector<RoiSeriesRow>& series() const { return series_; }
  const GradeConfig& config() const { return cfg_; }
  std::size_t capacity() const { return capacity_; }

 private:
  void regrade(RoiRecord& roi) const;

  GradeConfig cfg_;
  std::size_t capacity_;
  int next_id_ = 0;
  std::vector<RoiRecord> rois_;
  std::vector<RoiSeriesRow> series_;
};

std::vector<RoiRecord> rank_candidates(std::span<const RoiRecord> rois, std::size_t n);

std::string roi_to_json(const RoiRecord& roi);
/// Time series grouped per ROI id, as JSON.
std::string series_to_json(std::span<const RoiSeriesRow> rows);
std::string series_to_csv(std::span<const RoiSeriesRow> rows);

/// Fine region masks, run-length encoded in memory. Entries are immutable and
/// shared, so readers may hold them after the archive grows. Thread-safe.
class MaskArchive {
 public:
  struct Entry {
    int frame_id = 0;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    std::vector<std::uint32_t> runs;  // alternating 0/1 run lengths, row-major, starting with 0s
  };

  std::int64_t add(int frame_id, const Mask& mask);
  std::shared_ptr<const Entry> entry(std::int64_t id) const;
  Mask get(std::int64_t id) const;
  std::size_t size() const;

  /// Writes every mask as mask_<id>.pbm.
  void save(const std::filesystem::path& dir) const;

  static Mask decode(const Entry& e);

 private:
  mutable std::mutex mutex_;
  std::vector<std::shared_ptr<const Entry>> entries_;
};

}  // namespace lsd
