#include "lsd/region_manager.hpp"

#include "lsd/geom3d.hpp"

#include <json.hpp>

#include <algorithm>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace lsd {

using json = nlohmann::json;

double grade(int n_grass, int n_obs, double area, const GradeConfig& cfg) {
  if (area < cfg.area_min || n_obs < cfg.n_obs_min || n_obs <= 0) return 0.0;
  return static_cast<double>(n_grass) / static_cast<double>(n_obs);
}

bool rect_fully_visible(const std::array<Eigen::Vector2d, 4>& rect_px, int width, int height) {
  return std::all_of(rect_px.begin(), rect_px.end(), [&](const Eigen::Vector2d& p) {
    return p.x() > 0.0 && p.y() > 0.0 && p.x() < width - 1.0 && p.y() < height - 1.0;
  });
}

namespace {

std::array<Eigen::Vector2d, 4> xy(const std::array<Eigen::Vector3d, 4>& c) {
  return {c[0].head<2>(), c[1].head<2>(), c[2].head<2>(), c[3].head<2>()};
}

Eigen::Vector3d corner_mean(const std::array<Eigen::Vector3d, 4>& c) { return (c[0] + c[1] + c[2] + c[3]) / 4.0; }

// Orders corners counter-clockwise in xy (reverses clockwise input).
std::array<Eigen::Vector3d, 4> ccw(std::array<Eigen::Vector3d, 4> c) {
  const auto p = xy(c);
  if (polygon_area<double>(p) < 0) std::swap(c[1], c[3]);
  return c;
}

bool order_for_eviction(const RoiRecord& a, const RoiRecord& b) {
  if (a.grade != b.grade) return a.grade < b.grade;
  if (a.last_seen_frame != b.last_seen_frame) return a.last_seen_frame < b.last_seen_frame;
  return a.roi_id < b.roi_id;
}

}  // namespace

double corners_area(const std::array<Eigen::Vector3d, 4>& corners) {
  const auto p = xy(corners);
  return std::abs(polygon_area<double>(p));
}

bool roi_contains(const RoiRecord& roi, const Eigen::Vector3d& point) {
  const auto p = xy(roi.corners);
  return winding_inside<double>(point.head<2>(), p);
}

std::vector<RoiRecord> rank_candidates(std::span<const RoiRecord> rois, std::size_t n) {
  std::vector<RoiRecord> out;
  for (const auto& r : rois)
    if (r.grade > 0) out.push_back(r);
  std::sort(out.begin(), out.end(), [](const RoiRecord& a, const RoiRecord& b) {
    if (a.grade != b.grade) return a.grade > b.grade;
    if (a.last_seen_frame != b.last_seen_frame) return a.last_seen_frame > b.last_seen_frame;
    return a.roi_id < b.roi_id;
  });
  if (out.size() > n) out.resize(n);
  return out;
}

std::vector<RoiRecord> RoiSnapshot::best_candidates(std::size_t n) const { return rank_candidates(rois, n); }

RoiStore::RoiStore(GradeConfig cfg, std::size_t capacity) : cfg_(cfg), capacity_(capacity) {
  if (capacity_ < 1) throw std::invalid_argument("ROI store capacity must be >= 1");
}

void RoiStore::regrade(RoiRecord& roi) const {
  roi.area = corners_area(roi.corners);
  roi.grade = grade(roi.n_grass, roi.n_obs, roi.area, cfg_);
}

ObserveResult RoiStore::observe(const RegionObservation& obs) {
  auto fine = FineMaskRef{obs.frame_id, obs.mask_id, obs.grass};
  for (auto& roi : rois_) {
    if (!roi_contains(roi, obs.centroid)) continue;
    roi.n_obs += 1;
    roi.n_grass += obs.grass ? 1 : 0;
    roi.last_seen_frame = obs.frame_id;
    if (obs.mask_id >= 0) roi.fine_masks.push_back(fine);
    if (!roi.corners_fixed) {
      std::array<Eigen::Vector2d, 8> pts;
      double z = 0.0;
      for (int k = 0; k < 4; ++k) {
        pts[k] = roi.corners[k].head<2>();
        pts[4 + k] = obs.corners[k].head<2>();
        z += roi.corners[k].z() + obs.corners[k].z();
      }
      z /= 8.0;
      const auto rect = min_area_rect<double>(pts);
      for (int k = 0; k < 4; ++k) roi.corners[k] = Eigen::Vector3d(rect[k].x(), rect[k].y(), z);
      roi.centroid = corner_mean(roi.corners);
      roi.corners_fixed = obs.fully_visible;
    }
    regrade(roi);
    return {roi.roi_id, false};
  }
  RoiRecord roi;
  roi.roi_id = next_id_++;
  roi.corners = ccw(obs.corners);
  roi.corners_fixed = obs.fully_visible;
  roi.centroid = obs.centroid;
  roi.n_obs = 1;
  roi.n_grass = obs.grass ? 1 : 0;
  roi.first_seen_frame = roi.last_seen_frame = obs.frame_id;
  if (obs.mask_id >= 0) roi.fine_masks.push_back(fine);
  regrade(roi);
  rois_.push_back(std::move(roi));
  return {rois_.back().roi_id, true};
}

std::vector<int> RoiStore::merge_pass(int roi_id) {
  std::vector<int> removed;
  int current = roi_id;
  for (bool changed = true; changed;) {
    changed = false;
    auto it = std::find_if(rois_.begin(), rois_.end(), [&](const RoiRecord& r) { return r.roi_id == current; });
    if (it == rois_.end()) throw std::invalid_argument("merge_pass: unknown ROI id");
    for (auto other = rois_.begin(); other != rois_.end(); ++other) {
      if (other == it) continue;
      if (!roi_contains(*it, other->centroid) && !roi_contains(*other, it->centroid)) continue;
      auto keep = it;
      auto drop = other;
      if (drop->area > keep->area || (drop->area == keep->area && drop->roi_id < keep->roi_id)) std::swap(keep, drop);
      keep->n_obs += drop->n_obs;
      keep->n_grass += drop->n_grass;
      keep->last_seen_frame = std::max(keep->last_seen_frame, drop->last_seen_frame);
      keep->first_seen_frame = std::min(keep->first_seen_frame, drop->first_seen_frame);
      keep->fine_masks.insert(keep->fine_masks.end(), drop->fine_masks.begin(), drop->fine_masks.end());
      std::stable_sort(keep->fine_masks.begin(), keep->fine_masks.end(),
                       [](const FineMaskRef& a, const FineMaskRef& b) { return a.frame_id < b.frame_id; });
      regrade(*keep);
      current = keep->roi_id;
      removed.push_back(drop->roi_id);
      rois_.erase(drop);
      changed = true;
      break;
    }
  }
  return removed;
}

std::vector<int> RoiStore::retain_top() {
  std::vector<int> evicted;
  while (rois_.size() > capacity_) {
    const auto victim = std::min_element(rois_.begin(), rois_.end(), order_for_eviction);
    evicted.push_back(victim->roi_id);
    rois_.erase(victim);
  }
  return evicted;
}

std::vector<RoiRecord> RoiStore::best_candidates(std::size_t n) const { return rank_candidates(rois_, n); }

void RoiStore::record(int frame_id) {
  for (const auto& r : rois_)
    series_.push_back({frame_id, r.roi_id, r.n_obs, r.n_grass, r.certainty(), r.area, r.grade});
}

RoiSnapshot RoiStore::snapshot(int frame_id) const { return RoiSnapshot{frame_id, rois_}; }

const RoiRecord* RoiStore::find(int roi_id) const {
  for (const auto& r : rois_)
    if (r.roi_id == roi_id) return &r;
  return nullptr;
}

std::string roi_to_json(const RoiRecord& r) {
  json corners = json::array();
  for (const auto& c : r.corners) corners.push_back({c.x(), c.y(), c.z()});
  json j = {{"roi_id", r.roi_id},
            {"grade", r.grade},
            {"n_obs", r.n_obs},
            {"n_grass", r.n_grass},
            {"area", r.area},
            {"corners_fixed", r.corners_fixed},
            {"corners", corners},
            {"centroid", {r.centroid.x(), r.centroid.y(), r.centroid.z()}},
            {"first_seen_frame", r.first_seen_frame},
            {"last_seen_frame", r.last_seen_frame},
            {"fine_masks", r.fine_masks.size()}};
  return j.dump();
}

std::string series_to_json(std::span<const RoiSeriesRow> rows) {
  std::map<int, json> per;
  for (const auto& row : rows) {
    auto& j = per[row.roi_id];
    if (j.is_null()) j = {{"roi_id", row.roi_id}, {"frame", json::array()}, {"n_obs", json::array()},
                          {"certainty", json::array()}, {"area", json::array()}, {"grade", json::array()}};
    j["frame"].push_back(row.frame_id);
    j["n_obs"].push_back(row.n_obs);
    j["certainty"].push_back(row.certainty);
    j["area"].push_back(row.area);
    j["grade"].push_back(row.grade);
  }
  json out = json::array();
  for (auto& [id, j] : per) out.push_back(std::move(j));
  return out.dump();
}

std::string series_to_csv(std::span<const RoiSeriesRow> rows) {
  std::ostringstream out;
  out << "frame_id,roi_id,n_obs,n_grass,certainty,area,grade\n" << std::setprecision(10);
  for (const auto& r : rows)
    out << r.frame_id << ',' << r.roi_id << ',' << r.n_obs << ',' << r.n_grass << ',' << r.certainty << ',' << r.area
        << ',' << r.grade << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------

std::int64_t MaskArchive::add(int frame_id, const Mask& mask) {
  auto e = std::make_shared<Entry>();
  e->frame_id = frame_id;
  e->rows = mask.rows();
  e->cols = mask.cols();
  std::uint8_t state = 0;
  std::uint32_t run = 0;
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    const std::uint8_t v = mask.data()[i] ? 1 : 0;
    if (v != state) {
      e->runs.push_back(run);
      run = 0;
      state = v;
    }
    ++run;
  }
  e->runs.push_back(run);
  std::lock_guard lock(mutex_);
  entries_.push_back(std::move(e));
  return static_cast<std::int64_t>(entries_.size()) - 1;
}

std::shared_ptr<const MaskArchive::Entry> MaskArchive::entry(std::int64_t id) const {
  std::lock_guard lock(mutex_);
  if (id < 0 || static_cast<std::size_t>(id) >= entries_.size()) throw std::out_of_range("unknown mask id");
  return entries_[static_cast<std::size_t>(id)];
}

Mask MaskArchive::get(std::int64_t id) const { return decode(*entry(id)); }

std::size_t MaskArchive::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

Mask MaskArchive::decode(const Entry& e) {
  Mask m(e.rows, e.cols);
  Eigen::Index pos = 0;
  std::uint8_t state = 0;
  for (const auto run : e.runs) {
    std::fill_n(m.data() + pos, run, state);
    pos += run;
    state ^= 1;
  }
  return m;
}

void MaskArchive::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  const auto n = size();
  for (std::size_t i = 0; i < n; ++i)
    write_pbm(dir / ("mask_" + std::to_string(i) + ".pbm"), get(static_cast<std::int64_t>(i)));
}

}  // namespace lsd
