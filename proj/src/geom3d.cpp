#include "lsd/geom3d.hpp"

#include <Eigen/Dense>

#include <numeric>

namespace lsd {

Triangulation triangulate(const FeatureTrack& track, std::span<const Pose> poses, const CameraModel& camera,
                          double min_baseline_ratio) {
  Triangulation out;
  if (track.observations.size() < 2) return out;
  Eigen::Matrix3d a = Eigen::Matrix3d::Zero();
  Eigen::Vector3d b = Eigen::Vector3d::Zero();
  std::vector<Eigen::Vector3d> centers, dirs;
  for (const auto& obs : track.observations) {
    if (obs.frame_id < 0 || static_cast<std::size_t>(obs.frame_id) >= poses.size())
      throw std::out_of_range("track observation references an unknown frame");
    const Pose& pose = poses[obs.frame_id];
    const Eigen::Vector3d d = ray_direction(camera, pose, obs.pixel);
    const Eigen::Matrix3d p = Eigen::Matrix3d::Identity() - d * d.transpose();
    a += p;
    b += p * pose.position;
    centers.push_back(pose.position);
    dirs.push_back(d);
  }
  const Eigen::FullPivLU<Eigen::Matrix3d> lu(a);
  if (lu.rank() < 3) return out;
  out.point = lu.solve(b);

  double baseline = 0.0;
  double depth = 0.0;
  double sq = 0.0;
  for (std::size_t i = 0; i < centers.size(); ++i) {
    for (std::size_t j = i + 1; j < centers.size(); ++j) baseline = std::max(baseline, (centers[i] - centers[j]).norm());
    const Eigen::Vector3d r = out.point - centers[i];
    depth += r.norm();
    sq += (r - dirs[i] * dirs[i].dot(r)).squaredNorm();
  }
  depth /= static_cast<double>(centers.size());
  out.residual = std::sqrt(sq / static_cast<double>(centers.size()));
  bool in_front = true;
  for (std::size_t i = 0; i < centers.size(); ++i) in_front = in_front && dirs[i].dot(out.point - centers[i]) > 0;
  out.degenerate = !in_front || !(depth > 0) || baseline < min_baseline_ratio * depth;
  return out;
}

void DepthQueryConfig::validate() const {
  if (n < 1) throw std::invalid_argument("depth query N must be >= 1");
  if (min_track_length < 2) throw std::invalid_argument("min_track_length must be >= 2");
  if (!(idw_power >= 0)) throw std::invalid_argument("idw_power must be non-negative");
}

TrackStore::TrackStore(std::vector<FeatureTrack> tracks) {
  for (auto& t : tracks) {
    for (const auto& obs : t.observations) add_observation(t.track_id, obs.frame_id, obs.pixel);
  }
}

void TrackStore::add_observation(std::int64_t track_id, int frame_id, const Eigen::Vector2d& pixel) {
  auto [it, inserted] = by_id_.try_emplace(track_id, tracks_.size());
  if (inserted) {
    FeatureTrack t;
    t.track_id = track_id;
    tracks_.push_back(std::move(t));
    refreshed_at_.push_back(0);
  }
  FeatureTrack& t = tracks_[it->second];
  if (!t.observations.empty() && t.observations.back().frame_id >= frame_id)
    throw std::invalid_argument("track frame ids must strictly increase");
  t.observations.push_back({frame_id, pixel});
  by_frame_[frame_id].push_back(it->second);
}

void TrackStore::refresh(std::span<const Pose> poses, const CameraModel& camera, const DepthQueryConfig& cfg) {
  for (std::size_t i = 0; i < tracks_.size(); ++i) {
    auto& t = tracks_[i];
    if (t.observations.size() == refreshed_at_[i]) continue;
    refreshed_at_[i] = t.observations.size();
    t.triangulated_point.reset();
    if (static_cast<int>(t.observations.size()) < cfg.min_track_length) continue;
    const auto tri = triangulate(t, poses, camera, cfg.min_baseline_ratio);
    if (!tri.degenerate) t.triangulated_point = tri.point;
  }
}

std::span<const std::size_t> TrackStore::in_frame(int frame_id) const {
  const auto it = by_frame_.find(frame_id);
  if (it == by_frame_.end()) return {};
  return it->second;
}

namespace {

struct Candidate {
  double distance;
  double z;
};

std::optional<double> idw(std::vector<Candidate>& cands, const DepthQueryConfig& cfg) {
  if (cands.empty()) return std::nullopt;
  const auto n = std::min<std::size_t>(static_cast<std::size_t>(cfg.n), cands.size());
  std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) { return a.distance < b.distance; });
  if (cands.front().distance == 0.0) return cands.front().z;
  double wsum = 0.0;
  double zsum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = 1.0 / (std::pow(cands[i].distance, cfg.idw_power) + cfg.epsilon);
    wsum += w;
    zsum += w * cands[i].z;
  }
  return zsum / wsum;
}

std::optional<double> usable_height(const FeatureTrack& t, std::span<const Pose> poses, const CameraModel& camera,
                                    const DepthQueryConfig& cfg) {
  if (static_cast<int>(t.observations.size()) < cfg.min_track_length) return std::nullopt;
  if (t.triangulated_point) return t.triangulated_point->z();
  const auto tri = triangulate(t, poses, camera, cfg.min_baseline_ratio);
  if (tri.degenerate) return std::nullopt;
  return tri.point.z();
}

}  // namespace

std::optional<double> coarse_depth(const Eigen::Vector2d& query_px, int frame_id, std::span<const FeatureTrack> tracks,
                                   std::span<const Pose> poses, const CameraModel& camera, const DepthQueryConfig& cfg) {
  cfg.validate();
  std::vector<Candidate> cands;
  for (const auto& t : tracks) {
    const auto* obs = t.in_frame(frame_id);
    if (!obs) continue;
    if (const auto z = usable_height(t, poses, camera, cfg)) cands.push_back({(obs->pixel - query_px).norm(), *z});
  }
  return idw(cands, cfg);
}

std::optional<double> coarse_depth(const Eigen::Vector2d& query_px, int frame_id, const TrackStore& store,
                                   const DepthQueryConfig& cfg) {
  cfg.validate();
  std::vector<Candidate> cands;
  for (const auto i : store.in_frame(frame_id)) {
    const auto& t = store.tracks()[i];
    if (!t.triangulated_point) continue;
    if (static_cast<int>(t.observations.size()) < cfg.min_track_length) continue;
    const auto* obs = t.in_frame(frame_id);
    cands.push_back({(obs->pixel - query_px).norm(), t.triangulated_point->z()});
  }
  return idw(cands, cfg);
}

std::optional<Eigen::Vector3d> project_to_ground(const Eigen::Vector2d& px, const Pose& pose, const CameraModel& camera,
                                                 double ground_z) {
  const Eigen::Vector3d d = ray_direction(camera, pose, px);
  if (std::abs(d.z()) < 1e-12) return std::nullopt;
  const double t = (ground_z - pose.position.z()) / d.z();
  if (!(t > 0)) return std::nullopt;
  Eigen::Vector3d p = pose.position + t * d;
  p.z() = ground_z;
  return p;
}

std::vector<int> select_keyframes(std::span<const FeatureTrack> tracks, std::span<const int> frames,
                                  std::span<const Pose> poses, double min_baseline, int min_connections) {
  if (frames.empty()) throw std::invalid_argument("keyframe selection needs at least one frame");
  auto connections = [&](int f0, int f1) {
    int count = 0;
    for (const auto& t : tracks)
      if (t.in_frame(f0) && t.in_frame(f1)) ++count;
    return count;
  };
  std::vector<int> keys{frames[0]};
  std::size_t key = 0;
  for (std::size_t i = 1; i < frames.size(); ++i) {
    if (connections(frames[key], frames[i]) >= min_connections) continue;
    const std::size_t cand = i - 1 > key ? i - 1 : i;
    const double baseline = (poses[frames[cand]].position - poses[frames[key]].position).norm();
    if (!(baseline >= min_baseline)) break;
    keys.push_back(frames[cand]);
    key = cand;
    i = cand;
  }
  return keys;
}

std::vector<int> select_keyframes(std::span<const FeatureTrack> tracks, std::span<const Pose> poses,
                                  double min_baseline, int min_connections) {
  std::vector<int> frames(poses.size());
  std::iota(frames.begin(), frames.end(), 0);
  return select_keyframes(tracks, frames, poses, min_baseline, min_connections);
}

}  // namespace lsd
