#include "lsd/pipeline.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <future>
#include <numeric>
#include <thread>

namespace lsd {

namespace fs = std::filesystem;
using json = nlohmann::json;

void Timing::merge(const Timing& other) {
  for (const auto& [stage, v] : other.samples_) samples_[stage].insert(samples_[stage].end(), v.begin(), v.end());
}

Timing::Stats Timing::stats(const std::string& stage) const {
  Stats s;
  const auto it = samples_.find(stage);
  if (it == samples_.end() || it->second.empty()) return s;
  const auto& v = it->second;
  s.count = v.size();
  s.total = std::accumulate(v.begin(), v.end(), 0.0);
  s.mean = s.total / static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - s.mean) * (x - s.mean);
  s.stddev = std::sqrt(var / static_cast<double>(v.size()));
  return s;
}

// ---------------------------------------------------------------------------

Frontend::Frontend(const SceneBundle& scene, const ForestModel& model, const PipelineConfig& cfg)
    : scene_(scene),
      model_(model),
      cfg_(cfg),
      poses_(scene.poses()),
      store_(cfg.grading, static_cast<std::size_t>(cfg.roi_capacity)),
      fft_(cfg.gabor),
      last_agl_(cfg.initial_agl) {
  if (model.n_features != kFeatureCount)
    throw std::invalid_argument("classifier model expects " + std::to_string(model.n_features) + " features, not " +
                                std::to_string(kFeatureCount));
  obs_by_frame_.resize(poses_.size());
  for (const auto& t : scene.tracks)
    for (const auto& o : t.observations)
      if (o.frame_id >= 0 && static_cast<std::size_t>(o.frame_id) < poses_.size())
        obs_by_frame_[o.frame_id].emplace_back(t.track_id, o.pixel);
}

FrameSummary Frontend::process(int f, const RgbImage& frame) {
  if (f != next_frame_) throw std::invalid_argument("frames must be processed in log order");
  ++next_frame_;
  const Pose& pose = poses_[f];
  const CameraModel& cam = scene_.camera;
  FrameSummary summary;
  summary.frame_id = f;
  {
    ScopedTimer timer(timing_, "agl");
    for (const auto& [id, px] : obs_by_frame_[f]) tracks_.add_observation(id, f, px);
    tracks_.refresh(poses_, cam, cfg_.depth);
    const auto h = coarse_depth(Eigen::Vector2d(cam.cx, cam.cy), f, tracks_, cfg_.depth);
    if (h && pose.position.z() - *h > 0) {
      last_agl_ = pose.position.z() - *h;
      summary.agl_from_tracks = true;
    }
  }
  summary.agl = last_agl_;
  const double ground_z = pose.position.z() - last_agl_;

  std::vector<RegionMask> regions;
  {
    ScopedTimer timer(timing_, "segmentation");
    regions = segment(frame, last_agl_, cfg_.segmenter);
  }
  std::vector<Prediction> preds;
  {
    ScopedTimer timer(timing_, "classification");
    if (!regions.empty()) {
      const GrayImage gray = rgb_to_gray(frame);
      const auto responses = cfg_.use_fft_gabor ? fft_(gray) : gabor_bank(gray, cfg_.gabor);
      for (const auto& r : regions) preds.push_back(model_.predict(extract_features(frame, r.mask, responses)));
    }
  }
  {
    ScopedTimer timer(timing_, "region_manager");
    auto ground = [&](const Eigen::Vector2d& px) -> std::optional<Eigen::Vector3d> {
      const auto h = coarse_depth(px, f, tracks_, cfg_.depth);
      return project_to_ground(px, pose, cam, h ? *h : ground_z);
    };
    for (std::size_t i = 0; i < regions.size(); ++i) {
      const auto& region = regions[i];
      std::vector<Eigen::Vector2d> contour;
      contour.reserve(region.contour.size());
      for (const auto& p : region.contour) contour.emplace_back(p.x(), p.y());
      RegionObservation obs;
      try {
        const auto rect = min_area_rect<double>(contour);
        std::copy(rect.begin(), rect.end(), obs.rect_px.begin());
      } catch (const std::invalid_argument&) {
        continue;
      }
      Eigen::Vector2d sum = Eigen::Vector2d::Zero();
      for (int y = region.bbox.min().y(); y <= region.bbox.max().y(); ++y)
        for (int x = region.bbox.min().x(); x <= region.bbox.max().x(); ++x)
          if (region.mask(y, x)) sum += Eigen::Vector2d(x, y);
      const Eigen::Vector2d centroid_px = sum / static_cast<double>(region.area);
      bool ok = true;
      for (int k = 0; k < 4 && ok; ++k) {
        const auto p = ground(obs.rect_px[k]);
        ok = p.has_value();
        if (ok) obs.corners[k] = *p;
      }
      const auto c = ground(centroid_px);
      if (!ok || !c) continue;
      obs.centroid = *c;
      obs.frame_id = f;
      obs.grass = preds[i].label == kGrass;
      obs.probability = preds[i].grass_probability;
      obs.fully_visible = rect_fully_visible(obs.rect_px, cam.width, cam.height);
      if (obs.grass) obs.mask_id = masks_.add(f, region.mask);
      const auto res = store_.observe(obs);
      store_.merge_pass(res.roi_id);
      store_.retain_top();
      ++summary.regions;
      summary.grass_regions += obs.grass ? 1 : 0;
    }
    store_.record(f);
  }
  return summary;
}

FrontendResult run_frontend(const SceneBundle& scene, const ForestModel& model, const PipelineConfig& cfg) {
  cfg.validate();
  Frontend fe(scene, model, cfg);
  FrontendResult out;
  for (std::size_t f = 0; f < scene.log.size(); ++f)
    out.frames.push_back(fe.process(static_cast<int>(f), scene.frame(f)));
  out.rois = fe.store().rois();
  out.series = fe.store().series();
  out.timing = fe.timing();
  return out;
}

// ---------------------------------------------------------------------------

BackendResult run_backend(const RoiSnapshot& snapshot, const SceneBundle& scene, const MaskArchive& masks,
                          const PipelineConfig& cfg) {
  BackendResult out;
  out.snapshot_frame = snapshot.frame_id;
  const auto best = snapshot.best_candidates(static_cast<std::size_t>(cfg.backend_candidates));
  if (best.empty()) {
    out.status = "no_candidate";
    return out;
  }
  const RoiRecord& roi = best.front();
  out.roi = roi;
  const auto poses = scene.poses();

  std::vector<int> frames;
  std::vector<PosedMask> grass_masks;
  for (const auto& fm : roi.fine_masks) {
    if (!fm.grass || fm.mask_id < 0) continue;
    frames.push_back(fm.frame_id);
    grass_masks.push_back({masks.get(fm.mask_id), poses[fm.frame_id]});
  }
  if (grass_masks.empty()) {
    out.status = "no_candidate";
    return out;
  }
  std::sort(frames.begin(), frames.end());
  frames.erase(std::unique(frames.begin(), frames.end()), frames.end());

  const GridGeometry geometry =
      GridGeometry::centered(roi.centroid.head<2>(), cfg.grid_resolution, cfg.grid_rows, cfg.grid_cols);
  {
    ScopedTimer timer(out.timing, "terrain_layers");
    out.keyframes = select_keyframes(scene.tracks, frames, poses, cfg.keyframe_min_baseline,
                                     cfg.keyframe_min_connections);
    std::vector<Pose> key_poses;
    for (int k : out.keyframes) key_poses.push_back(poses[k]);
    const PointCloud cloud = sample_depth_oracle(scene, key_poses, scene.camera, cfg.oracle_sigma,
                                                 cfg.oracle_samples_per_frame,
                                                 static_cast<std::uint64_t>(snapshot.frame_id));
    out.cloud_points = static_cast<std::size_t>(cloud.cols());
    out.stack = build_stack(cloud, geometry, grass_masks, scene.camera, roi.centroid.z(), cfg.terrain);
  }
  {
    ScopedTimer timer(out.timing, "planning");
    out.wind.beta = cfg.wind_beta;
    out.wind.association_radius = cfg.wind_association_radius;
    const int last = std::min<int>(snapshot.frame_id, static_cast<int>(scene.log.size()) - 1);
    for (int i = 0; i <= last; ++i)
      out.wind = update_wind(out.wind, scene.log[i].wind, roi.centroid.head<2>(), scene.log[i].pose.position.head<2>());
    if (out.wind.n_measurements == 0) {
      out.status = "no_wind";
      return out;
    }
    std::vector<Eigen::Vector2d> polygon;
    for (const auto& c : roi.corners) polygon.push_back(c.head<2>());
    out.plan = plan_approach(*out.stack, cfg.approach, out.wind, polygon);
    out.status = out.plan.status;
  }
  return out;
}

RunReport run_pipeline(const SceneBundle& scene, const ForestModel& model, const PipelineConfig& cfg) {
  cfg.validate();
  RunReport report;
  report.scene_name = cfg.scene.empty() ? cfg.preset : cfg.scene.filename().string();
  report.seed = cfg.seed;
  report.frames = static_cast<int>(scene.log.size());
  Frontend fe(scene, model, cfg);
  std::future<BackendResult> pending;
  const auto start = std::chrono::steady_clock::now();
  const double t0 = scene.log.empty() ? 0.0 : scene.log.front().time;
  for (std::size_t i = 0; i < scene.log.size(); ++i) {
    const int f = static_cast<int>(i);
    if (cfg.realtime)
      std::this_thread::sleep_until(start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                                std::chrono::duration<double>(scene.log[i].time - t0)));
    const RgbImage frame = scene.frame(i);
    report.frame_summaries.push_back(fe.process(f, frame));
    if ((f + 1) % cfg.backend_period == 0 || i + 1 == scene.log.size()) {
      if (pending.valid()) report.backend_runs.push_back(pending.get());
      pending = std::async(std::launch::async, [snap = fe.store().snapshot(f), &scene, &fe, &cfg] {
        return run_backend(snap, scene, fe.masks(), cfg);
      });
    }
  }
  if (pending.valid()) report.backend_runs.push_back(pending.get());
  for (std::size_t i = 0; i + 1 < report.backend_runs.size(); ++i) report.backend_runs[i].stack.reset();

  report.rois = fe.store().rois();
  std::stable_sort(report.rois.begin(), report.rois.end(), [](const RoiRecord& a, const RoiRecord& b) {
    if (a.grade != b.grade) return a.grade > b.grade;
    return a.roi_id < b.roi_id;
  });
  report.series = fe.store().series();
  report.timing = fe.timing();
  for (const auto& b : report.backend_runs) report.timing.merge(b.timing);
  return report;
}

SceneBundle prepare_scene(const PipelineConfig& cfg) {
  SceneBundle b = cfg.scene.empty() ? generate_scene(preset_scene(cfg.preset, cfg.seed)) : load_bundle(cfg.scene);
  if (b.tracks.empty()) b.tracks = simulate_tracks(b, b.log, b.camera, cfg.track_density, cfg.track_pixel_noise);
  return b;
}

namespace {

json timing_json(const Timing& t) {
  json j = json::object();
  for (const auto& [stage, v] : t.samples()) {
    const auto s = t.stats(stage);
    j[stage] = {{"count", s.count}, {"mean_ms", s.mean}, {"std_ms", s.stddev}, {"total_ms", s.total}};
  }
  return j;
}

}  // namespace

std::string report_to_json(const RunReport& r, bool include_timing) {
  json sites = json::array();
  for (const auto& roi : r.rois) sites.push_back(json::parse(roi_to_json(roi)));
  json frames = json::array();
  for (const auto& f : r.frame_summaries)
    frames.push_back({{"frame", f.frame_id},
                      {"agl", f.agl},
                      {"agl_from_tracks", f.agl_from_tracks},
                      {"regions", f.regions},
                      {"grass_regions", f.grass_regions}});
  json runs = json::array();
  for (const auto& b : r.backend_runs) {
    json run = {{"snapshot_frame", b.snapshot_frame},
                {"status", b.status},
                {"roi_id", b.roi ? json(b.roi->roi_id) : json(nullptr)},
                {"keyframes", b.keyframes},
                {"cloud_points", b.cloud_points},
                {"wind", {{"speed", b.wind.magnitude()},
                          {"direction", {b.wind.direction().x(), b.wind.direction().y()}},
                          {"n_measurements", b.wind.n_measurements}}}};
    if (b.plan.feasible)
      run["touchdown"] = {b.plan.touchdown.x(), b.plan.touchdown.y(), b.plan.touchdown.z()};
    runs.push_back(std::move(run));
  }
  const BackendResult* fin = r.final_backend();
  json j = {{"format", "lsd-report"},
            {"version", 1},
            {"scene", r.scene_name},
            {"seed", r.seed},
            {"frames", r.frames},
            {"status", fin ? fin->status : std::string("no_candidate")},
            {"sites", sites},
            {"roi_series", json::parse(series_to_json(r.series))},
            {"frame_summaries", frames},
            {"backend_runs", runs},
            {"plan", fin && fin->stack ? json::parse(plan_to_json(fin->plan)) : json(nullptr)}};
  if (include_timing) j["timing"] = timing_json(r.timing);
  return j.dump(2);
}

void emit_report(const RunReport& r, const fs::path& outdir) {
  fs::create_directories(outdir);
  write_text_atomic(outdir / "report.json", report_to_json(r));
  write_text_atomic(outdir / "roi_series.csv", series_to_csv(r.series));
  const BackendResult* fin = r.final_backend();
  if (!fin || !fin->stack) return;
  export_layers(*fin->stack, outdir / "layers");
  write_text_atomic(outdir / "plan.json", plan_to_json(fin->plan));
  const fs::path png = outdir / "plan_overlay.png";
  fs::path tmp = png;
  tmp += ".tmp";
  write_png(tmp, plan_overlay(*fin->stack, fin->plan));
  fs::rename(tmp, png);
}

int exit_code_for(const RunReport& r) {
  const BackendResult* fin = r.final_backend();
  if (!fin || fin->status == "no_candidate") return 2;
  return fin->plan.feasible ? 0 : 3;
}

// ---------------------------------------------------------------------------

Dataset build_dataset(const DatasetBuildConfig& cfg) {
  Dataset data;
  GaborBankFft fft(cfg.gabor);
  for (int s = 0; s < cfg.max_scenes && data.size() < cfg.target_regions; ++s) {
    const SceneBundle scene = generate_scene(random_layout_scene(cfg.first_seed + static_cast<std::uint64_t>(s)));
    const std::size_t n = scene.log.size();
    const int per_scene = std::min<int>(cfg.frames_per_scene, static_cast<int>(n));
    for (int k = 0; k < per_scene && data.size() < cfg.target_regions; ++k) {
      const auto& pose = scene.log[(n * static_cast<std::size_t>(k)) / static_cast<std::size_t>(per_scene)].pose;
      Plane<std::uint8_t> labels;
      const RgbImage frame = render_frame(scene.terrain, pose, scene.camera, &labels);
      const double agl = pose.position.z() - scene.terrain.height_at(pose.position.head<2>());
      const auto regions = segment(frame, agl, cfg.segmenter);
      if (regions.empty()) continue;
      const auto responses = fft(rgb_to_gray(frame));
      for (const auto& r : regions) {
        if (data.size() >= cfg.target_regions) break;
        const auto inside = r.mask != 0;
        const auto seen = (inside && labels != kSkyLabel).count();
        const auto grass = (inside && labels == static_cast<std::uint8_t>(Label::grass)).count();
        if (seen == 0) continue;
        const bool is_grass = static_cast<double>(grass) >= cfg.grass_purity * static_cast<double>(seen);
        data.append(extract_features(frame, r.mask, responses), is_grass ? kGrass : kNotGrass);
      }
    }
  }
  return data;
}

}  // namespace lsd
