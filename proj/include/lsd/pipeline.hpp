#pragma once

#include "lsd/approach_planner.hpp"
#include "lsd/classifier.hpp"
#include "lsd/config.hpp"
#include "lsd/geom3d.hpp"
#include "lsd/region_manager.hpp"
#include "lsd/scene_sim.hpp"
#include "lsd/segmenter.hpp"
#include "lsd/terrain_map.hpp"

#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace lsd {

/// Wall-clock samples per named stage (milliseconds).
class Timing {
 public:
  struct Stats {
    std::size_t count = 0;
    double mean = 0.0;
    double stddev = 0.0;
    double total = 0.0;
  };

  void add(const std::string& stage, double ms) { samples_[stage].push_back(ms); }
  void merge(const Timing& other);
  Stats stats(const std::string& stage) const;
  const std::map<std::string, std::vector<double>>& samples() const { return samples_; }

 private:
  std::map<std::string, std::vector<double>> samples_;
};

/// Adds the elapsed time to `stage` on destruction.
class ScopedTimer {
 public:
  ScopedTimer(Timing& timing, std::string stage)
      : timing_(timing), stage_(std::move(stage)), start_(std::chrono::steady_clock::now()) {}
  ~ScopedTimer() {
    timing_.add(stage_, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count());
  }
  ScopedTimer(const ScopedTimer&) = delete;
  ScopedTimer& operator=(const ScopedTimer&) = delete;

 private:
  Timing& timing_;
  std::string stage_;
  std::chrono::steady_clock::time_point start_;
};

struct FrameSummary {
  int frame_id = 0;
  double agl = 0.0;
  bool agl_from_tracks = false;
  int regions = 0;
  int grass_regions = 0;
};

/// Frontend state over one scene: causal track ingestion, AGL estimate,
/// segmentation, classification and region management per frame.
class Frontend {
 public:
  Frontend(const SceneBundle& scene, const ForestModel& model, const PipelineConfig& cfg);

  /// Processes frames strictly in log order.
  FrameSummary process(int frame_id, const RgbImage& frame);

  const RoiStore& store() const { return store_; }
  const TrackStore& tracks() const { return tracks_; }
  const MaskArchive& masks() const { return masks_; }
  const Timing& timing() const { return timing_; }

 private:
  const SceneBundle& scene_;
  const ForestModel& model_;
  const PipelineConfig& cfg_;
  std::vector<Pose> poses_;
  std::vector<std::vector<std::pair<std::int64_t, Eigen::Vector2d>>> obs_by_frame_;
  TrackStore tracks_;
  RoiStore store_;
  MaskArchive masks_;
  GaborBankFft fft_;
  Timing timing_;
  double last_agl_;
  int next_frame_ = 0;
};

struct FrontendResult {
  std::vector<RoiRecord> rois;
  std::vector<RoiSeriesRow> series;
  std::vector<FrameSummary> frames;
  Timing timing;
};

/// All frames of the scene through the frontend.
FrontendResult run_frontend(const SceneBundle& scene, const ForestModel& model, const PipelineConfig& cfg);

struct BackendResult {
  int snapshot_frame = -1;
  std::string status;  // "feasible", "no_candidate", "no_wind", or the planner's status
  std::optional<RoiRecord> roi;
  std::vector<int> keyframes;
  std::size_t cloud_points = 0;
  std::optional<GridStack> stack;
  WindEstimate wind;
  ApproachPlan plan;
  Timing timing;
};

/// Fine analysis of the best ROI in a store snapshot.
BackendResult run_backend(const RoiSnapshot& snapshot, const SceneBundle& scene, const MaskArchive& masks,
                          const PipelineConfig& cfg);

struct RunReport {
  std::string scene_name;
  std::uint64_t seed = 0;
  int frames = 0;
  std::vector<RoiRecord> rois;  // final store, by descending grade
  std::vector<RoiSeriesRow> series;
  std::vector<FrameSummary> frame_summaries;
  std::vector<BackendResult> backend_runs;  // stacks dropped except for the last run
  Timing timing;

  const BackendResult* final_backend() const { return backend_runs.empty() ? nullptr : &backend_runs.back(); }
};

/// Frontend over all frames with a backend run on a store snapshot every
/// backend_period frames and after the last frame. Backend runs execute as a
/// separate task while the frontend continues.
RunReport run_pipeline(const SceneBundle& scene, const ForestModel& model, const PipelineConfig& cfg);

/// Loads cfg.scene or generates cfg.preset with cfg.seed; simulates tracks when
/// the bundle has none.
SceneBundle prepare_scene(const PipelineConfig& cfg);

/// report.json content; timing goes into a separate top-level "timing" object.
std::string report_to_json(const RunReport& report, bool include_timing = true);

/// report.json, roi_series.csv and, when the final backend produced a plan,
/// plan.json, plan_overlay.png and the layer files.
void emit_report(const RunReport& report, const std::filesystem::path& outdir);

/// 0 feasible, 2 no candidate, 3 infeasible plan.
int exit_code_for(const RunReport& report);

// ---------------------------------------------------------------------------

struct DatasetBuildConfig {
  std::uint64_t first_seed = 1;
  int target_regions = 600;
  int max_scenes = 400;
  int frames_per_scene = 12;
  double grass_purity = 0.8;  // grass iff this fraction of mask pixels see grass
  SegmenterConfig segmenter;
  GaborParams gabor;
};

/// Regions segmented from random-layout scenes, labeled by ground-truth majority.
Dataset build_dataset(const DatasetBuildConfig& cfg);

}  // namespace lsd
