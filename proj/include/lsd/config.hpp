#pragma once

#include "lsd/approach_planner.hpp"
#include "lsd/geom3d.hpp"
#include "lsd/region_manager.hpp"
#include "lsd/segmenter.hpp"
#include "lsd/terrain_map.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace lsd {

/// Everything a pipeline run depends on. Text form is one `key = value` per line;
/// `#` starts a comment. See README for the key list.
struct PipelineConfig {
  std::filesystem::path scene;       // bundle directory; empty = generate `preset`
  std::string preset = "fields";
  std::filesystem::path model;
  std::filesystem::path out = "out";
  std::uint64_t seed = 1;
  int backend_period = 25;
  int backend_candidates = 1;
  bool realtime = false;
  bool use_fft_gabor = true;
  double initial_agl = 100.0;  // used until the first coarse depth is available

  // Simulated inputs used when the bundle carries no tracks.
  int track_density = 60;
  double track_pixel_noise = 0.5;

  SegmenterConfig segmenter;
  GaborParams gabor;
  DepthQueryConfig depth;
  double keyframe_min_baseline = 5.0;
  int keyframe_min_connections = 30;
  GradeConfig grading;
  int roi_capacity = 20;

  double oracle_sigma = 0.05;
  int oracle_samples_per_frame = 120000;

  double grid_resolution = 1.0;
  int grid_rows = 300;
  int grid_cols = 300;
  TerrainConfig terrain;

  ApproachParams approach;
  double wind_beta = 0.2;
  double wind_association_radius = 150.0;

  void validate() const;
};

PipelineConfig parse_config(const std::string& text, PipelineConfig base = {});
PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig base = {});
std::string config_to_text(const PipelineConfig& cfg);

}  // namespace lsd
