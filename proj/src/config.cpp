#include "lsd/config.hpp"

#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace lsd {

namespace {

struct Key {
  const char* name;
  std::function<void(PipelineConfig&, const std::string&)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

double to_double(const std::string& v) {
  std::size_t used = 0;
  const double d = std::stod(v, &used);
  if (used != v.size()) throw std::invalid_argument("not a number: " + v);
  return d;
}

long long to_int(const std::string& v) {
  std::size_t used = 0;
  const long long i = std::stoll(v, &used);
  if (used != v.size()) throw std::invalid_argument("not an integer: " + v);
  return i;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("not a boolean: " + v);
}

std::array<double, 4> to_poly(const std::string& v) {
  std::array<double, 4> out{};
  std::stringstream ss(v);
  std::string item;
  int i = 0;
  while (std::getline(ss, item, ',')) {
    if (i >= 4) throw std::invalid_argument("cubic needs 4 coefficients");
    out[i++] = to_double(item);
  }
  if (i != 4) throw std::invalid_argument("cubic needs 4 coefficients");
  return out;
}

std::string poly_text(const std::array<double, 4>& p) {
  return fmt(p[0]) + "," + fmt(p[1]) + "," + fmt(p[2]) + "," + fmt(p[3]);
}

#define LSD_DOUBLE(key, field) \
  Key { key, [](PipelineConfig& c, const std::string& v) { c.field = to_double(v); }, \
        [](const PipelineConfig& c) { return fmt(c.field); } }
#define LSD_INT(key, field) \
  Key { key, [](PipelineConfig& c, const std::string& v) { c.field = static_cast<decltype(c.field)>(to_int(v)); }, \
        [](const PipelineConfig& c) { return std::to_string(c.field); } }
#define LSD_BOOL(key, field) \
  Key { key, [](PipelineConfig& c, const std::string& v) { c.field = to_bool(v); }, \
        [](const PipelineConfig& c) { return std::string(c.field ? "true" : "false"); } }
#define LSD_STRING(key, field) \
  Key { key, [](PipelineConfig& c, const std::string& v) { c.field = v; }, \
        [](const PipelineConfig& c) { return std::string(c.field); } }
#define LSD_PATH(key, field) \
  Key { key, [](PipelineConfig& c, const std::string& v) { c.field = v; }, \
        [](const PipelineConfig& c) { return c.field.string(); } }

const std::vector<Key>& keys() {
  static const std::vector<Key> k = {
      LSD_PATH("scene", scene),
      LSD_STRING("preset", preset),
      LSD_PATH("model", model),
      LSD_PATH("out", out),
      LSD_INT("seed", seed),
      LSD_INT("backend_period", backend_period),
      LSD_INT("backend_candidates", backend_candidates),
      LSD_BOOL("realtime", realtime),
      LSD_BOOL("gabor.fft", use_fft_gabor),
      LSD_DOUBLE("initial_agl", initial_agl),
      LSD_INT("tracks.density", track_density),
      LSD_DOUBLE("tracks.pixel_noise", track_pixel_noise),
      Key{"segmenter.canny_poly", [](PipelineConfig& c, const std::string& v) { c.segmenter.canny_poly = to_poly(v); },
          [](const PipelineConfig& c) { return poly_text(c.segmenter.canny_poly); }},
      Key{"segmenter.dtf_poly", [](PipelineConfig& c, const std::string& v) { c.segmenter.dtf_poly = to_poly(v); },
          [](const PipelineConfig& c) { return poly_text(c.segmenter.dtf_poly); }},
      LSD_DOUBLE("segmenter.agl_min", segmenter.agl_min),
      LSD_DOUBLE("segmenter.agl_max", segmenter.agl_max),
      LSD_INT("segmenter.min_region_area_px", segmenter.min_region_area_px),
      LSD_DOUBLE("gabor.sigma", gabor.sigma),
      LSD_DOUBLE("gabor.aspect_ratio", gabor.aspect_ratio),
      LSD_DOUBLE("gabor.phase", gabor.phase),
      LSD_INT("gabor.kernel_size", gabor.kernel_size),
      LSD_INT("depth.n", depth.n),
      LSD_INT("depth.min_track_length", depth.min_track_length),
      LSD_DOUBLE("depth.idw_power", depth.idw_power),
      LSD_DOUBLE("depth.min_baseline_ratio", depth.min_baseline_ratio),
      LSD_DOUBLE("keyframes.min_baseline", keyframe_min_baseline),
      LSD_INT("keyframes.min_connections", keyframe_min_connections),
      LSD_DOUBLE("roi.area_min", grading.area_min),
      LSD_INT("roi.n_obs_min", grading.n_obs_min),
      LSD_INT("roi.capacity", roi_capacity),
      LSD_DOUBLE("oracle.sigma", oracle_sigma),
      LSD_INT("oracle.samples_per_frame", oracle_samples_per_frame),
      LSD_DOUBLE("grid.resolution", grid_resolution),
      LSD_INT("grid.rows", grid_rows),
      LSD_INT("grid.cols", grid_cols),
      LSD_DOUBLE("terrain.idw_radius_cells", terrain.idw_radius_cells),
      LSD_DOUBLE("terrain.idw_power", terrain.idw_power),
      Key{"terrain.tri_mode",
          [](PipelineConfig& c, const std::string& v) {
            if (v == "rss") c.terrain.tri_mode = TriMode::root_sum_square;
            else if (v == "mad") c.terrain.tri_mode = TriMode::mean_abs_diff;
            else throw std::invalid_argument("terrain.tri_mode must be rss or mad");
          },
          [](const PipelineConfig& c) {
            return std::string(c.terrain.tri_mode == TriMode::root_sum_square ? "rss" : "mad");
          }},
      LSD_DOUBLE("hazard.max_slope", terrain.thresholds.max_slope),
      LSD_DOUBLE("hazard.max_tri", terrain.thresholds.max_tri),
      LSD_DOUBLE("approach.v_land", approach.v_land),
      LSD_DOUBLE("approach.gamma_land", approach.gamma_land),
      LSD_DOUBLE("approach.delta_beta_w", approach.delta_beta_w),
      LSD_DOUBLE("approach.h_app", approach.h_app),
      LSD_DOUBLE("approach.phi_land", approach.phi_land),
      LSD_DOUBLE("approach.delta_td", approach.delta_td),
      LSD_DOUBLE("approach.g", approach.g),
      LSD_DOUBLE("approach.safety_margin", approach.safety_margin),
      LSD_DOUBLE("approach.flare_tolerance", approach.flare_tolerance),
      LSD_INT("approach.max_candidates", approach.max_candidates),
      LSD_DOUBLE("wind.beta", wind_beta),
      LSD_DOUBLE("wind.association_radius", wind_association_radius),
  };
  return k;
}

#undef LSD_DOUBLE
#undef LSD_INT
#undef LSD_BOOL
#undef LSD_STRING
#undef LSD_PATH

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void PipelineConfig::validate() const {
  if (backend_period < 1) throw std::invalid_argument("backend_period must be >= 1");
  if (backend_candidates < 1) throw std::invalid_argument("backend_candidates must be >= 1");
  if (!scene.empty() && !std::filesystem::exists(scene)) throw std::invalid_argument("scene not found: " + scene.string());
  if (!model.empty() && !std::filesystem::exists(model)) throw std::invalid_argument("model not found: " + model.string());
  if (roi_capacity < 1) throw std::invalid_argument("roi.capacity must be >= 1");
  if (!(initial_agl > 0)) throw std::invalid_argument("initial_agl must be positive");
  if (!(wind_beta > 0 && wind_beta <= 1)) throw std::invalid_argument("wind.beta must be in (0, 1]");
  if (!(wind_association_radius >= 0)) throw std::invalid_argument("wind.association_radius must be non-negative");
  if (oracle_samples_per_frame < 1) throw std::invalid_argument("oracle.samples_per_frame must be >= 1");
  segmenter.validate();
  gabor.validate();
  depth.validate();
  terrain.thresholds.validate();
  approach.validate();
  GridGeometry g;
  g.resolution = grid_resolution;
  g.rows = grid_rows;
  g.cols = grid_cols;
  g.validate();
}

PipelineConfig parse_config(const std::string& text, PipelineConfig cfg) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto& table = keys();
    const auto it = std::find_if(table.begin(), table.end(), [&](const Key& k) { return key == k.name; });
    if (it == table.end()) throw std::invalid_argument("config line " + std::to_string(lineno) + ": unknown key " + key);
    try {
      it->set(cfg, value);
    } catch (const std::exception& e) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + " (" + key + "): " + e.what());
    }
  }
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig base) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::string config_to_text(const PipelineConfig& cfg) {
  std::string out;
  for (const auto& k : keys()) out += std::string(k.name) + " = " + k.get(cfg) + "\n";
  return out;
}

}  // namespace lsd
