#include "lsd/pipeline.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct RunOptions {
  std::string scene;
  std::string config;
  std::string model;
  std::string out;
  std::uint64_t seed = 0;
  int backend_period = 0;
  bool realtime = false;
  std::string preset;
};

lsd::PipelineConfig resolve_config(const RunOptions& o) {
  lsd::PipelineConfig cfg;
  if (!o.config.empty()) cfg = lsd::load_config(o.config);
  if (!o.scene.empty()) cfg.scene = o.scene;
  if (!o.preset.empty()) cfg.preset = o.preset;
  if (!o.model.empty()) cfg.model = o.model;
  if (!o.out.empty()) cfg.out = o.out;
  if (o.seed != 0) cfg.seed = o.seed;
  if (o.backend_period != 0) cfg.backend_period = o.backend_period;
  if (o.realtime) cfg.realtime = true;
  cfg.validate();
  return cfg;
}

Eigen::Vector2d parse_vec2(const std::string& text) {
  std::stringstream ss(text);
  std::string a, b;
  if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || ss.rdbuf()->in_avail() > 0)
    throw std::invalid_argument("expected x,y: " + text);
  return {std::stod(a), std::stod(b)};
}

lsd::HyperGrid parse_grid(const std::vector<std::string>& items) {
  lsd::HyperGrid grid;
  for (const auto& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("grid item must be key=values: " + item);
    const std::string key = item.substr(0, eq);
    const auto values = lsd::parse_int_list(item.substr(eq + 1));
    if (key == "depths") grid.depths = values;
    else if (key == "minsamples") grid.min_samples = values;
    else throw std::invalid_argument("unknown grid key: " + key);
  }
  return grid;
}

void print_timing(const lsd::Timing& timing) {
  for (const auto& [stage, v] : timing.samples()) {
    const auto s = timing.stats(stage);
    std::cout << "  " << stage << ": " << s.mean << " +- " << s.stddev << " ms (n=" << s.count << ")\n";
  }
}

lsd::GrayImage layer_preview(const lsd::Layer& layer) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (Eigen::Index i = 0; i < layer.values.size(); ++i) {
    const double v = layer.values(i);
    if (!layer.valid(i) || !std::isfinite(v)) continue;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  lsd::GrayImage img(layer.values.rows(), layer.values.cols());
  const double span = hi > lo ? hi - lo : 1.0;
  for (Eigen::Index r = 0; r < img.rows(); ++r)
    for (Eigen::Index c = 0; c < img.cols(); ++c) {
      const double v = layer.values(r, c);
      const bool ok = layer.valid(r, c) && std::isfinite(v);
      // north up: grid row 0 is the southern edge
      img(img.rows() - 1 - r, c) = ok ? static_cast<std::uint8_t>(std::lround(255.0 * (v - lo) / span)) : 0;
    }
  return img;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Landing site detection and approach planning on simulated survey flights"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("generate-scene", "Generate a preset scene bundle");
  std::string gen_preset = "fields", gen_out;
  std::uint64_t gen_seed = 1;
  bool gen_no_frames = false;
  int gen_density = 60;
  double gen_noise = 0.5;
  gen->add_option("--preset", gen_preset, "flat, ramp, fields, fields-house")->capture_default_str();
  gen->add_option("--seed", gen_seed)->capture_default_str();
  gen->add_option("--out", gen_out, "bundle directory")->required();
  gen->add_flag("--no-frames", gen_no_frames, "skip pre-rendering frames");
  gen->add_option("--track-density", gen_density)->capture_default_str();
  gen->add_option("--track-noise", gen_noise, "pixel noise sigma")->capture_default_str();

  auto* ds = app.add_subcommand("build-dataset", "Segment random-layout scenes into a labeled feature CSV");
  lsd::DatasetBuildConfig ds_cfg;
  std::string ds_out;
  ds->add_option("--out", ds_out, "CSV path")->required();
  ds->add_option("--seed", ds_cfg.first_seed, "first scene seed")->capture_default_str();
  ds->add_option("--regions", ds_cfg.target_regions)->capture_default_str();
  ds->add_option("--max-scenes", ds_cfg.max_scenes)->capture_default_str();
  ds->add_option("--frames-per-scene", ds_cfg.frames_per_scene)->capture_default_str();

  auto* tr = app.add_subcommand("train-classifier", "Grid-search and fit the random forest");
  std::string tr_data, tr_out, tr_report;
  std::vector<std::string> tr_grid;
  int tr_trees = 50, tr_folds = 10;
  std::uint64_t tr_seed = 1;
  tr->add_option("--data", tr_data, "dataset CSV")->required()->check(CLI::ExistingFile);
  tr->add_option("--out", tr_out, "model JSON")->required();
  tr->add_option("--grid", tr_grid, "depths=2..12 minsamples=2,5,10,20");
  tr->add_option("--trees", tr_trees)->capture_default_str();
  tr->add_option("--folds", tr_folds)->capture_default_str();
  tr->add_option("--seed", tr_seed)->capture_default_str();
  tr->add_option("--cv-report", tr_report, "write the CV table as JSON");

  auto* run = app.add_subcommand("run", "Run frontend and periodic backend over a scene");
  RunOptions ro;
  run->add_option("--scene", ro.scene, "bundle directory (default: generate the preset)");
  run->add_option("--preset", ro.preset, "preset to generate when no scene is given");
  run->add_option("--config", ro.config, "key = value config file")->check(CLI::ExistingFile);
  run->add_option("--model", ro.model, "trained model JSON");
  run->add_option("--out", ro.out, "output directory");
  run->add_option("--seed", ro.seed);
  run->add_option("--backend-period", ro.backend_period, "frames between backend runs");
  run->add_flag("--realtime", ro.realtime, "throttle to log timestamps");
  bool print_config = false;
  run->add_flag("--print-config", print_config, "print the resolved config and exit");

  auto* plan = app.add_subcommand("plan", "Plan an approach on exported layers");
  std::string plan_layers, plan_wind, plan_config, plan_out;
  plan->add_option("--layers", plan_layers, "layer directory")->required()->check(CLI::ExistingDirectory);
  plan->add_option("--wind", plan_wind, "wind velocity wx,wy in m/s")->required();
  plan->add_option("--config", plan_config)->check(CLI::ExistingFile);
  plan->add_option("--out", plan_out, "directory for plan.json and plan_overlay.png");

  auto* dump = app.add_subcommand("dump-layers", "Write 8-bit previews of exported layers");
  std::string dump_layers, dump_out;
  dump->add_option("--layers", dump_layers, "layer directory")->required()->check(CLI::ExistingDirectory);
  dump->add_option("--out", dump_out, "preview directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      lsd::SceneBundle b = lsd::generate_scene(lsd::preset_scene(gen_preset, gen_seed));
      b.tracks = lsd::simulate_tracks(b, b.log, b.camera, gen_density, gen_noise);
      lsd::save_bundle(b, gen_out, !gen_no_frames);
      std::cout << "scene " << gen_preset << ": " << b.log.size() << " frames, " << b.tracks.size() << " tracks -> "
                << gen_out << "\n";
      return 0;
    }
    if (*ds) {
      const lsd::Dataset d = lsd::build_dataset(ds_cfg);
      lsd::write_dataset_csv(ds_out, d);
      std::cout << d.size() << " regions, " << std::count(d.labels.begin(), d.labels.end(), lsd::kGrass) << " grass -> " << ds_out
                << "\n";
      return 0;
    }
    if (*tr) {
      const lsd::Dataset d = lsd::read_dataset_csv(tr_data);
      const auto result = lsd::train(d, parse_grid(tr_grid), tr_trees, tr_seed, tr_folds);
      lsd::save_model(tr_out, result.model);
      if (!tr_report.empty()) {
        json rows = json::array();
        for (const auto& e : result.cv.entries)
          rows.push_back({{"depth", e.depth}, {"min_samples", e.min_samples}, {"error", e.error}});
        lsd::write_text_atomic(tr_report, json{{"folds", result.cv.folds},
                                               {"entries", rows},
                                               {"best", {{"depth", result.cv.best.depth},
                                                         {"min_samples", result.cv.best.min_samples},
                                                         {"error", result.cv.best.error}}}}
                                              .dump(2));
      }
      std::cout << "best depth " << result.cv.best.depth << ", min samples " << result.cv.best.min_samples
                << ", cv error " << result.cv.best.error << " -> " << tr_out << "\n";
      return 0;
    }
    if (*run) {
      const lsd::PipelineConfig cfg = resolve_config(ro);
      if (print_config) {
        std::cout << lsd::config_to_text(cfg);
        return 0;
      }
      if (cfg.model.empty()) throw std::invalid_argument("run needs a trained model (--model or model = ...)");
      const lsd::ForestModel model = lsd::load_model(cfg.model);
      const lsd::SceneBundle scene = lsd::prepare_scene(cfg);
      const lsd::RunReport report = lsd::run_pipeline(scene, model, cfg);
      lsd::emit_report(report, cfg.out);
      const auto* fin = report.final_backend();
      std::cout << report.frames << " frames, " << report.rois.size() << " ROIs, status "
                << (fin ? fin->status : std::string("no_candidate")) << "\n";
      print_timing(report.timing);
      return lsd::exit_code_for(report);
    }
    if (*plan) {
      lsd::PipelineConfig cfg;
      if (!plan_config.empty()) cfg = lsd::load_config(plan_config);
      const lsd::GridStack stack = lsd::import_layers(plan_layers);
      lsd::WindEstimate wind;
      wind.beta = cfg.wind_beta;
      wind.association_radius = cfg.wind_association_radius;
      wind = lsd::update_wind(wind, parse_vec2(plan_wind), stack.geometry.center(), stack.geometry.center());
      const lsd::ApproachPlan p = lsd::plan_approach(stack, cfg.approach, wind);
      const std::string text = lsd::plan_to_json(p);
      if (plan_out.empty()) {
        std::cout << text << "\n";
      } else {
        fs::create_directories(plan_out);
        lsd::write_text_atomic(fs::path(plan_out) / "plan.json", text);
        lsd::write_png(fs::path(plan_out) / "plan_overlay.png", lsd::plan_overlay(stack, p));
        std::cout << p.status << " -> " << plan_out << "\n";
      }
      if (p.feasible) return 0;
      return p.status == "no_candidate" ? 2 : 3;
    }
    if (*dump) {
      const lsd::GridStack stack = lsd::import_layers(dump_layers);
      fs::create_directories(dump_out);
      for (const auto& name : lsd::layer_names())
        lsd::write_png(fs::path(dump_out) / (name + ".png"), layer_preview(lsd::layer_by_name(stack, name)));
      std::cout << lsd::layer_names().size() << " previews -> " << dump_out << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
