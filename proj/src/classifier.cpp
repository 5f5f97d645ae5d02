#include "lsd/classifier.hpp"

#include "lsd/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace lsd {

using json = nlohmann::json;

std::vector<int> rgb_feature_columns() { return {0, 1, 2, 3, 4, 5}; }
std::vector<int> hsv_feature_columns() { return {6, 7, 8, 9, 10, 11}; }
std::vector<int> color_feature_columns() {
  std::vector<int> c(12);
  std::iota(c.begin(), c.end(), 0);
  return c;
}

namespace {

struct Moments {
  double sum = 0.0;
  double sum_sq = 0.0;
  void add(double v) {
    sum += v;
    sum_sq += v * v;
  }
};

// Population mean and std of `values` at the given pixel indices (two-pass).
template <typename Get>
std::pair<double, double> mean_std(const std::vector<Eigen::Index>& idx, Get&& get) {
  double sum = 0.0;
  for (auto i : idx) sum += get(i);
  const double mean = sum / static_cast<double>(idx.size());
  double var = 0.0;
  for (auto i : idx) {
    const double d = get(i) - mean;
    var += d * d;
  }
  return {mean, std::sqrt(var / static_cast<double>(idx.size()))};
}

std::vector<Eigen::Index> mask_indices(const Mask& mask) {
  std::vector<Eigen::Index> idx;
  for (Eigen::Index i = 0; i < mask.size(); ++i)
    if (mask.data()[i]) idx.push_back(i);
  if (idx.empty()) throw std::invalid_argument("feature extraction needs a non-empty mask");
  return idx;
}

void color_features(const RgbImage& image, const std::vector<Eigen::Index>& idx, FeatureVector& fv) {
  const std::array<const std::uint8_t*, 3> ch{image.r.data(), image.g.data(), image.b.data()};
  for (int k = 0; k < 3; ++k) {
    const auto [m, s] = mean_std(idx, [&](Eigen::Index i) { return static_cast<double>(ch[k][i]); });
    fv[2 * k] = m;
    fv[2 * k + 1] = s;
  }
  std::vector<Eigen::Vector3f> hsv(idx.size());
  for (std::size_t j = 0; j < idx.size(); ++j) {
    const auto i = idx[j];
    hsv[j] = rgb_to_hsv(ch[0][i], ch[1][i], ch[2][i]);
  }
  // Circular hue statistics.
  double sc = 0.0;
  double ss = 0.0;
  for (const auto& p : hsv) {
    const double a = p[0] * std::numbers::pi / 180.0;
    sc += std::cos(a);
    ss += std::sin(a);
  }
  const auto n = static_cast<double>(hsv.size());
  const double resultant = std::min(1.0, std::hypot(sc, ss) / n);
  double mean_h = std::atan2(ss, sc) * 180.0 / std::numbers::pi;
  if (mean_h < 0) mean_h += 360.0;
  if (mean_h >= 360.0) mean_h -= 360.0;
  fv[6] = resultant > 0 ? mean_h : 0.0;
  fv[7] = resultant > 0 ? std::sqrt(std::max(0.0, -2.0 * std::log(resultant))) * 180.0 / std::numbers::pi : 180.0;
  for (int k = 1; k < 3; ++k) {
    std::vector<Eigen::Index> order(hsv.size());
    std::iota(order.begin(), order.end(), 0);
    const auto [m, s] = mean_std(order, [&](Eigen::Index j) { return static_cast<double>(hsv[j][k]); });
    fv[6 + 2 * k] = m;
    fv[6 + 2 * k + 1] = s;
  }
}

}  // namespace

FeatureVector extract_features(const RgbImage& image, const Mask& mask, const std::array<FloatImage, 3>& gabor) {
  const auto idx = mask_indices(mask);
  FeatureVector fv;
  color_features(image, idx, fv);
  for (int k = 0; k < 3; ++k) {
    const float* g = gabor[k].data();
    const auto [m, s] = mean_std(idx, [&](Eigen::Index i) { return static_cast<double>(g[i]); });
    fv[12 + 2 * k] = m;
    fv[12 + 2 * k + 1] = s;
  }
  return fv;
}

FeatureVector extract_features(const RgbImage& image, const Mask& mask, const GaborParams& gabor) {
  const auto idx = mask_indices(mask);
  FeatureVector fv;
  color_features(image, idx, fv);
  const Eigen::Index cols = mask.cols();
  Eigen::Index r0 = mask.rows(), r1 = -1, c0 = cols, c1 = -1;
  for (auto i : idx) {
    r0 = std::min(r0, i / cols);
    r1 = std::max(r1, i / cols);
    c0 = std::min(c0, i % cols);
    c1 = std::max(c1, i % cols);
  }
  const auto responses = gabor_bank_window(rgb_to_gray(image), gabor, r0, c0, r1 - r0 + 1, c1 - c0 + 1);
  for (int k = 0; k < 3; ++k) {
    const auto [m, s] = mean_std(idx, [&](Eigen::Index i) {
      return static_cast<double>(responses[k](i / cols - r0, i % cols - c0));
    });
    fv[12 + 2 * k] = m;
    fv[12 + 2 * k + 1] = s;
  }
  return fv;
}

// ---------------------------------------------------------------------------

int DecisionTree::predict(std::span<const double> x) const {
  int n = 0;
  while (!nodes[n].leaf()) n = x[nodes[n].feature] <= nodes[n].threshold ? nodes[n].left : nodes[n].right;
  return nodes[n].label();
}

int DecisionTree::depth() const {
  std::function<int(int)> rec = [&](int n) -> int {
    if (nodes[n].leaf()) return 0;
    return 1 + std::max(rec(nodes[n].left), rec(nodes[n].right));
  };
  return nodes.empty() ? 0 : rec(0);
}

Prediction ForestModel::predict(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != n_features) throw std::invalid_argument("feature count mismatch");
  int votes = 0;
  for (const auto& t : trees) votes += t.predict(x);
  Prediction p;
  p.grass_probability = trees.empty() ? 0.0 : static_cast<double>(votes) / static_cast<double>(trees.size());
  p.label = p.grass_probability >= 0.5 ? kGrass : kNotGrass;
  return p;
}

Dataset Dataset::select_columns(std::span<const int> columns) const {
  Dataset out;
  out.features.resize(features.rows(), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t j = 0; j < columns.size(); ++j) out.features.col(static_cast<Eigen::Index>(j)) = features.col(columns[j]);
  out.labels = labels;
  return out;
}

Dataset Dataset::subset(std::span<const Eigen::Index> rows) const {
  Dataset out;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
  out.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) = features.row(rows[i]);
    out.labels.push_back(labels[rows[i]]);
  }
  return out;
}

void Dataset::append(const FeatureVector& fv, int label) {
  if (features.cols() != 0 && features.cols() != kFeatureCount) throw std::invalid_argument("column count mismatch");
  features.conservativeResize(features.rows() + 1, kFeatureCount);
  features.row(features.rows() - 1) = fv.transpose();
  labels.push_back(label);
}

namespace {

class TreeBuilder {
 public:
  TreeBuilder(const Dataset& data, const ForestParams& params, int mtry, Rng& rng)
      : data_(data), params_(params), mtry_(mtry), rng_(rng) {}

  DecisionTree build(std::vector<Eigen::Index> samples) {
    tree_.nodes.clear();
    grow(samples, 0);
    return std::move(tree_);
  }

 private:
  int grow(std::vector<Eigen::Index>& samples, int depth) {
    const int id = static_cast<int>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    std::array<int, 2> counts{0, 0};
    for (auto s : samples) ++counts[data_.labels[s]];
    tree_.nodes[id].counts = counts;
    const auto n = static_cast<int>(samples.size());
    const int min_branch = std::max(1, params_.min_samples_per_branch);
    if (depth >= params_.max_depth || counts[0] == 0 || counts[1] == 0 || n < 2 * min_branch) return id;

    const auto n_features = static_cast<int>(data_.features.cols());
    std::vector<int> features(n_features);
    std::iota(features.begin(), features.end(), 0);
    for (int i = 0; i < mtry_; ++i) std::swap(features[i], features[i + rng_.index(n_features - i)]);

    double best_score = std::numeric_limits<double>::infinity();
    int best_feature = -1;
    double best_threshold = 0.0;
    std::vector<std::pair<double, int>> column(samples.size());
    for (int fi = 0; fi < mtry_; ++fi) {
      const int f = features[fi];
      for (std::size_t i = 0; i < samples.size(); ++i)
        column[i] = {data_.features(samples[i], f), data_.labels[samples[i]]};
      std::sort(column.begin(), column.end());
      std::array<int, 2> left{0, 0};
      for (int i = 1; i < n; ++i) {
        ++left[column[i - 1].second];
        if (i < min_branch || n - i < min_branch) continue;
        if (!(column[i - 1].first < column[i].first)) continue;
        const std::array<int, 2> right{counts[0] - left[0], counts[1] - left[1]};
        const double nl = i;
        const double nr = n - i;
        const double gl = 1.0 - (left[0] * left[0] + left[1] * left[1]) / (nl * nl);
        const double gr = 1.0 - (right[0] * right[0] + right[1] * right[1]) / (nr * nr);
        const double score = nl * gl + nr * gr;
        if (score < best_score - 1e-12) {
          best_score = score;
          best_feature = f;
          best_threshold = 0.5 * (column[i - 1].first + column[i].first);
        }
      }
    }
    if (best_feature < 0) return id;

    std::vector<Eigen::Index> left_samples, right_samples;
    for (auto s : samples)
      (data_.features(s, best_feature) <= best_threshold ? left_samples : right_samples).push_back(s);
    samples.clear();
    samples.shrink_to_fit();
    tree_.nodes[id].feature = best_feature;
    tree_.nodes[id].threshold = best_threshold;
    const int l = grow(left_samples, depth + 1);
    tree_.nodes[id].left = l;
    const int r = grow(right_samples, depth + 1);
    tree_.nodes[id].right = r;
    return id;
  }

  const Dataset& data_;
  const ForestParams& params_;
  int mtry_;
  Rng& rng_;
  DecisionTree tree_;
};

}  // namespace

ForestModel fit_forest(const Dataset& data, const ForestParams& params) {
  if (data.size() == 0) throw std::invalid_argument("empty training set");
  if (static_cast<Eigen::Index>(data.labels.size()) != data.size()) throw std::invalid_argument("label count mismatch");
  ForestModel model;
  model.params = params;
  model.n_features = static_cast<int>(data.features.cols());
  const int mtry = params.features_per_split > 0
                       ? std::min(params.features_per_split, model.n_features)
                       : static_cast<int>(std::ceil(std::sqrt(static_cast<double>(model.n_features))));
  const auto n = static_cast<std::size_t>(data.size());
  for (int t = 0; t < params.n_trees; ++t) {
    Rng rng(hash64(params.seed ^ hash64(static_cast<std::uint64_t>(t) + 1)));
    std::vector<Eigen::Index> bag(n);
    for (auto& b : bag) b = static_cast<Eigen::Index>(rng.index(n));
    TreeBuilder builder(data, params, mtry, rng);
    model.trees.push_back(builder.build(std::move(bag)));
  }
  return model;
}

double cross_validate(const Dataset& data, const ForestParams& params, int folds, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(data.size());
  if (folds < 2 || static_cast<std::size_t>(folds) > n) throw std::invalid_argument("invalid fold count");
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(hash64(seed ^ 0x63766F6C64ull));
  for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.index(i + 1)]);
  std::size_t wrong = 0;
  for (int k = 0; k < folds; ++k) {
    std::vector<Eigen::Index> train_rows, test_rows;
    for (std::size_t i = 0; i < n; ++i) (static_cast<int>(i % folds) == k ? test_rows : train_rows).push_back(order[i]);
    ForestParams p = params;
    p.seed = hash64(params.seed + static_cast<std::uint64_t>(k));
    const auto model = fit_forest(data.subset(train_rows), p);
    for (auto r : test_rows) {
      const Eigen::VectorXd x = data.features.row(r).transpose();
      if (model.predict(std::span<const double>(x.data(), static_cast<std::size_t>(x.size()))).label != data.labels[r])
        ++wrong;
    }
  }
  return static_cast<double>(wrong) / static_cast<double>(n);
}

TrainResult train(const Dataset& data, const HyperGrid& grid, int n_trees, std::uint64_t seed, int folds) {
  if (data.size() < 10) throw std::invalid_argument("training needs at least 10 samples");
  const bool has0 = std::find(data.labels.begin(), data.labels.end(), kNotGrass) != data.labels.end();
  const bool has1 = std::find(data.labels.begin(), data.labels.end(), kGrass) != data.labels.end();
  if (!has0 || !has1) throw std::invalid_argument("training needs both labels");
  if (grid.depths.empty() || grid.min_samples.empty()) throw std::invalid_argument("empty hyperparameter grid");

  TrainResult result;
  result.cv.folds = folds;
  bool have_best = false;
  for (int depth : grid.depths) {
    for (int ms : grid.min_samples) {
      ForestParams p;
      p.max_depth = depth;
      p.min_samples_per_branch = ms;
      p.n_trees = n_trees;
      p.seed = seed;
      const CvEntry e{depth, ms, cross_validate(data, p, folds, seed)};
      result.cv.entries.push_back(e);
      const auto& b = result.cv.best;
      const bool better = !have_best || e.error < b.error ||
                          (e.error == b.error && (e.depth < b.depth || (e.depth == b.depth && e.min_samples > b.min_samples)));
      if (better) {
        result.cv.best = e;
        have_best = true;
      }
    }
  }
  ForestParams p;
  p.max_depth = result.cv.best.depth;
  p.min_samples_per_branch = result.cv.best.min_samples;
  p.n_trees = n_trees;
  p.seed = seed;
  result.model = fit_forest(data, p);
  return result;
}

// ---------------------------------------------------------------------------

namespace {

json node_json(const DecisionTree& t, int n) {
  const auto& node = t.nodes[n];
  json j = {{"counts", {node.counts[0], node.counts[1]}}};
  if (!node.leaf()) {
    j["feature"] = node.feature;
    j["threshold"] = node.threshold;
    j["left"] = node_json(t, node.left);
    j["right"] = node_json(t, node.right);
  }
  return j;
}

int node_from(const json& j, DecisionTree& t) {
  const int id = static_cast<int>(t.nodes.size());
  t.nodes.emplace_back();
  t.nodes[id].counts = {j.at("counts")[0].get<int>(), j.at("counts")[1].get<int>()};
  if (j.contains("feature")) {
    t.nodes[id].feature = j["feature"];
    t.nodes[id].threshold = j["threshold"];
    const int l = node_from(j.at("left"), t);
    t.nodes[id].left = l;
    const int r = node_from(j.at("right"), t);
    t.nodes[id].right = r;
  }
  return id;
}

}  // namespace

std::string model_to_json(const ForestModel& m) {
  json trees = json::array();
  for (const auto& t : m.trees) trees.push_back(node_json(t, 0));
  json j = {{"format", "lsd-forest"},
            {"version", 1},
            {"n_features", m.n_features},
            {"params",
             {{"max_depth", m.params.max_depth},
              {"min_samples_per_branch", m.params.min_samples_per_branch},
              {"n_trees", m.params.n_trees},
              {"seed", m.params.seed},
              {"features_per_split", m.params.features_per_split}}},
            {"trees", trees}};
  return j.dump();
}

ForestModel model_from_json(const std::string& text) {
  const json j = json::parse(text);
  if (j.value("format", "") != "lsd-forest" || j.value("version", 0) != 1)
    throw std::runtime_error("unsupported model file format");
  ForestModel m;
  m.n_features = j.at("n_features");
  const auto& p = j.at("params");
  m.params.max_depth = p.at("max_depth");
  m.params.min_samples_per_branch = p.at("min_samples_per_branch");
  m.params.n_trees = p.at("n_trees");
  m.params.seed = p.at("seed");
  m.params.features_per_split = p.value("features_per_split", 0);
  for (const auto& t : j.at("trees")) {
    DecisionTree tree;
    node_from(t, tree);
    m.trees.push_back(std::move(tree));
  }
  return m;
}

void save_model(const std::filesystem::path& path, const ForestModel& model) {
  write_text_atomic(path, model_to_json(model));
}

ForestModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return model_from_json(ss.str());
}

void write_dataset_csv(const std::filesystem::path& path, const Dataset& data) {
  std::ostringstream out;
  for (Eigen::Index c = 0; c < data.features.cols(); ++c) out << 'f' << c << ',';
  out << "label\n" << std::setprecision(17);
  for (Eigen::Index r = 0; r < data.size(); ++r) {
    for (Eigen::Index c = 0; c < data.features.cols(); ++c) out << data.features(r, c) << ',';
    out << data.labels[r] << '\n';
  }
  write_text_atomic(path, out.str());
}

Dataset read_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset: " + path.string());
  std::string line;
  std::getline(in, line);
  const auto cols = static_cast<Eigen::Index>(std::count(line.begin(), line.end(), ','));
  std::vector<double> values;
  Dataset d;
  Eigen::Index rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    for (Eigen::Index c = 0; c < cols; ++c) {
      double v;
      if (!(ls >> v)) throw std::runtime_error("malformed dataset row");
      values.push_back(v);
    }
    int label;
    if (!(ls >> label) || (label != 0 && label != 1)) throw std::runtime_error("dataset label must be 0 or 1");
    d.labels.push_back(label);
    ++rows;
  }
  d.features = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(values.data(), rows, cols);
  return d;
}

std::vector<int> parse_int_list(const std::string& text) {
  auto parse = [&text](std::string_view item) {
    int v = 0;
    const auto [end, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || end != item.data() + item.size() || item.empty())
      throw std::invalid_argument("bad integer list: " + text);
    return v;
  };
  std::vector<int> out;
  const std::string_view sv(text);
  const auto dots = sv.find("..");
  if (dots != std::string_view::npos) {
    const int lo = parse(sv.substr(0, dots));
    const int hi = parse(sv.substr(dots + 2));
    if (lo > hi) throw std::invalid_argument("empty integer range: " + text);
    for (int v = lo; v <= hi; ++v) out.push_back(v);
    return out;
  }
  std::size_t start = 0;
  while (start <= sv.size()) {
    const auto comma = std::min(sv.find(',', start), sv.size());
    out.push_back(parse(sv.substr(start, comma - start)));
    start = comma + 1;
  }
  return out;
}

}  // namespace lsd
