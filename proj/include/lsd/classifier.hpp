#pragma once

#include "lsd/image.hpp"
#include "lsd/imgproc.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace lsd {

inline constexpr int kFeatureCount = 18;

/// Mask-restricted statistics in fixed order:
///  0-5   R, G, B    (mean, std) interleaved
///  6-11  H, S, V    (mean, std); hue mean/std are circular, in degrees
///  12-17 Gabor lambda = 0.5, 1, 5 (mean, std)
/// All standard deviations are population deviations.
using FeatureVector = Eigen::Matrix<double, kFeatureCount, 1>;

std::vector<int> rgb_feature_columns();
std::vector<int> hsv_feature_columns();
std::vector<int> color_feature_columns();

/// Gabor responses computed on the mask's bounding box plus the kernel margin.
FeatureVector extract_features(const RgbImage& image, const Mask& mask, const GaborParams& gabor = {});

/// Same, reading precomputed full-frame Gabor responses.
FeatureVector extract_features(const RgbImage& image, const Mask& mask, const std::array<FloatImage, 3>& gabor);

constexpr int kNotGrass = 0;
constexpr int kGrass = 1;

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;  // go left when x[feature] <= threshold
  int left = -1;
  int right = -1;
  std::array<int, 2> counts{0, 0};  // training samples per label reaching this node

  bool leaf() const { return feature < 0; }
  /// Majority label; ties go to grass.
  int label() const { return counts[kGrass] >= counts[kNotGrass] ? kGrass : kNotGrass; }
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  int predict(std::span<const double> x) const;
  int depth() const;
};

struct ForestParams {
  int max_depth = 8;
  int min_samples_per_branch = 5;
  int n_trees = 50;
  std::uint64_t seed = 0;
  /// 0 selects ceil(sqrt(n_features)).
  int features_per_split = 0;
};

struct Prediction {
  int label = kNotGrass;
  double grass_probability = 0.0;
};

struct ForestModel {
  ForestParams params;
  int n_features = kFeatureCount;
  std::vector<DecisionTree> trees;

  /// Fraction of trees voting grass; label grass iff the fraction is >= 0.5.
  Prediction predict(std::span<const double> x) const;
  Prediction predict(const FeatureVector& fv) const { return predict(std::span<const double>(fv.data(), kFeatureCount)); }
};

struct Dataset {
  Eigen::MatrixXd features;  // one sample per row
  std::vector<int> labels;

  Eigen::Index size() const { return features.rows(); }
  Dataset select_columns(std::span<const int> columns) const;
  Dataset subset(std::span<const Eigen::Index> rows) const;
  void append(const FeatureVector& fv, int label);
};

struct HyperGrid {
  std::vector<int> depths{2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
  std::vector<int> min_samples{2, 5, 10, 20};
};

struct CvEntry {
  int depth = 0;
  int min_samples = 0;
  double error = 0.0;
};

struct CvReport {
  int folds = 10;
  std::vector<CvEntry> entries;
  CvEntry best;
};

struct TrainResult {
  ForestModel model;
  CvReport cv;
};

/// Bootstrap-aggregated CART trees, Gini splits, per-node feature subsampling.
ForestModel fit_forest(const Dataset& data, const ForestParams& params);

/// k-fold misclassification rate; fold assignment is a seeded shuffle.
double cross_validate(const Dataset& data, const ForestParams& params, int folds, std::uint64_t seed);

/// Grid search by k-fold CV, then refit on all data with the best cell
/// (ties: smaller depth, then larger min_samples).
TrainResult train(const Dataset& data, const HyperGrid& grid, int n_trees, std::uint64_t seed, int folds = 10);

std::string model_to_json(const ForestModel& model);
ForestModel model_from_json(const std::string& text);
void save_model(const std::filesystem::path& path, const ForestModel& model);
ForestModel load_model(const std::filesystem::path& path);

/// CSV rows: feature columns then a {0,1} label column; first line is a header.
void write_dataset_csv(const std::filesystem::path& path, const Dataset& data);
Dataset read_dataset_csv(const std::filesystem::path& path);

/// Parses "2..12" or "2,5,10,20" into integers.
std::vector<int> parse_int_list(const std::string& text);

}  // namespace lsd
