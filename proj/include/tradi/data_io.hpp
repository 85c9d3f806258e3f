#pragma once

#include "tradi/common.hpp"
#include "tradi/metrics.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace tradi::data {

struct Dataset {
  Matrix features;
  Vector targets;             // regression targets
  std::vector<int> labels;    // class indices; -1 sentinel for OOD rows
  std::vector<bool> in_dist;  // empty means "all in-distribution"
  metrics::TaskKind task = metrics::TaskKind::regression;

  Eigen::Index rows() const { return features.rows(); }
  bool row_in_dist(std::size_t i) const { return in_dist.empty() || in_dist[i]; }
};

// Joint draw from a zero-mean GP with RBF kernel (unit variance, unit
// length-scale) plus observation noise of variance 0.3. Training inputs are
// uniform on [-4, 4]; test inputs form a grid on [-8, 8] so the harness can
// probe extrapolation at least one length-scale outside the training range.
struct GpToyData {
  Dataset train;
  Dataset test;
  double train_lo = 0.0, train_hi = 0.0;
};

GpToyData synth_gp(int n_train, int n_test, std::uint64_t seed);

// Numeric CSV loader; target_column < 0 counts from the end (-1 = last).
// Rows must be fully numeric; a header row is skipped when detected.
Dataset uci_load(const std::string& csv_path, int target_column = -1);

// Twenty random 90/10 train/test splits (not a partition).
struct FoldPlan {
  std::vector<std::vector<int>> train_idx;
  std::vector<std::vector<int>> test_idx;
  std::uint64_t seed = 0;
};

FoldPlan make_folds(const Dataset& ds, int folds, std::uint64_t seed);

// Z-score statistics fitted on a training split only.
struct Normalization {
  Vector feature_mean, feature_std;
  double target_mean = 0.0, target_std = 1.0;
};

Normalization fit_normalization(const Dataset& ds, const std::vector<int>& rows);
Matrix normalize_features(const Matrix& x, const Normalization& norm);
Vector normalize_targets(const Vector& y, const Normalization& norm);
double denormalize_mean(double mu, const Normalization& norm);
double denormalize_variance(double sigma2, const Normalization& norm);

Dataset subset(const Dataset& ds, const std::vector<int>& rows);

// IDX files: big-endian magic (two zero bytes, type 0x08, dimension count),
// big-endian 32-bit dimension sizes, raw unsigned bytes. Pixels are scaled
// to [0,1].
Dataset mnist_load(const std::string& image_path, const std::string& label_path);

void idx_write_images(const std::string& path, const std::vector<std::vector<std::uint8_t>>& images,
                      int rows, int cols);
void idx_write_labels(const std::string& path, const std::vector<std::uint8_t>& labels);

// Loads every decodable grayscale PGM (P2/P5) under a directory, resized
// images rejected: each must already be exactly `size` x `size`. All rows
// are flagged out-of-distribution with sentinel labels; undecodable files
// are skipped and counted.
struct OodFolderResult {
  Dataset data;
  int skipped = 0;
};

OodFolderResult ood_folder_load(const std::string& dir, int size = 28);

// Marks every row of a loaded dataset as OOD with sentinel labels (the IDX
// fallback path for letter/fashion-style outlier sets).
Dataset as_ood(Dataset ds);

Dataset concat(const Dataset& a, const Dataset& b);

void write_xy_csv(const Dataset& ds, const std::string& path);

}  // namespace tradi::data
