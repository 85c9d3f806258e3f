#pragma once

#include "tradi/data_io.hpp"
#include "tradi/nn.hpp"

#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>

namespace testutil {

using namespace tradi;

// Linearly separable three-blob classification data in d dimensions.
inline data::Dataset blobs(int n, int d, int classes, std::uint64_t seed, double spread = 0.35) {
  data::Dataset ds;
  ds.task = metrics::TaskKind::classification;
  ds.features = Matrix(n, d);
  ds.labels.resize(static_cast<std::size_t>(n));
  auto rng = make_rng(seed);
  std::normal_distribution<double> noise(0.0, spread);
  std::uniform_int_distribution<int> cls(0, classes - 1);
  for (int i = 0; i < n; ++i) {
    const int c = cls(rng);
    ds.labels[static_cast<std::size_t>(i)] = c;
    for (int j = 0; j < d; ++j) {
      const double center = (j % classes == c) ? 1.0 : 0.0;
      ds.features(i, j) = center + noise(rng);
    }
  }
  return ds;
}

// y = sin(2x) + 0.1 eps on [-2, 2].
inline data::Dataset sine_regression(int n, std::uint64_t seed) {
  data::Dataset ds;
  ds.task = metrics::TaskKind::regression;
  ds.features = Matrix(n, 1);
  ds.targets = Vector(n);
  auto rng = make_rng(seed);
  std::uniform_real_distribution<double> xs(-2.0, 2.0);
  std::normal_distribution<double> noise(0.0, 0.1);
  for (int i = 0; i < n; ++i) {
    const double x = xs(rng);
    ds.features(i, 0) = x;
    ds.targets[i] = std::sin(2.0 * x) + noise(rng);
  }
  return ds;
}

inline std::string temp_dir(const std::string& tag) {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / ("tradi_test_" + tag);
  fs::create_directories(dir);
  return dir.string();
}

inline nn::ParamVector params_like(const Vector& values, const nn::ParamVector& like) {
  nn::ParamVector p;
  p.values = values;
  p.layout = like.layout;
  return p;
}

}  // namespace testutil
