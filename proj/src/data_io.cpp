#include "tradi/data_io.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace tradi::data {

namespace {

double rbf_kernel(double a, double b) {
  const double d = a - b;
  return std::exp(-0.5 * d * d);
}

std::uint32_t read_be32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw FormatError("truncated IDX header");
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
         std::uint32_t(b[3]);
}

void write_be32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

}  // namespace

GpToyData synth_gp(int n_train, int n_test, std::uint64_t seed) {
  if (n_train < 1 || n_test < 1) throw ContractError("need at least one sample per split");

  constexpr double kNoiseVar = 0.3;
  constexpr double kTrainLo = -4.0, kTrainHi = 4.0;
  constexpr double kTestLo = -8.0, kTestHi = 8.0;

  auto rng = make_rng(derive_seed(seed, 0x6770));
  std::uniform_real_distribution<double> unif(kTrainLo, kTrainHi);
  std::normal_distribution<double> unit(0.0, 1.0);

  const int n = n_train + n_test;
  Vector x(n);
  for (int i = 0; i < n_train; ++i) x[i] = unif(rng);
  for (int i = 0; i < n_test; ++i)
    x[n_train + i] =
        n_test == 1 ? kTestLo : kTestLo + (kTestHi - kTestLo) * i / double(n_test - 1);

  Eigen::MatrixXd gram(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) gram(i, j) = rbf_kernel(x[i], x[j]);

  Eigen::LLT<Eigen::MatrixXd> llt;
  double jitter = 1e-10;
  while (true) {
    Eigen::MatrixXd shifted = gram;
    shifted.diagonal().array() += jitter;
    llt.compute(shifted);
    if (llt.info() == Eigen::Success) break;
    jitter *= 10.0;
    if (jitter > 1e-4) throw NumericError("GP gram matrix is not positive definite");
  }

  Vector z(n);
  for (int i = 0; i < n; ++i) z[i] = unit(rng);
  Vector f = llt.matrixL() * z;
  const double noise_sd = std::sqrt(kNoiseVar);
  Vector y(n);
  for (int i = 0; i < n; ++i) y[i] = f[i] + noise_sd * unit(rng);

  GpToyData out;
  out.train_lo = kTrainLo;
  out.train_hi = kTrainHi;
  out.train.task = metrics::TaskKind::regression;
  out.train.features = Matrix(n_train, 1);
  out.train.targets = Vector(n_train);
  for (int i = 0; i < n_train; ++i) {
    out.train.features(i, 0) = x[i];
    out.train.targets[i] = y[i];
  }
  out.test.task = metrics::TaskKind::regression;
  out.test.features = Matrix(n_test, 1);
  out.test.targets = Vector(n_test);
  for (int i = 0; i < n_test; ++i) {
    out.test.features(i, 0) = x[n_train + i];
    out.test.targets[i] = y[n_train + i];
  }
  return out;
}

Dataset uci_load(const std::string& csv_path, int target_column) {
  std::ifstream in(csv_path);
  if (!in) throw IoError("cannot open " + csv_path);

  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    std::size_t col = 0;
    while (std::getline(ss, cell, ',')) {
      ++col;
      // tolerate whitespace-padded cells
      const auto b = cell.find_first_not_of(" \t");
      const auto e = cell.find_last_not_of(" \t");
      cell = b == std::string::npos ? "" : cell.substr(b, e - b + 1);
      double v;
      if (!parse_double(cell, v)) {
        if (first) {
          numeric = false;  // header row
          break;
        }
        throw FormatError(csv_path + ":" + std::to_string(lineno) + ": non-numeric cell in column " +
                          std::to_string(col));
      }
      row.push_back(v);
    }
    first = false;
    if (!numeric) continue;
    if (!rows.empty() && row.size() != rows.front().size())
      throw FormatError(csv_path + ":" + std::to_string(lineno) + ": inconsistent column count");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw FormatError(csv_path + ": no numeric rows");

  const int cols = static_cast<int>(rows.front().size());
  if (cols < 2) throw FormatError(csv_path + ": need at least one feature and one target column");
  int target = target_column < 0 ? cols + target_column : target_column;
  if (target < 0 || target >= cols) throw ContractError("target column out of range");

  Dataset ds;
  ds.task = metrics::TaskKind::regression;
  ds.features = Matrix(static_cast<Eigen::Index>(rows.size()), cols - 1);
  ds.targets = Vector(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    int fc = 0;
    for (int c = 0; c < cols; ++c) {
      if (c == target)
        ds.targets[static_cast<Eigen::Index>(i)] = rows[i][static_cast<std::size_t>(c)];
      else
        ds.features(static_cast<Eigen::Index>(i), fc++) = rows[i][static_cast<std::size_t>(c)];
    }
  }
  return ds;
}

FoldPlan make_folds(const Dataset& ds, int folds, std::uint64_t seed) {
  if (folds < 1) throw ContractError("need at least one fold");
  const int n = static_cast<int>(ds.rows());
  if (n < 2) throw ContractError("dataset too small to split");

  FoldPlan plan;
  plan.seed = seed;
  const int n_test = std::max(1, n / 10);
  for (int f = 0; f < folds; ++f) {
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    auto rng = make_rng(derive_seed(seed, 0xf01d + static_cast<std::uint64_t>(f)));
    std::shuffle(order.begin(), order.end(), rng);
    plan.test_idx.emplace_back(order.begin(), order.begin() + n_test);
    plan.train_idx.emplace_back(order.begin() + n_test, order.end());
  }
  return plan;
}

Normalization fit_normalization(const Dataset& ds, const std::vector<int>& rows) {
  if (rows.empty()) throw ContractError("cannot fit statistics on an empty split");
  const auto cols = ds.features.cols();
  Normalization norm;
  norm.feature_mean = Vector::Zero(cols);
  norm.feature_std = Vector::Ones(cols);

  for (int r : rows) norm.feature_mean += ds.features.row(r).transpose();
  norm.feature_mean /= static_cast<double>(rows.size());
  Vector var = Vector::Zero(cols);
  for (int r : rows)
    var += (ds.features.row(r).transpose() - norm.feature_mean).array().square().matrix();
  var /= static_cast<double>(rows.size());
  for (Eigen::Index c = 0; c < cols; ++c)
    norm.feature_std[c] = var[c] > 0.0 ? std::sqrt(var[c]) : 1.0;

  double ym = 0.0;
  for (int r : rows) ym += ds.targets[r];
  ym /= static_cast<double>(rows.size());
  double yv = 0.0;
  for (int r : rows) yv += (ds.targets[r] - ym) * (ds.targets[r] - ym);
  yv /= static_cast<double>(rows.size());
  norm.target_mean = ym;
  norm.target_std = yv > 0.0 ? std::sqrt(yv) : 1.0;
  return norm;
}

Matrix normalize_features(const Matrix& x, const Normalization& norm) {
  Matrix out = x.rowwise() - norm.feature_mean.transpose();
  out.array().rowwise() /= norm.feature_std.transpose().array();
  return out;
}

Vector normalize_targets(const Vector& y, const Normalization& norm) {
  return (y.array() - norm.target_mean) / norm.target_std;
}

double denormalize_mean(double mu, const Normalization& norm) {
  return mu * norm.target_std + norm.target_mean;
}

double denormalize_variance(double sigma2, const Normalization& norm) {
  return sigma2 * norm.target_std * norm.target_std;
}

Dataset subset(const Dataset& ds, const std::vector<int>& rows) {
  Dataset out;
  out.task = ds.task;
  out.features = Matrix(static_cast<Eigen::Index>(rows.size()), ds.features.cols());
  if (ds.targets.size() > 0) out.targets = Vector(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) = ds.features.row(rows[i]);
    if (ds.targets.size() > 0)
      out.targets[static_cast<Eigen::Index>(i)] = ds.targets[rows[i]];
    if (!ds.labels.empty()) out.labels.push_back(ds.labels[static_cast<std::size_t>(rows[i])]);
    if (!ds.in_dist.empty()) out.in_dist.push_back(ds.in_dist[static_cast<std::size_t>(rows[i])]);
  }
  return out;
}

Dataset mnist_load(const std::string& image_path, const std::string& label_path) {
  std::ifstream img(image_path, std::ios::binary);
  if (!img) throw IoError("cannot open " + image_path);
  std::ifstream lab(label_path, std::ios::binary);
  if (!lab) throw IoError("cannot open " + label_path);

  if (read_be32(img) != 0x00000803u) throw FormatError(image_path + ": bad image magic");
  const auto count = read_be32(img);
  const auto rows = read_be32(img);
  const auto cols = read_be32(img);

  if (read_be32(lab) != 0x00000801u) throw FormatError(label_path + ": bad label magic");
  const auto label_count = read_be32(lab);
  if (label_count != count) throw FormatError("image/label counts disagree");

  const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
  std::vector<unsigned char> buffer(pixels);

  Dataset ds;
  ds.task = metrics::TaskKind::classification;
  ds.features = Matrix(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(pixels));
  ds.labels.resize(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    img.read(reinterpret_cast<char*>(buffer.data()), static_cast<std::streamsize>(pixels));
    if (!img) throw FormatError(image_path + ": truncated image data");
    for (std::size_t p = 0; p < pixels; ++p)
      ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(p)) =
          buffer[p] / 255.0;
  }
  std::vector<unsigned char> raw_labels(count);
  lab.read(reinterpret_cast<char*>(raw_labels.data()), static_cast<std::streamsize>(count));
  if (!lab) throw FormatError(label_path + ": truncated label data");
  for (std::uint32_t i = 0; i < count; ++i) ds.labels[i] = raw_labels[i];
  return ds;
}

void idx_write_images(const std::string& path, const std::vector<std::vector<std::uint8_t>>& images,
                      int rows, int cols) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  write_be32(out, 0x00000803u);
  write_be32(out, static_cast<std::uint32_t>(images.size()));
  write_be32(out, static_cast<std::uint32_t>(rows));
  write_be32(out, static_cast<std::uint32_t>(cols));
  for (const auto& im : images) {
    if (im.size() != static_cast<std::size_t>(rows) * cols)
      throw ContractError("image size mismatch");
    out.write(reinterpret_cast<const char*>(im.data()), static_cast<std::streamsize>(im.size()));
  }
  if (!out) throw IoError("write failed: " + path);
}

void idx_write_labels(const std::string& path, const std::vector<std::uint8_t>& labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  write_be32(out, 0x00000801u);
  write_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.write(reinterpret_cast<const char*>(labels.data()),
            static_cast<std::streamsize>(labels.size()));
  if (!out) throw IoError("write failed: " + path);
}

namespace {

bool read_pgm(const std::string& path, int size, std::vector<double>& pixels) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  std::string magic;
  in >> magic;
  if (magic != "P2" && magic != "P5") return false;

  auto next_token = [&in]() -> long {
    // skip whitespace and '#' comment lines
    while (true) {
      const int c = in.peek();
      if (c == '#') {
        std::string dummy;
        std::getline(in, dummy);
      } else if (std::isspace(c)) {
        in.get();
      } else {
        break;
      }
    }
    long v = -1;
    in >> v;
    return in ? v : -1;
  };

  const long w = next_token();
  const long h = next_token();
  const long maxval = next_token();
  if (w != size || h != size || maxval <= 0 || maxval > 65535) return false;

  const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  pixels.resize(n);
  if (magic == "P5") {
    in.get();  // single whitespace after the header
    if (maxval < 256) {
      std::vector<unsigned char> raw(n);
      in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n));
      if (!in) return false;
      for (std::size_t i = 0; i < n; ++i) pixels[i] = raw[i] / double(maxval);
    } else {
      std::vector<unsigned char> raw(2 * n);
      in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(2 * n));
      if (!in) return false;
      for (std::size_t i = 0; i < n; ++i)
        pixels[i] = ((raw[2 * i] << 8) | raw[2 * i + 1]) / double(maxval);
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const long v = next_token();
      if (v < 0) return false;
      pixels[i] = v / double(maxval);
    }
  }
  return true;
}

}  // namespace

OodFolderResult ood_folder_load(const std::string& dir, int size) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError(dir + " is not a directory");

  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir))
    if (entry.is_regular_file()) files.push_back(entry.path());
  std::sort(files.begin(), files.end());

  OodFolderResult res;
  std::vector<std::vector<double>> ok;
  for (const auto& f : files) {
    std::vector<double> px;
    if (read_pgm(f.string(), size, px))
      ok.push_back(std::move(px));
    else
      ++res.skipped;
  }

  res.data.task = metrics::TaskKind::classification;
  res.data.features =
      Matrix(static_cast<Eigen::Index>(ok.size()), static_cast<Eigen::Index>(size) * size);
  for (std::size_t i = 0; i < ok.size(); ++i)
    for (std::size_t p = 0; p < ok[i].size(); ++p)
      res.data.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(p)) = ok[i][p];
  res.data.labels.assign(ok.size(), -1);
  res.data.in_dist.assign(ok.size(), false);
  return res;
}

Dataset as_ood(Dataset ds) {
  ds.labels.assign(static_cast<std::size_t>(ds.rows()), -1);
  ds.in_dist.assign(static_cast<std::size_t>(ds.rows()), false);
  return ds;
}

Dataset concat(const Dataset& a, const Dataset& b) {
  if (a.features.cols() != b.features.cols()) throw ContractError("feature width mismatch");
  if (a.task != b.task) throw ContractError("task mismatch");
  Dataset out;
  out.task = a.task;
  out.features = Matrix(a.rows() + b.rows(), a.features.cols());
  out.features.topRows(a.rows()) = a.features;
  out.features.bottomRows(b.rows()) = b.features;
  if (a.targets.size() > 0 && b.targets.size() > 0) {
    out.targets = Vector(a.targets.size() + b.targets.size());
    out.targets.head(a.targets.size()) = a.targets;
    out.targets.tail(b.targets.size()) = b.targets;
  }
  if (!a.labels.empty() || !b.labels.empty()) {
    out.labels = a.labels;
    out.labels.resize(static_cast<std::size_t>(a.rows()), -1);
    auto bl = b.labels;
    bl.resize(static_cast<std::size_t>(b.rows()), -1);
    out.labels.insert(out.labels.end(), bl.begin(), bl.end());
  }
  out.in_dist.assign(static_cast<std::size_t>(a.rows()), true);
  for (std::size_t i = 0; i < static_cast<std::size_t>(a.rows()); ++i)
    out.in_dist[i] = a.row_in_dist(i);
  for (std::size_t i = 0; i < static_cast<std::size_t>(b.rows()); ++i)
    out.in_dist.push_back(b.row_in_dist(i));
  return out;
}

void write_xy_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "x,y\n";
  for (Eigen::Index i = 0; i < ds.rows(); ++i) {
    for (Eigen::Index c = 0; c < ds.features.cols(); ++c) out << ds.features(i, c) << ',';
    out << (ds.task == metrics::TaskKind::regression ? ds.targets[i]
                                                     : double(ds.labels[static_cast<std::size_t>(i)]))
        << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace tradi::data
