#include "tradi/sampler.hpp"

#include "tradi/losses.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <string>

namespace tradi::sampler {

namespace {

constexpr double kJitterStart = 1e-10;
constexpr double kJitterMax = 1e-4;

Vector gaussian_vector(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> unit(0.0, 1.0);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = unit(rng);
  return v;
}

}  // namespace

WeightSample sample_full_cov(const Vector& mu, const tracker::LayerCovariance& cov,
                             const nn::ParamVector& layout_like, std::mt19937_64& rng) {
  if (mu.size() != layout_like.values.size())
    throw ContractError("mean vector does not match the parameter layout");

  WeightSample sample;
  sample.params.layout = layout_like.layout;
  sample.params.values = mu;

  for (std::size_t b = 0; b < cov.blocks.size(); ++b) {
    const Matrix& sigma = cov.blocks[b];
    const auto off = static_cast<Eigen::Index>(cov.block_offset[b]);
    const auto len = sigma.rows();

    Eigen::LLT<Eigen::MatrixXd> llt;
    double jitter = kJitterStart;
    while (true) {
      Eigen::MatrixXd shifted = sigma;
      shifted.diagonal().array() += jitter;
      llt.compute(shifted);
      if (llt.info() == Eigen::Success) break;
      jitter *= 10.0;
      if (jitter > kJitterMax)
        throw NumericError("covariance block " + std::to_string(b) +
                           " is not positive definite even at maximum jitter");
    }
    const Vector z = gaussian_vector(len, rng);
    sample.params.values.segment(off, len) += llt.matrixL() * z;
  }
  return sample;
}

WeightSample sample_rff(const Vector& mu, const rff::LowRankFactor& factor,
                        const nn::ParamVector& layout_like, std::mt19937_64& rng,
                        bool per_layer_draw) {
  if (factor.r.rows() != mu.size()) throw ContractError("factor row count does not match K");
  if (mu.size() != layout_like.values.size())
    throw ContractError("mean vector does not match the parameter layout");

  WeightSample sample;
  sample.params.layout = layout_like.layout;

  if (!per_layer_draw) {
    const Vector m = gaussian_vector(factor.r.cols(), rng);
    sample.params.values = mu + factor.r * m;
    return sample;
  }

  sample.params.values = mu;
  int current_layer = -1;
  std::size_t begin = 0, end = 0;
  auto flush = [&] {
    if (current_layer < 0) return;
    const Vector m = gaussian_vector(factor.r.cols(), rng);
    const auto off = static_cast<Eigen::Index>(begin);
    const auto len = static_cast<Eigen::Index>(end - begin);
    sample.params.values.segment(off, len) += factor.r.middleRows(off, len) * m;
  };
  for (const auto& slice : layout_like.layout) {
    if (slice.layer != current_layer) {
      flush();
      current_layer = slice.layer;
      begin = slice.offset;
      end = slice.offset + slice.length;
    } else {
      end = std::max(end, slice.offset + slice.length);
    }
  }
  flush();
  return sample;
}

std::vector<WeightSample> build_ensemble(const EnsembleConfig& cfg, const nn::Network& net,
                                         const nn::ParamVector& trained,
                                         const tracker::TrackerState& state,
                                         const tracker::LayerCovariance* cov,
                                         const std::vector<Matrix>& calibration_batches) {
  if (cfg.n_models < 1) throw ContractError("ensemble needs at least one member");
  if (cfg.mode == SampleMode::full_cov && cov == nullptr)
    throw ConfigError("full-covariance sampling requires a tracked layer covariance");

  rff::RFFProjection proj;
  rff::LowRankFactor factor;
  if (cfg.mode == SampleMode::rff) {
    proj = rff::rff_init(cfg.rff_features, cfg.rff_sigma, derive_seed(cfg.seed, 0x52464600));
    factor = rff::build_factor(proj, trained.values, state.sigma2.cwiseSqrt());
  }

  std::vector<WeightSample> ensemble;
  ensemble.reserve(static_cast<std::size_t>(cfg.n_models));
  for (int j = 0; j < cfg.n_models; ++j) {
    auto rng = make_rng(derive_seed(cfg.seed, 0x1000 + static_cast<std::uint64_t>(j)));
    WeightSample s = cfg.mode == SampleMode::full_cov
                         ? sample_full_cov(state.mu, *cov, trained, rng)
                         : sample_rff(state.mu, factor, trained, rng, cfg.per_layer_draw);
    s.index = j;
    if (net.has_batchnorm()) {
      if (calibration_batches.empty())
        throw ContractError("batchnorm network needs calibration batches");
      s.bn = nn::refresh_batchnorm(net, s.params, calibration_batches);
    }
    ensemble.push_back(std::move(s));
  }
  return ensemble;
}

std::vector<WeightSample> wrap_ensemble(const nn::Network& net,
                                        const std::vector<nn::ParamVector>& members,
                                        const std::vector<Matrix>& calibration_batches) {
  std::vector<WeightSample> ensemble;
  ensemble.reserve(members.size());
  for (std::size_t j = 0; j < members.size(); ++j) {
    WeightSample s;
    s.params = members[j];
    s.index = static_cast<int>(j);
    if (net.has_batchnorm()) {
      if (calibration_batches.empty())
        throw ContractError("batchnorm network needs calibration batches");
      s.bn = nn::refresh_batchnorm(net, s.params, calibration_batches);
    }
    ensemble.push_back(std::move(s));
  }
  return ensemble;
}

Matrix predict_classification(const nn::Network& net, const std::vector<WeightSample>& ensemble,
                              const Matrix& inputs) {
  if (ensemble.empty()) throw ContractError("empty ensemble");
  Matrix mean = Matrix::Zero(inputs.rows(), net.output_dim());
  for (const auto& member : ensemble) {
    nn::Network view = net;
    if (!member.bn.empty()) view.bn = member.bn;
    const auto out = nn::forward(view, member.params, inputs, nn::ForwardMode::eval, 0);
    mean += losses::softmax(out.output);
  }
  mean /= static_cast<double>(ensemble.size());
  return mean;
}

RegressionMixture predict_regression(const nn::Network& net,
                                     const std::vector<WeightSample>& ensemble,
                                     const Matrix& inputs) {
  if (ensemble.empty()) throw ContractError("empty ensemble");
  if (net.output_dim() != 2)
    throw ContractError("regression prediction expects a two-head network");

  RegressionMixture mix;
  mix.mu = Matrix(inputs.rows(), static_cast<Eigen::Index>(ensemble.size()));
  mix.sigma2 = Matrix(inputs.rows(), static_cast<Eigen::Index>(ensemble.size()));
  for (std::size_t j = 0; j < ensemble.size(); ++j) {
    const auto& member = ensemble[j];
    nn::Network view = net;
    if (!member.bn.empty()) view.bn = member.bn;
    const auto out = nn::forward(view, member.params, inputs, nn::ForwardMode::eval, 0);
    const auto heads = nn::regression_heads(out.output);
    mix.mu.col(static_cast<Eigen::Index>(j)) = heads.mu;
    mix.sigma2.col(static_cast<Eigen::Index>(j)) = heads.sigma2;
  }
  return mix;
}

MixtureMoments mixture_moments(const Vector& mu, const Vector& sigma2) {
  if (mu.size() < 1 || mu.size() != sigma2.size())
    throw ContractError("mixture needs matching non-empty components");
  MixtureMoments m;
  m.mean = mu.mean();
  m.variance = (sigma2.array() + mu.array().square()).mean() - m.mean * m.mean;
  return m;
}

void save_ensemble(const std::vector<WeightSample>& ensemble, const std::string& dir) {
  std::filesystem::create_directories(dir);
  char name[32];
  for (const auto& member : ensemble) {
    std::snprintf(name, sizeof(name), "member_%03d.bin", member.index);
    tracker::save_weights(member.params.values, (std::filesystem::path(dir) / name).string());
  }
}

std::vector<WeightSample> load_ensemble(const std::string& dir, const nn::Network& net,
                                        const nn::ParamVector& layout_like,
                                        const std::vector<Matrix>& calibration_batches) {
  std::vector<std::string> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (name.starts_with("member_") && name.ends_with(".bin"))
      files.push_back(entry.path().string());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no member checkpoints under " + dir);

  std::vector<WeightSample> ensemble;
  for (std::size_t j = 0; j < files.size(); ++j) {
    WeightSample s;
    s.params.values = tracker::load_weights(files[j]);
    s.params.layout = layout_like.layout;
    s.index = static_cast<int>(j);
    if (s.params.size() != layout_like.size())
      throw FormatError("checkpoint " + files[j] + " does not match the network layout");
    if (net.has_batchnorm()) {
      if (calibration_batches.empty())
        throw ContractError("batchnorm network needs calibration batches");
      s.bn = nn::refresh_batchnorm(net, s.params, calibration_batches);
    }
    ensemble.push_back(std::move(s));
  }
  return ensemble;
}

double mixture_nll(const Vector& mu, const Vector& sigma2, double y) {
  if (mu.size() < 1 || mu.size() != sigma2.size())
    throw ContractError("mixture needs matching non-empty components");
  Vector log_comp(mu.size());
  for (Eigen::Index j = 0; j < mu.size(); ++j) {
    if (!(sigma2[j] > 0.0)) throw ContractError("non-positive mixture variance");
    const double r = y - mu[j];
    log_comp[j] =
        -0.5 * std::log(2.0 * std::numbers::pi * sigma2[j]) - 0.5 * r * r / sigma2[j];
  }
  const double m = log_comp.maxCoeff();
  const double lse = m + std::log((log_comp.array() - m).exp().sum());
  return -(lse - std::log(static_cast<double>(mu.size())));
}

}  // namespace tradi::sampler
