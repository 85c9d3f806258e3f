#include "tradi/nn.hpp"

#include <cmath>
#include <random>
#include <string>

namespace tradi::nn {

namespace {

constexpr double kBatchNormEps = 1e-5;
constexpr double kSigma2Floor = 1e-6;

void validate_chain(const std::vector<LayerSpec>& specs) {
  if (specs.empty()) throw ConfigError("network needs at least one layer");
  for (std::size_t l = 0; l < specs.size(); ++l) {
    const auto& s = specs[l];
    if (s.in_dim < 1 || s.out_dim < 1)
      throw ConfigError("layer " + std::to_string(l) + " has non-positive dimensions");
    if (s.kind != LayerKind::dense && s.in_dim != s.out_dim)
      throw ConfigError("layer " + std::to_string(l) + " must preserve its dimension");
    if (s.kind == LayerKind::dropout && (s.dropout_rate < 0.0 || s.dropout_rate >= 1.0))
      throw ConfigError("dropout rate must lie in [0,1)");
    if (l + 1 < specs.size() && s.out_dim != specs[l + 1].in_dim)
      throw ConfigError("dimension mismatch between layers " + std::to_string(l) + " and " +
                        std::to_string(l + 1));
  }
}

// Slice indices per layer: dense and batchnorm own two slices, others none.
std::vector<std::pair<int, int>> slice_table(const std::vector<LayerSpec>& specs,
                                             const std::vector<ParamSlice>& layout) {
  std::vector<std::pair<int, int>> table(specs.size(), {-1, -1});
  for (std::size_t i = 0; i < layout.size(); ++i) {
    auto& entry = table[static_cast<std::size_t>(layout[i].layer)];
    if (entry.first < 0)
      entry.first = static_cast<int>(i);
    else
      entry.second = static_cast<int>(i);
  }
  return table;
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace

LayerSpec dense(int in_dim, int out_dim) { return {LayerKind::dense, in_dim, out_dim, 0.0}; }
LayerSpec relu(int dim) { return {LayerKind::relu, dim, dim, 0.0}; }
LayerSpec dropout(int dim, double rate) { return {LayerKind::dropout, dim, dim, rate}; }
LayerSpec batchnorm(int dim) { return {LayerKind::batchnorm, dim, dim, 0.0}; }

int Network::input_dim() const { return specs.front().in_dim; }
int Network::output_dim() const { return specs.back().out_dim; }

bool Network::has_batchnorm() const {
  for (const auto& s : specs)
    if (s.kind == LayerKind::batchnorm) return true;
  return false;
}

bool Network::has_dropout() const {
  for (const auto& s : specs)
    if (s.kind == LayerKind::dropout && s.dropout_rate > 0.0) return true;
  return false;
}

Network make_network(std::vector<LayerSpec> specs) {
  validate_chain(specs);
  Network net;
  net.specs = std::move(specs);
  for (const auto& s : net.specs) {
    if (s.kind == LayerKind::batchnorm) {
      BatchNormState state;
      state.running_mean = Vector::Zero(s.in_dim);
      state.running_var = Vector::Ones(s.in_dim);
      net.bn.push_back(std::move(state));
    }
  }
  return net;
}

InitResult init_weights(const std::vector<LayerSpec>& specs, std::uint64_t rng_seed) {
  validate_chain(specs);

  std::size_t total = 0;
  for (const auto& s : specs) {
    if (s.kind == LayerKind::dense)
      total += static_cast<std::size_t>(s.in_dim) * static_cast<std::size_t>(s.out_dim) +
               static_cast<std::size_t>(s.out_dim);
    else if (s.kind == LayerKind::batchnorm)
      total += 2 * static_cast<std::size_t>(s.in_dim);
  }

  InitResult res;
  res.params.values = Vector::Zero(static_cast<Eigen::Index>(total));
  res.init_variance = Vector::Zero(static_cast<Eigen::Index>(total));

  auto rng = make_rng(rng_seed);
  std::normal_distribution<double> unit(0.0, 1.0);

  std::size_t offset = 0;
  for (std::size_t l = 0; l < specs.size(); ++l) {
    const auto& s = specs[l];
    if (s.kind == LayerKind::dense) {
      const std::size_t wlen = static_cast<std::size_t>(s.in_dim) * s.out_dim;
      const double var = 2.0 / s.in_dim;
      const double sd = std::sqrt(var);
      for (std::size_t i = 0; i < wlen; ++i)
        res.params.values[static_cast<Eigen::Index>(offset + i)] = sd * unit(rng);
      res.init_variance.segment(static_cast<Eigen::Index>(offset),
                                static_cast<Eigen::Index>(wlen))
          .setConstant(var);
      res.params.layout.push_back({static_cast<int>(l), offset, wlen, s.in_dim});
      offset += wlen;

      // biases start at zero but keep the layer's init variance as prior
      const std::size_t blen = static_cast<std::size_t>(s.out_dim);
      res.init_variance.segment(static_cast<Eigen::Index>(offset),
                                static_cast<Eigen::Index>(blen))
          .setConstant(var);
      res.params.layout.push_back({static_cast<int>(l), offset, blen, s.in_dim});
      offset += blen;
    } else if (s.kind == LayerKind::batchnorm) {
      const std::size_t dlen = static_cast<std::size_t>(s.in_dim);
      const double var = 2.0 / s.in_dim;
      res.params.values.segment(static_cast<Eigen::Index>(offset),
                                static_cast<Eigen::Index>(dlen))
          .setOnes();  // scale
      res.init_variance.segment(static_cast<Eigen::Index>(offset),
                                static_cast<Eigen::Index>(dlen))
          .setConstant(var);
      res.params.layout.push_back({static_cast<int>(l), offset, dlen, s.in_dim});
      offset += dlen;
      res.init_variance.segment(static_cast<Eigen::Index>(offset),
                                static_cast<Eigen::Index>(dlen))
          .setConstant(var);  // shift stays zero
      res.params.layout.push_back({static_cast<int>(l), offset, dlen, s.in_dim});
      offset += dlen;
    }
  }
  return res;
}

Eigen::Map<const Matrix> weight_block(const ParamVector& params, const ParamSlice& slice) {
  const int in = slice.fan_in;
  const auto out = static_cast<Eigen::Index>(slice.length) / in;
  return {params.values.data() + slice.offset, in, out};
}

ForwardResult forward(const Network& net, const ParamVector& params, const Matrix& batch,
                      ForwardMode mode, std::uint64_t rng_seed) {
  if (batch.cols() != net.input_dim())
    throw ContractError("batch has " + std::to_string(batch.cols()) + " columns, network expects " +
                        std::to_string(net.input_dim()));
  if (batch.rows() < 1) throw ContractError("empty batch");

  const auto table = slice_table(net.specs, params.layout);
  const bool dropout_active = mode == ForwardMode::train || mode == ForwardMode::mc_dropout;
  const bool batch_stats = mode == ForwardMode::train || mode == ForwardMode::calibrate;

  ForwardResult res;
  auto& cache = res.cache;
  cache.mode = mode;
  cache.bn_batch_stats = batch_stats;
  cache.param_count = params.size();
  cache.acts.reserve(net.specs.size() + 1);
  cache.acts.push_back(batch);

  int bn_index = 0;
  for (std::size_t l = 0; l < net.specs.size(); ++l) {
    const auto& s = net.specs[l];
    const Matrix& x = cache.acts.back();
    Matrix y;

    switch (s.kind) {
      case LayerKind::dense: {
        const auto& wslice = params.layout[static_cast<std::size_t>(table[l].first)];
        const auto& bslice = params.layout[static_cast<std::size_t>(table[l].second)];
        auto w = weight_block(params, wslice);
        auto b = params.values.segment(static_cast<Eigen::Index>(bslice.offset),
                                       static_cast<Eigen::Index>(bslice.length));
        y.noalias() = x * w;
        y.rowwise() += b.transpose();
        break;
      }
      case LayerKind::relu:
        y = x.cwiseMax(0.0);
        break;
      case LayerKind::dropout: {
        if (dropout_active && s.dropout_rate > 0.0) {
          auto rng = make_rng(derive_seed(rng_seed, l));
          std::bernoulli_distribution keep(1.0 - s.dropout_rate);
          Matrix mask(x.rows(), x.cols());
          for (Eigen::Index i = 0; i < mask.rows(); ++i)
            for (Eigen::Index j = 0; j < mask.cols(); ++j) mask(i, j) = keep(rng) ? 1.0 : 0.0;
          y = x.cwiseProduct(mask) / (1.0 - s.dropout_rate);
          cache.dropout_mask.push_back(std::move(mask));
        } else {
          y = x;
          cache.dropout_mask.emplace_back();
        }
        break;
      }
      case LayerKind::batchnorm: {
        const auto& gslice = params.layout[static_cast<std::size_t>(table[l].first)];
        const auto& bslice = params.layout[static_cast<std::size_t>(table[l].second)];
        auto gamma = params.values.segment(static_cast<Eigen::Index>(gslice.offset),
                                           static_cast<Eigen::Index>(gslice.length));
        auto beta = params.values.segment(static_cast<Eigen::Index>(bslice.offset),
                                          static_cast<Eigen::Index>(bslice.length));
        Vector mean, var;
        if (batch_stats) {
          mean = x.colwise().mean();
          var = (x.rowwise() - mean.transpose()).array().square().colwise().mean();
        } else {
          mean = net.bn[static_cast<std::size_t>(bn_index)].running_mean;
          var = net.bn[static_cast<std::size_t>(bn_index)].running_var;
        }
        const Vector istd = (var.array() + kBatchNormEps).rsqrt();
        y = (x.rowwise() - mean.transpose()).array().rowwise() * istd.transpose().array();
        y = (y.array().rowwise() * gamma.transpose().array()).rowwise() +
            beta.transpose().array();
        cache.bn_mean.push_back(std::move(mean));
        cache.bn_var.push_back(std::move(var));
        ++bn_index;
        break;
      }
    }

    if (!y.allFinite())
      throw NumericError("non-finite activation at layer " + std::to_string(l));
    cache.acts.push_back(std::move(y));
  }

  res.output = cache.acts.back();
  return res;
}

ParamVector backward(const Network& net, const ParamVector& params, const ForwardCache& cache,
                     const Matrix& output_grad) {
  if (cache.acts.size() != net.specs.size() + 1 || cache.param_count != params.size())
    throw ContractError("cache does not match this network");
  const Matrix& out = cache.acts.back();
  if (output_grad.rows() != out.rows() || output_grad.cols() != out.cols())
    throw ContractError("output_grad shape does not match cached output");

  const auto table = slice_table(net.specs, params.layout);
  const bool dropout_active =
      cache.mode == ForwardMode::train || cache.mode == ForwardMode::mc_dropout;

  ParamVector grad;
  grad.values = Vector::Zero(params.values.size());
  grad.layout = params.layout;

  Matrix delta = output_grad;
  int bn_index = static_cast<int>(cache.bn_mean.size());
  int drop_index = static_cast<int>(cache.dropout_mask.size());

  for (std::size_t li = net.specs.size(); li-- > 0;) {
    const auto& s = net.specs[li];
    const Matrix& x = cache.acts[li];

    switch (s.kind) {
      case LayerKind::dense: {
        const auto& wslice = params.layout[static_cast<std::size_t>(table[li].first)];
        const auto& bslice = params.layout[static_cast<std::size_t>(table[li].second)];
        auto w = weight_block(params, wslice);
        Eigen::Map<Matrix> dw(grad.values.data() + wslice.offset, w.rows(), w.cols());
        dw.noalias() = x.transpose() * delta;
        grad.values.segment(static_cast<Eigen::Index>(bslice.offset),
                            static_cast<Eigen::Index>(bslice.length)) =
            delta.colwise().sum();
        delta = delta * w.transpose();
        break;
      }
      case LayerKind::relu:
        delta = delta.cwiseProduct((x.array() > 0.0).cast<double>().matrix());
        break;
      case LayerKind::dropout: {
        --drop_index;
        if (dropout_active && s.dropout_rate > 0.0) {
          const Matrix& mask = cache.dropout_mask[static_cast<std::size_t>(drop_index)];
          delta = delta.cwiseProduct(mask) / (1.0 - s.dropout_rate);
        }
        break;
      }
      case LayerKind::batchnorm: {
        --bn_index;
        const auto& gslice = params.layout[static_cast<std::size_t>(table[li].first)];
        const auto& bslice = params.layout[static_cast<std::size_t>(table[li].second)];
        auto gamma = params.values.segment(static_cast<Eigen::Index>(gslice.offset),
                                           static_cast<Eigen::Index>(gslice.length));
        const Vector& mean = cache.bn_mean[static_cast<std::size_t>(bn_index)];
        const Vector& var = cache.bn_var[static_cast<std::size_t>(bn_index)];
        const Vector istd = (var.array() + kBatchNormEps).rsqrt();
        const Matrix centered = x.rowwise() - mean.transpose();
        const Matrix xhat = centered.array().rowwise() * istd.transpose().array();

        grad.values.segment(static_cast<Eigen::Index>(gslice.offset),
                            static_cast<Eigen::Index>(gslice.length)) =
            delta.cwiseProduct(xhat).colwise().sum();
        grad.values.segment(static_cast<Eigen::Index>(bslice.offset),
                            static_cast<Eigen::Index>(bslice.length)) =
            delta.colwise().sum();

        Matrix dxhat = delta.array().rowwise() * gamma.transpose().array();
        if (cache.bn_batch_stats) {
          const double n = static_cast<double>(x.rows());
          const Vector dvar = (dxhat.cwiseProduct(centered).colwise().sum().transpose().array() *
                               (-0.5) * istd.array().cube())
                                  .matrix();
          const Vector dmean =
              (dxhat.colwise().sum().transpose().array() * (-istd.array())).matrix() +
              dvar.cwiseProduct(centered.colwise().sum().transpose()) * (-2.0 / n);
          delta = (dxhat.array().rowwise() * istd.transpose().array()).matrix() +
                  (centered.array().rowwise() * dvar.transpose().array()).matrix() * (2.0 / n);
          delta.rowwise() += (dmean / n).transpose();
        } else {
          delta = (dxhat.array().rowwise() * istd.transpose().array()).matrix();
        }
        break;
      }
    }
  }
  return grad;
}

void update_running_stats(Network& net, const ForwardCache& cache) {
  if (!cache.bn_batch_stats) throw ContractError("cache carries no batch statistics");
  if (cache.bn_mean.size() != net.bn.size()) throw ContractError("cache does not match network");
  for (std::size_t i = 0; i < net.bn.size(); ++i) {
    auto& state = net.bn[i];
    const double m = state.momentum;
    state.running_mean = (1.0 - m) * state.running_mean + m * cache.bn_mean[i];
    state.running_var = (1.0 - m) * state.running_var + m * cache.bn_var[i];
  }
}

std::vector<BatchNormState> refresh_batchnorm(const Network& net, const ParamVector& params,
                                              const std::vector<Matrix>& calibration_batches) {
  if (!net.has_batchnorm()) throw ContractError("network has no batchnorm layer");
  if (calibration_batches.empty()) throw ContractError("empty calibration set");

  Eigen::Index rows = 0;
  for (const auto& b : calibration_batches) {
    if (b.rows() < 1 || b.cols() != net.input_dim())
      throw ContractError("calibration batch shape mismatch");
    rows += b.rows();
  }
  Matrix all(rows, net.input_dim());
  Eigen::Index at = 0;
  for (const auto& b : calibration_batches) {
    all.middleRows(at, b.rows()) = b;
    at += b.rows();
  }

  const auto fwd = forward(net, params, all, ForwardMode::calibrate, 0);
  std::vector<BatchNormState> out = net.bn;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].running_mean = fwd.cache.bn_mean[i];
    out[i].running_var = fwd.cache.bn_var[i];
  }
  return out;
}

RegressionHeads regression_heads(const Matrix& output) {
  if (output.cols() != 2) throw ContractError("regression output must have exactly 2 columns");
  RegressionHeads heads;
  heads.mu = output.col(0);
  heads.sigma2 = Vector(output.rows());
  for (Eigen::Index i = 0; i < output.rows(); ++i)
    heads.sigma2[i] = softplus(output(i, 1)) + kSigma2Floor;
  return heads;
}

Matrix regression_heads_backward(const Matrix& output, const Vector& d_mu,
                                 const Vector& d_sigma2) {
  if (output.cols() != 2) throw ContractError("regression output must have exactly 2 columns");
  if (d_mu.size() != output.rows() || d_sigma2.size() != output.rows())
    throw ContractError("head gradient length mismatch");
  Matrix grad(output.rows(), 2);
  grad.col(0) = d_mu;
  for (Eigen::Index i = 0; i < output.rows(); ++i)
    grad(i, 1) = d_sigma2[i] * stable_sigmoid(output(i, 1));
  return grad;
}

HeadWidening widen_regression_head(const std::vector<LayerSpec>& specs, const ParamVector& params,
                                   std::uint64_t rng_seed) {
  validate_chain(specs);
  if (specs.back().kind != LayerKind::dense || specs.back().out_dim != 1)
    throw ContractError("widening expects a trailing dense layer with a single output");

  std::vector<LayerSpec> wide = specs;
  wide.back().out_dim = 2;

  HeadWidening res;
  res.specs = wide;
  auto init = init_weights(wide, derive_seed(rng_seed, 0x77696465));
  res.params = std::move(init.params);
  res.init_variance = std::move(init.init_variance);
  res.source_index.assign(res.params.size(), -1);

  // The variance head starts at softplus^{-1}(1) so the first NLL steps see
  // unit predicted variance instead of the floor, where r^2/sigma^4 blows up.
  const double unit_variance_raw = std::log(std::expm1(1.0));
  res.params.values[res.params.values.size() - 1] = unit_variance_raw;

  // Old and new layouts walk the same slice sequence; only the final dense
  // block changes shape (in x 1 -> in x 2, row-major) plus its bias.
  const auto& old_layout = params.layout;
  for (std::size_t si = 0; si < old_layout.size(); ++si) {
    const auto& olds = old_layout[si];
    const auto& news = res.params.layout[si];
    const bool last_dense_w =
        olds.layer == static_cast<int>(specs.size()) - 1 && si + 2 == old_layout.size();
    const bool last_dense_b =
        olds.layer == static_cast<int>(specs.size()) - 1 && si + 1 == old_layout.size();
    if (last_dense_w) {
      const int in = olds.fan_in;
      for (int r = 0; r < in; ++r) {
        res.params.values[static_cast<Eigen::Index>(news.offset + 2 * r)] =
            params.values[static_cast<Eigen::Index>(olds.offset + r)];
        res.source_index[news.offset + 2 * static_cast<std::size_t>(r)] =
            static_cast<std::ptrdiff_t>(olds.offset + static_cast<std::size_t>(r));
      }
    } else if (last_dense_b) {
      res.params.values[static_cast<Eigen::Index>(news.offset)] =
          params.values[static_cast<Eigen::Index>(olds.offset)];
      res.source_index[news.offset] = static_cast<std::ptrdiff_t>(olds.offset);
    } else {
      for (std::size_t i = 0; i < olds.length; ++i) {
        res.params.values[static_cast<Eigen::Index>(news.offset + i)] =
            params.values[static_cast<Eigen::Index>(olds.offset + i)];
        res.source_index[news.offset + i] = static_cast<std::ptrdiff_t>(olds.offset + i);
      }
    }
  }
  return res;
}

}  // namespace tradi::nn
