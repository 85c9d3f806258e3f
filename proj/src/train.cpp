#include "tradi/train.hpp"

#include "tradi/losses.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <numeric>
#include <random>

namespace tradi::train {

namespace {

struct Timer {
  std::chrono::steady_clock::time_point wall_start = std::chrono::steady_clock::now();
  std::clock_t cpu_start = std::clock();

  double wall() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
  }
  double cpu() const {
    return static_cast<double>(std::clock() - cpu_start) / CLOCKS_PER_SEC;
  }
};

enum class Objective { cross_entropy, mse, gaussian_nll };

Matrix gather_rows(const Matrix& m, const std::vector<int>& order, int begin, int end) {
  Matrix out(end - begin, m.cols());
  for (int i = begin; i < end; ++i) out.row(i - begin) = m.row(order[static_cast<std::size_t>(i)]);
  return out;
}

// One SGD epoch over shuffled mini-batches, with passive tracking.
double run_epoch(nn::Network& net, nn::ParamVector& params, tracker::TrackerState& state,
                 tracker::LayerCovariance* cov, const data::Dataset& ds, Objective objective,
                 const TrainOptions& opts, std::uint64_t epoch_seed, std::uint64_t* global_step) {
  const int n = static_cast<int>(ds.rows());
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  auto rng = make_rng(derive_seed(epoch_seed, 0x0eb0c4));
  std::shuffle(order.begin(), order.end(), rng);

  const int batch = std::max(1, std::min(opts.batch_size, n));
  double loss_sum = 0.0;
  int batches = 0;

  for (int begin = 0; begin < n; begin += batch) {
    const int end = std::min(begin + batch, n);
    const Matrix x = gather_rows(ds.features, order, begin, end);

    const auto step_seed = derive_seed(epoch_seed, 0xba7c4 + static_cast<std::uint64_t>(begin));
    auto fwd = nn::forward(net, params, x, nn::ForwardMode::train, step_seed);

    losses::LossValue loss;
    Matrix output_grad;
    switch (objective) {
      case Objective::cross_entropy: {
        std::vector<int> labels(static_cast<std::size_t>(end - begin));
        for (int i = begin; i < end; ++i)
          labels[static_cast<std::size_t>(i - begin)] =
              ds.labels[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
        loss = losses::cross_entropy_loss(fwd.output, labels);
        output_grad = loss.grad;
        break;
      }
      case Objective::mse: {
        Vector y(end - begin);
        for (int i = begin; i < end; ++i)
          y[i - begin] = ds.targets[order[static_cast<std::size_t>(i)]];
        loss = losses::mse_loss(fwd.output.col(0), y);
        output_grad = loss.grad;
        break;
      }
      case Objective::gaussian_nll: {
        Vector y(end - begin);
        for (int i = begin; i < end; ++i)
          y[i - begin] = ds.targets[order[static_cast<std::size_t>(i)]];
        const auto heads = nn::regression_heads(fwd.output);
        loss = losses::gaussian_nll_loss(heads.mu, heads.sigma2, y);
        output_grad = nn::regression_heads_backward(fwd.output, loss.grad.col(0), loss.grad.col(1));
        break;
      }
    }
    loss_sum += loss.scalar;
    ++batches;

    const auto grad = nn::backward(net, params, fwd.cache, output_grad);
    params.values -= opts.lr * grad.values;

    if (net.has_batchnorm()) nn::update_running_stats(net, fwd.cache);

    ++*global_step;
    if (opts.track && (*global_step % static_cast<std::uint64_t>(std::max(1, opts.thin)) == 0)) {
      tracker::tracker_step(state, params, grad, opts.lr, opts.hyper);
      if (cov != nullptr)
        tracker::cov_tracker_step(*cov, params, grad, state.mu, opts.lr, opts.hyper);
    }
  }
  return loss_sum / std::max(1, batches);
}

}  // namespace

TrainResult train_classifier(const std::vector<nn::LayerSpec>& specs, const data::Dataset& ds,
                             const TrainOptions& opts) {
  if (ds.task != metrics::TaskKind::classification)
    throw ContractError("classifier training expects a classification dataset");
  Timer timer;

  TrainResult res;
  res.net = nn::make_network(specs);
  for (auto& bn : res.net.bn) bn.momentum = opts.bn_momentum;
  auto init = nn::init_weights(specs, derive_seed(opts.seed, 0x1417));
  res.params = std::move(init.params);
  res.state = tracker::tracker_init(init.init_variance, opts.hyper);
  if (opts.track && opts.track_cov)
    res.cov = tracker::cov_tracker_init(init.init_variance, res.params.layout, opts.cov_limit);

  std::uint64_t step = 0;
  for (int e = 0; e < opts.epochs; ++e) {
    const auto epoch_seed = derive_seed(opts.seed, 0xe90c + static_cast<std::uint64_t>(e));
    res.epoch_loss.push_back(run_epoch(res.net, res.params, res.state,
                                       res.cov ? &*res.cov : nullptr, ds,
                                       Objective::cross_entropy, opts, epoch_seed, &step));
  }
  res.wall_seconds = timer.wall();
  res.cpu_seconds = timer.cpu();
  return res;
}

TrainResult train_regressor(const std::vector<nn::LayerSpec>& specs, const data::Dataset& ds,
                            const TrainOptions& opts) {
  if (ds.task != metrics::TaskKind::regression)
    throw ContractError("regressor training expects a regression dataset");
  if (specs.back().kind != nn::LayerKind::dense || specs.back().out_dim != 1)
    throw ConfigError("regression architecture must end in a dense layer with one output");
  Timer timer;

  const int phase1 = opts.phase1_epochs >= 0 ? opts.phase1_epochs : opts.epochs / 2;
  const int phase2 = std::max(0, opts.epochs - phase1);

  TrainResult res;
  res.net = nn::make_network(specs);
  for (auto& bn : res.net.bn) bn.momentum = opts.bn_momentum;
  auto init = nn::init_weights(specs, derive_seed(opts.seed, 0x1417));
  res.params = std::move(init.params);
  res.state = tracker::tracker_init(init.init_variance, opts.hyper);
  if (opts.track && opts.track_cov)
    res.cov = tracker::cov_tracker_init(init.init_variance, res.params.layout, opts.cov_limit);

  std::uint64_t step = 0;
  for (int e = 0; e < phase1; ++e) {
    const auto epoch_seed = derive_seed(opts.seed, 0xe90c + static_cast<std::uint64_t>(e));
    res.epoch_loss.push_back(run_epoch(res.net, res.params, res.state,
                                       res.cov ? &*res.cov : nullptr, ds, Objective::mse, opts,
                                       epoch_seed, &step));
  }

  auto widened =
      nn::widen_regression_head(specs, res.params, derive_seed(opts.seed, 0x2417));
  res.state = remap_state(res.state, widened.source_index, widened.init_variance);
  if (res.cov)
    res.cov = remap_cov(*res.cov, widened.source_index, widened.init_variance,
                        widened.params.layout, opts.cov_limit);
  res.params = std::move(widened.params);
  nn::Network wide_net = nn::make_network(widened.specs);
  wide_net.bn = res.net.bn;  // keep accumulated running statistics
  res.net = std::move(wide_net);

  auto phase2_opts = opts;
  if (opts.phase2_lr > 0.0) phase2_opts.lr = opts.phase2_lr;
  for (int e = 0; e < phase2; ++e) {
    const auto epoch_seed = derive_seed(opts.seed, 0xf90c + static_cast<std::uint64_t>(e));
    res.epoch_loss.push_back(run_epoch(res.net, res.params, res.state,
                                       res.cov ? &*res.cov : nullptr, ds,
                                       Objective::gaussian_nll, phase2_opts, epoch_seed, &step));
  }

  res.wall_seconds = timer.wall();
  res.cpu_seconds = timer.cpu();
  return res;
}

tracker::TrackerState remap_state(const tracker::TrackerState& old,
                                  const std::vector<std::ptrdiff_t>& source_index,
                                  const Vector& init_variance) {
  tracker::TrackerState out;
  out.p_mean = old.p_mean;
  out.p_var = old.p_var;
  out.step = old.step;
  out.mu = Vector::Zero(static_cast<Eigen::Index>(source_index.size()));
  out.sigma2 = init_variance;
  for (std::size_t i = 0; i < source_index.size(); ++i) {
    if (source_index[i] >= 0) {
      out.mu[static_cast<Eigen::Index>(i)] = old.mu[static_cast<Eigen::Index>(source_index[i])];
      out.sigma2[static_cast<Eigen::Index>(i)] =
          old.sigma2[static_cast<Eigen::Index>(source_index[i])];
    }
  }
  return out;
}

tracker::LayerCovariance remap_cov(const tracker::LayerCovariance& old,
                                   const std::vector<std::ptrdiff_t>& source_index,
                                   const Vector& init_variance,
                                   const std::vector<nn::ParamSlice>& new_layout, int limit) {
  auto out = tracker::cov_tracker_init(init_variance, new_layout, limit);
  out.p_cov = old.p_cov;

  auto old_block_of = [&](std::size_t flat) -> std::ptrdiff_t {
    for (std::size_t b = 0; b < old.blocks.size(); ++b) {
      const auto off = old.block_offset[b];
      if (flat >= off && flat < off + static_cast<std::size_t>(old.blocks[b].rows()))
        return static_cast<std::ptrdiff_t>(b);
    }
    return -1;
  };

  for (std::size_t b = 0; b < out.blocks.size(); ++b) {
    auto& block = out.blocks[b];
    const auto off = out.block_offset[b];
    for (Eigen::Index i = 0; i < block.rows(); ++i) {
      for (Eigen::Index j = 0; j < block.cols(); ++j) {
        const auto si = source_index[off + static_cast<std::size_t>(i)];
        const auto sj = source_index[off + static_cast<std::size_t>(j)];
        if (si < 0 || sj < 0) continue;
        const auto bi = old_block_of(static_cast<std::size_t>(si));
        const auto bj = old_block_of(static_cast<std::size_t>(sj));
        if (bi < 0 || bi != bj) continue;
        const auto boff = old.block_offset[static_cast<std::size_t>(bi)];
        block(i, j) = old.blocks[static_cast<std::size_t>(bi)](
            static_cast<Eigen::Index>(si - static_cast<std::ptrdiff_t>(boff)),
            static_cast<Eigen::Index>(sj - static_cast<std::ptrdiff_t>(boff)));
      }
    }
  }
  return out;
}

}  // namespace tradi::train
