#pragma once

#include "tradi/common.hpp"
#include "tradi/nn.hpp"

#include <string>
#include <vector>

namespace tradi::tracker {

// Variance state-equation increment per step:
//   centered : lr^2 * (grad_k - mu_k)^2   (operational reference)
//   plain    : lr^2 * grad_k^2            (ablation variant)
enum class VarianceUpdate { centered, plain };

struct TrackerHyper {
  double mean_state_noise = 1e-4;  // added to P_mean before each gain
  double mean_obs_noise = 1e-3;    // must be > 0
  double var_state_noise = 1e-4;
  double var_obs_noise = 1e-3;
  VarianceUpdate variance_update = VarianceUpdate::centered;
  double variance_floor = 1e-8;  // keeps tracked variances sampler-safe
};

// Per-weight filtered means and variances plus the scalar estimate
// covariances shared across all weights.
struct TrackerState {
  Vector mu;
  Vector sigma2;
  double p_mean = 0.0;
  double p_var = 0.0;
  std::uint64_t step = 0;
};

// Prior: zero-mean per-weight Gaussians with the init variances; both
// estimate covariances start at zero.
TrackerState tracker_init(const Vector& init_variance, const TrackerHyper& hyper);

// One filter update after an SGD step. `weights` must already hold the
// post-update values omega(t); `grad` is the mini-batch-averaged gradient
// that produced them. Throws NumericError (state untouched) on non-finite
// gradients.
void tracker_step(TrackerState& state, const nn::ParamVector& weights,
                  const nn::ParamVector& grad, double lr, const TrackerHyper& hyper);

// Checkpoint format (little-endian): magic "TRDS", u32 version, u64 K,
// u64 step, f64 p_mean, f64 p_var, K f64 mu, K f64 sigma2.
void save_checkpoint(const TrackerState& state, const std::string& path);
TrackerState load_checkpoint(const std::string& path);

// Weight-realization checkpoint: magic "TRDW", u32 version, u64 K, K f64.
void save_weights(const Vector& values, const std::string& path);
Vector load_weights(const std::string& path);

// Exact per-layer covariance for tiny layers. Weights on different layers
// stay independent; each block covers one parameterized layer (weights and
// biases together). Blocks larger than layer_size_limit are rejected at
// construction in favor of the low-rank path.
struct LayerCovariance {
  std::vector<Matrix> blocks;
  std::vector<std::size_t> block_offset;  // first flat index of each block
  int layer_size_limit = 100;
  double p_cov = 0.0;
};

LayerCovariance cov_tracker_init(const Vector& init_variance,
                                 const std::vector<nn::ParamSlice>& layout,
                                 int layer_size_limit = 100);

// Entrywise Kalman update of every block, sharing one scalar estimate
// covariance. `mu` must be the tracked means after tracker_step for the same
// step, so the diagonal evolves exactly like the per-weight variances.
void cov_tracker_step(LayerCovariance& cov, const nn::ParamVector& weights,
                      const nn::ParamVector& grad, const Vector& mu, double lr,
                      const TrackerHyper& hyper);

}  // namespace tradi::tracker
