#pragma once

#include "tradi/common.hpp"

#include <cstddef>
#include <vector>

namespace tradi::nn {

enum class LayerKind { dense, relu, dropout, batchnorm };

struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  int in_dim = 0;
  int out_dim = 0;
  double dropout_rate = 0.0;  // meaningful for dropout layers only
};

LayerSpec dense(int in_dim, int out_dim);
LayerSpec relu(int dim);
LayerSpec dropout(int dim, double rate);
LayerSpec batchnorm(int dim);

// One contiguous run of trainable values inside the flat parameter vector.
// fan_in is the quantity behind the 2/fan_in init variance of the slice.
struct ParamSlice {
  int layer = 0;
  std::size_t offset = 0;
  std::size_t length = 0;
  int fan_in = 0;
};

// Flat vector of all K trainable weights plus the layout that maps runs of
// it back onto layer tensors. Dense layers contribute a weight block
// (in_dim x out_dim, row-major) followed by a bias block; batchnorm layers
// contribute scale then shift.
struct ParamVector {
  Vector values;
  std::vector<ParamSlice> layout;

  std::size_t size() const { return static_cast<std::size_t>(values.size()); }
};

struct BatchNormState {
  Vector running_mean;
  Vector running_var;
  double momentum = 0.1;  // weight of the current batch in the running update
};

struct Network {
  std::vector<LayerSpec> specs;
  std::vector<BatchNormState> bn;  // one per batchnorm layer, in chain order

  int input_dim() const;
  int output_dim() const;
  bool has_batchnorm() const;
  bool has_dropout() const;
};

// Validates the chain (out_dim of layer l must equal in_dim of layer l+1)
// and sets up fresh batchnorm running statistics.
Network make_network(std::vector<LayerSpec> specs);

// train      - dropout active (inverted scaling), batchnorm uses batch stats
// eval       - dropout identity, batchnorm uses running stats
// mc_dropout - dropout active, batchnorm uses running stats (test-time passes)
// calibrate  - dropout identity, batchnorm uses batch stats (stat refresh)
enum class ForwardMode { train, eval, mc_dropout, calibrate };

struct ForwardCache {
  ForwardMode mode = ForwardMode::eval;
  // acts[l] is the input to layer l; acts.back() is the network output.
  std::vector<Matrix> acts;
  std::vector<Matrix> dropout_mask;  // one per dropout layer, in chain order
  std::vector<Vector> bn_mean;       // statistics used for normalization,
  std::vector<Vector> bn_var;        // one per batchnorm layer
  bool bn_batch_stats = false;
  std::size_t param_count = 0;
};

struct InitResult {
  ParamVector params;
  Vector init_variance;  // per-weight sigma_k^2(0) handed to the tracker
};

// He initialization: dense weights ~ N(0, 2/fan_in), biases 0. Biases and
// batchnorm scale/shift carry the same 2/fan_in init variance so the tracker
// starts from a nonzero prior. Batchnorm scale starts at 1, shift at 0.
InitResult init_weights(const std::vector<LayerSpec>& specs, std::uint64_t rng_seed);

struct ForwardResult {
  Matrix output;
  ForwardCache cache;
};

ForwardResult forward(const Network& net, const ParamVector& params, const Matrix& batch,
                      ForwardMode mode, std::uint64_t rng_seed);

// Mini-batch-averaged gradient with respect to every trainable weight. The
// batch average is carried by output_grad (losses divide by the batch size),
// so this propagates it unchanged.
ParamVector backward(const Network& net, const ParamVector& params, const ForwardCache& cache,
                     const Matrix& output_grad);

// Folds the batch statistics captured in a train-mode cache into the running
// statistics, weighted by each state's momentum.
void update_running_stats(Network& net, const ForwardCache& cache);

// Momentum-free recomputation: one calibrate-mode pass over the concatenated
// calibration batches; the exact per-feature mean/variance seen by each
// batchnorm layer become its running statistics.
std::vector<BatchNormState> refresh_batchnorm(const Network& net, const ParamVector& params,
                                              const std::vector<Matrix>& calibration_batches);

struct RegressionHeads {
  Vector mu;      // column 0, raw
  Vector sigma2;  // softplus(column 1) + 1e-6, always positive
};

RegressionHeads regression_heads(const Matrix& output);

// Chains head gradients back to the raw two-column output.
Matrix regression_heads_backward(const Matrix& output, const Vector& d_mu,
                                 const Vector& d_sigma2);

// Adds the predicted-variance column to a single-output regression head.
// Existing weights keep their values; the new column and bias are drawn
// fresh from the init distribution. source_index maps each new flat index
// to its old index, or -1 for newly created weights.
struct HeadWidening {
  std::vector<LayerSpec> specs;
  ParamVector params;
  Vector init_variance;
  std::vector<std::ptrdiff_t> source_index;
};

HeadWidening widen_regression_head(const std::vector<LayerSpec>& specs, const ParamVector& params,
                                   std::uint64_t rng_seed);

// Row-major view of a dense layer's weight block.
Eigen::Map<const Matrix> weight_block(const ParamVector& params, const ParamSlice& slice);

}  // namespace tradi::nn
