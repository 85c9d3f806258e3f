#pragma once

#include "tradi/common.hpp"
#include "tradi/nn.hpp"
#include "tradi/rff.hpp"
#include "tradi/tracker.hpp"

#include <random>
#include <vector>

namespace tradi::sampler {

// One realization of the tracked weight distribution, carrying its own
// refreshed batchnorm statistics when the architecture has any.
struct WeightSample {
  nn::ParamVector params;
  std::vector<nn::BatchNormState> bn;
  int index = 0;
};

// omega = mu + chol(Sigma_l + jitter I) * m per layer block. The jitter
// starts at 1e-10 and escalates tenfold up to 1e-4 before giving up.
WeightSample sample_full_cov(const Vector& mu, const tracker::LayerCovariance& cov,
                             const nn::ParamVector& layout_like, std::mt19937_64& rng);

// omega = mu + R * m with a single shared N-dimensional draw, so all weights
// are perturbed coherently through the kernel. per_layer_draw uses an
// independent m per layer block instead (ablation).
WeightSample sample_rff(const Vector& mu, const rff::LowRankFactor& factor,
                        const nn::ParamVector& layout_like, std::mt19937_64& rng,
                        bool per_layer_draw = false);

enum class SampleMode { full_cov, rff };

struct EnsembleConfig {
  SampleMode mode = SampleMode::rff;
  int n_models = 20;
  int rff_features = 10;
  double rff_sigma = 1.0;
  bool per_layer_draw = false;
  std::uint64_t seed = 0;
};

// Draws n_models realizations from the tracked distribution and refreshes
// each one's batchnorm statistics over the calibration batches.
std::vector<WeightSample> build_ensemble(const EnsembleConfig& cfg, const nn::Network& net,
                                         const nn::ParamVector& trained,
                                         const tracker::TrackerState& state,
                                         const tracker::LayerCovariance* cov,
                                         const std::vector<Matrix>& calibration_batches);

// Wraps already-trained parameter sets (deep ensembles, perturbation
// ensembles) in the same carrier so prediction code has one path.
std::vector<WeightSample> wrap_ensemble(const nn::Network& net,
                                        const std::vector<nn::ParamVector>& members,
                                        const std::vector<Matrix>& calibration_batches);

// Mean of the member softmax outputs, rows summing to one.
Matrix predict_classification(const nn::Network& net, const std::vector<WeightSample>& ensemble,
                              const Matrix& inputs);

// Equal-weight Gaussian mixture per input; column j holds member j.
struct RegressionMixture {
  Matrix mu;
  Matrix sigma2;
};

RegressionMixture predict_regression(const nn::Network& net,
                                     const std::vector<WeightSample>& ensemble,
                                     const Matrix& inputs);

struct MixtureMoments {
  double mean = 0.0;
  double variance = 0.0;
};

MixtureMoments mixture_moments(const Vector& mu, const Vector& sigma2);

// Negative log of the mixture density at y, with the 1/2 log(2 pi)
// normalizer included so values line up with the usual NLL reporting.
double mixture_nll(const Vector& mu, const Vector& sigma2, double y);

// Members stored as weight checkpoints member_000.bin, member_001.bin, ...
// under dir. Loading reuses the reference layout and refreshes batchnorm
// statistics the same way build_ensemble does.
void save_ensemble(const std::vector<WeightSample>& ensemble, const std::string& dir);
std::vector<WeightSample> load_ensemble(const std::string& dir, const nn::Network& net,
                                        const nn::ParamVector& layout_like,
                                        const std::vector<Matrix>& calibration_batches);

}  // namespace tradi::sampler
