#pragma once

#include "tradi/common.hpp"
#include "tradi/nn.hpp"
#include "tradi/sampler.hpp"
#include "tradi/train.hpp"

#include <functional>
#include <vector>

namespace tradi::baselines {

enum class Method { deep_ensemble, mc_dropout, gauss_perturb, mcp };

struct BaselineConfig {
  Method method = Method::mcp;
  int m = 20;                  // ensemble size or forward passes
  double perturb_scale = 1.0;  // gauss_perturb: multiplier on the init std
  double dropout_rate = 0.1;   // mc_dropout: rate inserted when absent
};

Method method_from_string(const std::string& name);
std::string method_name(Method m);

// M fully independent trainings differing only in their seed. Member
// failures abort with the member index attached.
std::vector<train::TrainResult> deep_ensemble_train(
    int m, const std::function<train::TrainResult(std::uint64_t)>& train_one,
    std::uint64_t master_seed, int workers);

// M stochastic forward passes with dropout active (batchnorm keeps running
// statistics), averaged like any other ensemble.
Matrix mc_dropout_predict_classification(const nn::Network& net, const nn::ParamVector& params,
                                         const Matrix& inputs, int passes, std::uint64_t seed);

sampler::RegressionMixture mc_dropout_predict_regression(const nn::Network& net,
                                                         const nn::ParamVector& params,
                                                         const Matrix& inputs, int passes,
                                                         std::uint64_t seed);

// Members perturb every weight with N(0, (scale * sqrt(2/fan_in))^2) noise
// around the trained values.
std::vector<sampler::WeightSample> gauss_perturb_ensemble(
    const nn::Network& net, const nn::ParamVector& trained, int m, double perturb_scale,
    std::uint64_t seed, const std::vector<Matrix>& calibration_batches);

// Max softmax probability of the single deterministic network.
Vector mcp_confidence(const nn::Network& net, const nn::ParamVector& params, const Matrix& inputs);

// Copies an architecture, inserting dropout after every hidden activation
// when none is present (the mc_dropout path for dropout-free networks).
std::vector<nn::LayerSpec> with_dropout(const std::vector<nn::LayerSpec>& specs, double rate);

}  // namespace tradi::baselines
