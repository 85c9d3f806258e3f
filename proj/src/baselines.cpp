#include "tradi/baselines.hpp"

#include "tradi/losses.hpp"

#include <random>
#include <string>

namespace tradi::baselines {

Method method_from_string(const std::string& name) {
  if (name == "deep_ensemble") return Method::deep_ensemble;
  if (name == "mc_dropout") return Method::mc_dropout;
  if (name == "gauss_perturb") return Method::gauss_perturb;
  if (name == "mcp") return Method::mcp;
  throw ConfigError("unknown baseline method: " + name);
}

std::string method_name(Method m) {
  switch (m) {
    case Method::deep_ensemble: return "deep_ensemble";
    case Method::mc_dropout: return "mc_dropout";
    case Method::gauss_perturb: return "gauss_perturb";
    case Method::mcp: return "mcp";
  }
  return "?";
}

std::vector<train::TrainResult> deep_ensemble_train(
    int m, const std::function<train::TrainResult(std::uint64_t)>& train_one,
    std::uint64_t master_seed, int workers) {
  if (m < 1) throw ContractError("ensemble size must be at least one");
  std::vector<train::TrainResult> members(static_cast<std::size_t>(m));
  parallel_for(m, workers, [&](int j) {
    try {
      members[static_cast<std::size_t>(j)] =
          train_one(derive_seed(master_seed, 0xde00 + static_cast<std::uint64_t>(j)));
    } catch (const Error& e) {
      throw Error("ensemble member " + std::to_string(j) + " failed: " + e.what());
    }
  });
  return members;
}

namespace {

void require_dropout(const nn::Network& net) {
  if (!net.has_dropout())
    throw ConfigError("mc_dropout needs at least one dropout layer with a positive rate");
}

}  // namespace

Matrix mc_dropout_predict_classification(const nn::Network& net, const nn::ParamVector& params,
                                         const Matrix& inputs, int passes, std::uint64_t seed) {
  require_dropout(net);
  if (passes < 1) throw ContractError("need at least one forward pass");
  Matrix mean = Matrix::Zero(inputs.rows(), net.output_dim());
  for (int p = 0; p < passes; ++p) {
    const auto out = nn::forward(net, params, inputs, nn::ForwardMode::mc_dropout,
                                 derive_seed(seed, static_cast<std::uint64_t>(p)));
    mean += losses::softmax(out.output);
  }
  return mean / static_cast<double>(passes);
}

sampler::RegressionMixture mc_dropout_predict_regression(const nn::Network& net,
                                                         const nn::ParamVector& params,
                                                         const Matrix& inputs, int passes,
                                                         std::uint64_t seed) {
  require_dropout(net);
  if (passes < 1) throw ContractError("need at least one forward pass");
  sampler::RegressionMixture mix;
  mix.mu = Matrix(inputs.rows(), passes);
  mix.sigma2 = Matrix(inputs.rows(), passes);
  for (int p = 0; p < passes; ++p) {
    const auto out = nn::forward(net, params, inputs, nn::ForwardMode::mc_dropout,
                                 derive_seed(seed, static_cast<std::uint64_t>(p)));
    const auto heads = nn::regression_heads(out.output);
    mix.mu.col(p) = heads.mu;
    mix.sigma2.col(p) = heads.sigma2;
  }
  return mix;
}

std::vector<sampler::WeightSample> gauss_perturb_ensemble(
    const nn::Network& net, const nn::ParamVector& trained, int m, double perturb_scale,
    std::uint64_t seed, const std::vector<Matrix>& calibration_batches) {
  if (!(perturb_scale > 0.0)) throw ContractError("perturbation scale must be positive");
  if (m < 1) throw ContractError("ensemble size must be at least one");

  std::vector<nn::ParamVector> members;
  members.reserve(static_cast<std::size_t>(m));
  for (int j = 0; j < m; ++j) {
    auto rng = make_rng(derive_seed(seed, 0x9e00 + static_cast<std::uint64_t>(j)));
    std::normal_distribution<double> unit(0.0, 1.0);
    nn::ParamVector p = trained;
    for (const auto& slice : p.layout) {
      const double sd = perturb_scale * std::sqrt(2.0 / slice.fan_in);
      for (std::size_t i = 0; i < slice.length; ++i)
        p.values[static_cast<Eigen::Index>(slice.offset + i)] += sd * unit(rng);
    }
    members.push_back(std::move(p));
  }
  return sampler::wrap_ensemble(net, members, calibration_batches);
}

Vector mcp_confidence(const nn::Network& net, const nn::ParamVector& params,
                      const Matrix& inputs) {
  const auto out = nn::forward(net, params, inputs, nn::ForwardMode::eval, 0);
  const Matrix probs = losses::softmax(out.output);
  return probs.rowwise().maxCoeff();
}

std::vector<nn::LayerSpec> with_dropout(const std::vector<nn::LayerSpec>& specs, double rate) {
  for (const auto& s : specs)
    if (s.kind == nn::LayerKind::dropout && s.dropout_rate > 0.0) return specs;

  std::vector<nn::LayerSpec> out;
  for (std::size_t l = 0; l < specs.size(); ++l) {
    out.push_back(specs[l]);
    const bool hidden_activation =
        specs[l].kind == nn::LayerKind::relu && l + 1 < specs.size();
    if (hidden_activation) out.push_back(nn::dropout(specs[l].out_dim, rate));
  }
  return out;
}

}  // namespace tradi::baselines
