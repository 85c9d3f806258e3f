#include "tradi/rff.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace tradi::rff {

RFFProjection rff_init(int n_features, double sigma_rbf, std::uint64_t seed) {
  if (n_features < 1) throw ContractError("need at least one random feature");
  if (!(sigma_rbf > 0.0)) throw ContractError("sigma_rbf must be positive");

  RFFProjection proj;
  proj.sigma_rbf = sigma_rbf;
  proj.seed = seed;
  proj.theta = Vector(n_features);
  proj.phi = Vector(n_features);

  auto rng = make_rng(seed);
  std::normal_distribution<double> freq(0.0, sigma_rbf);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  for (int i = 0; i < n_features; ++i) proj.theta[i] = freq(rng);
  for (int i = 0; i < n_features; ++i) proj.phi[i] = phase(rng);
  return proj;
}

Vector feature_map(const RFFProjection& proj, double w) {
  if (!std::isfinite(w)) throw ContractError("weight value must be finite");
  const double scale = std::sqrt(2.0 / proj.feature_count());
  return scale * (proj.theta.array() * w + proj.phi.array()).cos();
}

LowRankFactor build_factor(const RFFProjection& proj, const Vector& weights,
                           const Vector& sigma) {
  if (weights.size() != sigma.size()) throw ContractError("weights/sigma length mismatch");
  for (Eigen::Index k = 0; k < sigma.size(); ++k)
    if (sigma[k] < 0.0) throw ContractError("negative weight standard deviation");

  const auto n = static_cast<Eigen::Index>(proj.feature_count());
  const double scale = std::sqrt(2.0 / static_cast<double>(n));

  LowRankFactor factor;
  factor.r.noalias() = weights * proj.theta.transpose();
  factor.r.rowwise() += proj.phi.transpose();
  factor.r = factor.r.array().cos();
  factor.r.array().colwise() *= scale * sigma.array();
  return factor;
}

}  // namespace tradi::rff
