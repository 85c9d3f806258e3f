#pragma once

#include "tradi/common.hpp"

#include <cstdint>

namespace tradi::rff {

// Random cosine features z(w) = sqrt(2/N) [cos(theta_i * w + phi_i)]_i
// approximating the RBF kernel exp(-(w-w')^2 / (2 sigma_rbf^2)) over scalar
// weight values. Frequencies are N(0, sigma_rbf^2), phases U[0, 2pi]; one
// projection is drawn per sampling session and shared across all weights.
struct RFFProjection {
  Vector theta;
  Vector phi;
  double sigma_rbf = 1.0;
  std::uint64_t seed = 0;

  int feature_count() const { return static_cast<int>(theta.size()); }
};

RFFProjection rff_init(int n_features, double sigma_rbf, std::uint64_t seed);

Vector feature_map(const RFFProjection& proj, double w);

// K x N factor with row k = sigma_k * z(w_k); its Gram R R^T approximates the
// weight covariance without ever materializing a K x K matrix.
struct LowRankFactor {
  Matrix r;
};

LowRankFactor build_factor(const RFFProjection& proj, const Vector& weights, const Vector& sigma);

}  // namespace tradi::rff
