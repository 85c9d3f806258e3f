#pragma once

#include "tradi/common.hpp"

#include <vector>

namespace tradi::losses {

// Mini-batch mean loss plus the gradient with respect to the quantities the
// loss was evaluated on (network output for MSE / cross-entropy, the two
// regression heads for the Gaussian NLL).
struct LossValue {
  double scalar = 0.0;
  Matrix grad;
};

LossValue mse_loss(const Vector& mu_pred, const Vector& targets);

// Per-sample 0.5*(mu-y)^2/sigma2 + 0.5*log(sigma2), averaged over the batch.
// grad column 0 is d/d mu, column 1 is d/d sigma2.
LossValue gaussian_nll_loss(const Vector& mu_pred, const Vector& sigma2, const Vector& targets);

LossValue cross_entropy_loss(const Matrix& logits, const std::vector<int>& labels);

// Row-wise stable softmax.
Matrix softmax(const Matrix& logits);

}  // namespace tradi::losses
