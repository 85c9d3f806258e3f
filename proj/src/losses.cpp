#include "tradi/losses.hpp"

#include <cmath>
#include <string>

namespace tradi::losses {

LossValue mse_loss(const Vector& mu_pred, const Vector& targets) {
  const auto n = mu_pred.size();
  if (n < 1) throw ContractError("empty batch");
  if (targets.size() != n) throw ContractError("prediction/target length mismatch");

  LossValue out;
  double sum = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double r = mu_pred[i] - targets[i];
    sum += r * r;
  }
  out.scalar = sum * inv_n;
  out.grad = (2.0 * inv_n) * (mu_pred - targets);
  return out;
}

LossValue gaussian_nll_loss(const Vector& mu_pred, const Vector& sigma2, const Vector& targets) {
  const auto n = mu_pred.size();
  if (n < 1) throw ContractError("empty batch");
  if (sigma2.size() != n || targets.size() != n)
    throw ContractError("prediction/target length mismatch");
  for (Eigen::Index i = 0; i < n; ++i)
    if (!(sigma2[i] > 0.0)) throw ContractError("non-positive predicted variance");

  LossValue out;
  out.grad = Matrix(n, 2);
  double sq = 0.0, lg = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double r = mu_pred[i] - targets[i];
    const double s2 = sigma2[i];
    sq += r * r / s2;
    lg += std::log(s2);
    out.grad(i, 0) = r / s2 * inv_n;
    out.grad(i, 1) = 0.5 * (1.0 / s2 - r * r / (s2 * s2)) * inv_n;
  }
  out.scalar = 0.5 * (sq + lg) * inv_n;
  return out;
}

LossValue cross_entropy_loss(const Matrix& logits, const std::vector<int>& labels) {
  const auto n = logits.rows();
  const auto classes = logits.cols();
  if (n < 1) throw ContractError("empty batch");
  if (static_cast<Eigen::Index>(labels.size()) != n)
    throw ContractError("logits/labels length mismatch");
  for (int y : labels)
    if (y < 0 || y >= classes)
      throw ContractError("label " + std::to_string(y) + " out of range [0, " +
                          std::to_string(classes) + ")");

  LossValue out;
  out.grad = Matrix(n, classes);
  const double inv_n = 1.0 / static_cast<double>(n);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double m = logits.row(i).maxCoeff();
    double z = 0.0;
    for (Eigen::Index c = 0; c < classes; ++c) z += std::exp(logits(i, c) - m);
    const double lse = m + std::log(z);
    total += lse - logits(i, labels[static_cast<std::size_t>(i)]);
    for (Eigen::Index c = 0; c < classes; ++c)
      out.grad(i, c) = std::exp(logits(i, c) - lse) * inv_n;
    out.grad(i, labels[static_cast<std::size_t>(i)]) -= inv_n;
  }
  out.scalar = total * inv_n;
  return out;
}

Matrix softmax(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    double z = 0.0;
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
      p(i, c) = std::exp(logits(i, c) - m);
      z += p(i, c);
    }
    p.row(i) /= z;
  }
  return p;
}

}  // namespace tradi::losses
