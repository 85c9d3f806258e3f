#include "tradi/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

namespace tradi::oracles {

Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& at, double h) {
  Vector grad(at.size());
  Vector probe = at;
  for (Eigen::Index i = 0; i < at.size(); ++i) {
    probe[i] = at[i] + h;
    const double up = f(probe);
    probe[i] = at[i] - h;
    const double down = f(probe);
    probe[i] = at[i];
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

metrics::RocMetrics brute_force_roc(const std::vector<double>& confidences,
                                    const std::vector<bool>& ood) {
  if (confidences.size() != ood.size()) throw ContractError("scores/flags length mismatch");
  long pos = 0, neg = 0;
  for (bool f : ood) (f ? pos : neg)++;
  if (pos == 0 || neg == 0) throw ContractError("both classes must be present");

  std::set<double, std::greater<double>> thresholds;
  for (double c : confidences) thresholds.insert(1.0 - c);

  metrics::RocMetrics out;
  double prev_fpr = 0.0, prev_tpr = 0.0;
  bool fpr95_found = false;
  for (double tau : thresholds) {
    long tp = 0, fp = 0;
    for (std::size_t i = 0; i < confidences.size(); ++i) {
      if (1.0 - confidences[i] >= tau) (ood[i] ? tp : fp)++;
    }
    const double tpr = double(tp) / double(pos);
    const double fpr = double(fp) / double(neg);
    const double precision = double(tp) / double(tp + fp);
    out.auc += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
    out.aupr += (tpr - prev_tpr) * precision;
    if (!fpr95_found && tpr >= 0.95) {
      out.fpr_at_95_tpr = fpr;
      fpr95_found = true;
    }
    prev_fpr = fpr;
    prev_tpr = tpr;
  }
  return out;
}

double brute_force_ece(const metrics::PredictionDump& dump, int bins) {
  const double n = static_cast<double>(dump.cls.size());
  double total = 0.0;
  for (int b = 0; b < bins; ++b) {
    const double lo = double(b) / bins;
    const double hi = double(b + 1) / bins;
    double conf_sum = 0.0;
    long cnt = 0, correct = 0;
    for (const auto& r : dump.cls) {
      const bool in_bin = b + 1 == bins ? (r.confidence >= lo) : (r.confidence >= lo && r.confidence < hi);
      if (!in_bin) continue;
      ++cnt;
      conf_sum += r.confidence;
      correct += (r.in_dist && r.pred == r.label) ? 1 : 0;
    }
    if (cnt == 0) continue;
    total += (cnt / n) * std::abs(double(correct) / cnt - conf_sum / cnt);
  }
  return total;
}

metrics::CurveData brute_force_accuracy_vs_confidence(const metrics::PredictionDump& dump,
                                                      const std::vector<double>& thresholds) {
  metrics::CurveData curve;
  for (double tau : thresholds) {
    long cnt = 0, correct = 0;
    for (const auto& r : dump.cls) {
      if (r.confidence < tau) continue;
      ++cnt;
      correct += (r.in_dist && r.pred == r.label) ? 1 : 0;
    }
    metrics::CurvePoint p;
    p.x = tau;
    p.support = cnt;
    p.value = cnt ? double(correct) / cnt : std::numeric_limits<double>::quiet_NaN();
    curve.points.push_back(p);
  }
  return curve;
}

metrics::CurveData brute_force_calibration(const metrics::PredictionDump& dump, int bins,
                                           bool precision) {
  metrics::CurveData curve;
  for (int b = 0; b < bins; ++b) {
    const double lo = double(b) / bins;
    const double hi = double(b + 1) / bins;
    std::vector<const metrics::ClassificationRecord*> in_bin;
    for (const auto& r : dump.cls) {
      const bool member = b + 1 == bins ? (r.confidence >= lo) : (r.confidence >= lo && r.confidence < hi);
      if (member) in_bin.push_back(&r);
    }
    metrics::CurvePoint p;
    p.x = (b + 0.5) / bins;
    p.support = static_cast<long>(in_bin.size());
    if (in_bin.empty()) {
      p.value = std::numeric_limits<double>::quiet_NaN();
    } else if (!precision) {
      long correct = 0;
      for (auto* r : in_bin) correct += (r->in_dist && r->pred == r->label) ? 1 : 0;
      p.value = double(correct) / double(in_bin.size());
    } else {
      std::map<int, std::pair<long, long>> per_class;
      for (auto* r : in_bin) {
        auto& [c, t] = per_class[r->pred];
        ++t;
        c += (r->in_dist && r->pred == r->label) ? 1 : 0;
      }
      double sum = 0.0;
      for (auto& [cls, ct] : per_class) sum += double(ct.first) / double(ct.second);
      p.value = sum / double(per_class.size());
    }
    curve.points.push_back(p);
  }
  return curve;
}

double simpson(const std::function<double(double)>& f, double lo, double hi, int nodes) {
  if (nodes < 3) throw ContractError("need at least three nodes");
  if (nodes % 2 == 0) ++nodes;
  const double h = (hi - lo) / (nodes - 1);
  double sum = f(lo) + f(hi);
  for (int i = 1; i < nodes - 1; ++i) sum += f(lo + i * h) * (i % 2 == 1 ? 4.0 : 2.0);
  return sum * h / 3.0;
}

Matrix dense_covariance(const rff::RFFProjection& proj, const Vector& weights,
                        const Vector& sigma) {
  const auto k = weights.size();
  std::vector<Vector> features;
  features.reserve(static_cast<std::size_t>(k));
  for (Eigen::Index i = 0; i < k; ++i) features.push_back(rff::feature_map(proj, weights[i]));

  Matrix cov(k, k);
  for (Eigen::Index a = 0; a < k; ++a)
    for (Eigen::Index b = 0; b < k; ++b)
      cov(a, b) = sigma[a] * sigma[b] * features[static_cast<std::size_t>(a)].dot(
                                            features[static_cast<std::size_t>(b)]);
  return cov;
}

}  // namespace tradi::oracles
