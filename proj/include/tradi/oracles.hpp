#pragma once

#include "tradi/common.hpp"
#include "tradi/metrics.hpp"
#include "tradi/rff.hpp"

#include <functional>
#include <vector>

// Standalone reference implementations, deliberately independent of the
// production code paths they are used to check. The verify battery and the
// test suites compare against these.
namespace tradi::oracles {

// Central finite differences, one coordinate at a time.
Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& at,
                   double h = 1e-5);

// Textbook one-dimensional Kalman filter (predict with additive control and
// process noise, correct with gain P/(P+r) toward a direct observation).
struct ScalarKalman {
  double x = 0.0;
  double p = 0.0;

  void predict(double control, double process_noise) {
    x += control;
    p += process_noise;
  }
  void update(double observation, double obs_noise) {
    const double gain = p / (p + obs_noise);
    x += gain * (observation - x);
    p *= 1.0 - gain;
  }
};

// All-thresholds enumeration of AUC / AUPR / FPR at 95% TPR, recounting the
// confusion table from scratch at every distinct score.
metrics::RocMetrics brute_force_roc(const std::vector<double>& confidences,
                                    const std::vector<bool>& ood);

double brute_force_ece(const metrics::PredictionDump& dump, int bins);
metrics::CurveData brute_force_accuracy_vs_confidence(const metrics::PredictionDump& dump,
                                                      const std::vector<double>& thresholds);
metrics::CurveData brute_force_calibration(const metrics::PredictionDump& dump, int bins,
                                           bool precision);

// Composite Simpson integration on [lo, hi] with an odd number of nodes.
double simpson(const std::function<double(double)>& f, double lo, double hi, int nodes = 20001);

// Dense K x K covariance built the explicit way: (v v^T) Hadamard the
// feature-space Gram of z(omega_k).
Matrix dense_covariance(const rff::RFFProjection& proj, const Vector& weights,
                        const Vector& sigma);

}  // namespace tradi::oracles
