#pragma once

#include "tradi/common.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace tradi::metrics {

struct ClassificationRecord {
  std::int64_t id = 0;
  int label = -1;  // -1 sentinel for out-of-distribution examples
  int pred = 0;
  double confidence = 0.0;  // max class probability, in [0,1]
  bool in_dist = true;
  // Probability assigned to the true label; NaN when unknown (OOD examples,
  // dumps loaded from the 5-column CSV). Only classification_nll needs it.
  double p_true = std::numeric_limits<double>::quiet_NaN();
};

struct GaussComponent {
  double mean = 0.0;
  double var = 1.0;
};

struct RegressionRecord {
  std::int64_t id = 0;
  double target = 0.0;
  double mu = 0.0;  // mixture mean
  std::vector<GaussComponent> components;
};

enum class TaskKind { classification, regression };

struct PredictionDump {
  TaskKind task = TaskKind::classification;
  std::vector<ClassificationRecord> cls;
  std::vector<RegressionRecord> reg;

  std::size_t size() const {
    return task == TaskKind::classification ? cls.size() : reg.size();
  }
};

// A record counts as correct when pred == label and it is in-distribution;
// OOD examples are incorrect for every predicted class.
double accuracy(const PredictionDump& dump);
double rmse(const PredictionDump& dump);
// Mean -log p(true label) over in-distribution records carrying p_true.
double classification_nll(const PredictionDump& dump);
// Mean mixture NLL of the target under each record's components.
double regression_mixture_nll(const PredictionDump& dump);

double ece(const PredictionDump& dump, int bins = 15);

struct RocMetrics {
  double auc = 0.0;
  double aupr = 0.0;
  double fpr_at_95_tpr = 0.0;
};

// OOD is the positive class; detection score is 1 - confidence. Requires
// both classes present.
RocMetrics roc_metrics(const std::vector<double>& confidences, const std::vector<bool>& ood);
RocMetrics roc_metrics(const PredictionDump& dump);

struct CurvePoint {
  double x = 0.0;
  double value = 0.0;  // NaN marks an empty selection
  long support = 0;
};

struct CurveData {
  std::vector<CurvePoint> points;
};

// Accuracy over examples with confidence >= threshold, per threshold.
CurveData accuracy_vs_confidence(const PredictionDump& dump, const std::vector<double>& thresholds);

// equal_width covers [0,1] in fixed strips; equal_count sorts by confidence
// and slices into near-equal groups (x is then the group's mean confidence).
enum class BinMode { equal_width, equal_count };

// Per-bin accuracy over confidence bins.
CurveData calibration_curve(const PredictionDump& dump, int bins,
                            BinMode mode = BinMode::equal_width);
// Same binning with macro-averaged per-class precision instead of accuracy.
CurveData precision_calibration_curve(const PredictionDump& dump, int bins,
                                      BinMode mode = BinMode::equal_width);

// Classification CSV: header id,label,pred,confidence,in_dist.
// Regression CSV: header id,target,mu,sigma2_json with the components as a
// quoted JSON array of [mean, variance] pairs.
void write_dump(const PredictionDump& dump, const std::string& path);
PredictionDump read_dump(const std::string& path);

// Curve CSV: header x,value,support.
void write_curve(const CurveData& curve, const std::string& path);

}  // namespace tradi::metrics
