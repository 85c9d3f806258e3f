#include "tradi/metrics.hpp"

#include "tradi/sampler.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace tradi::metrics {

namespace {

bool record_correct(const ClassificationRecord& r) { return r.in_dist && r.pred == r.label; }

void require_classification(const PredictionDump& dump) {
  if (dump.task != TaskKind::classification || dump.cls.empty())
    throw ContractError("expected a non-empty classification dump");
}

void require_regression(const PredictionDump& dump) {
  if (dump.task != TaskKind::regression || dump.reg.empty())
    throw ContractError("expected a non-empty regression dump");
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Minimal CSV field splitter handling one quoted field per row.
std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace

double accuracy(const PredictionDump& dump) {
  require_classification(dump);
  std::size_t correct = 0;
  for (const auto& r : dump.cls) correct += record_correct(r) ? 1u : 0u;
  return static_cast<double>(correct) / static_cast<double>(dump.cls.size());
}

double rmse(const PredictionDump& dump) {
  require_regression(dump);
  double sum = 0.0;
  for (const auto& r : dump.reg) {
    const double d = r.mu - r.target;
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(dump.reg.size()));
}

double classification_nll(const PredictionDump& dump) {
  require_classification(dump);
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& r : dump.cls) {
    if (!r.in_dist || !std::isfinite(r.p_true)) continue;
    total += -std::log(std::max(r.p_true, 1e-300));
    ++n;
  }
  if (n == 0) throw ContractError("no records carry the true-label probability");
  return total / static_cast<double>(n);
}

double regression_mixture_nll(const PredictionDump& dump) {
  require_regression(dump);
  double total = 0.0;
  for (const auto& r : dump.reg) {
    if (r.components.empty()) throw ContractError("record without mixture components");
    Vector mu(static_cast<Eigen::Index>(r.components.size()));
    Vector s2(static_cast<Eigen::Index>(r.components.size()));
    for (std::size_t j = 0; j < r.components.size(); ++j) {
      mu[static_cast<Eigen::Index>(j)] = r.components[j].mean;
      s2[static_cast<Eigen::Index>(j)] = r.components[j].var;
    }
    total += sampler::mixture_nll(mu, s2, r.target);
  }
  return total / static_cast<double>(dump.reg.size());
}

double ece(const PredictionDump& dump, int bins) {
  require_classification(dump);
  if (bins < 1) throw ContractError("need at least one bin");
  std::vector<long> count(static_cast<std::size_t>(bins), 0);
  std::vector<double> conf_sum(static_cast<std::size_t>(bins), 0.0);
  std::vector<long> correct(static_cast<std::size_t>(bins), 0);
  for (const auto& r : dump.cls) {
    int b = static_cast<int>(r.confidence * bins);
    b = std::clamp(b, 0, bins - 1);
    const auto bi = static_cast<std::size_t>(b);
    ++count[bi];
    conf_sum[bi] += r.confidence;
    correct[bi] += record_correct(r) ? 1 : 0;
  }
  const double n = static_cast<double>(dump.cls.size());
  double e = 0.0;
  for (int b = 0; b < bins; ++b) {
    const auto bi = static_cast<std::size_t>(b);
    if (count[bi] == 0) continue;
    const double acc = static_cast<double>(correct[bi]) / static_cast<double>(count[bi]);
    const double conf = conf_sum[bi] / static_cast<double>(count[bi]);
    e += (static_cast<double>(count[bi]) / n) * std::abs(acc - conf);
  }
  return e;
}

RocMetrics roc_metrics(const std::vector<double>& confidences, const std::vector<bool>& ood) {
  if (confidences.size() != ood.size()) throw ContractError("scores/flags length mismatch");
  long pos = 0, neg = 0;
  for (bool f : ood) (f ? pos : neg)++;
  if (pos == 0 || neg == 0) throw ContractError("both classes must be present");

  // Detection score 1 - confidence; sweep thresholds from high to low, one
  // operating point per distinct score.
  std::vector<std::pair<double, bool>> scored;
  scored.reserve(confidences.size());
  for (std::size_t i = 0; i < confidences.size(); ++i)
    scored.emplace_back(1.0 - confidences[i], ood[i]);
  std::sort(scored.begin(), scored.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });

  RocMetrics out;
  double prev_fpr = 0.0, prev_tpr = 0.0, prev_recall = 0.0;
  long tp = 0, fp = 0;
  bool fpr95_found = false;
  std::size_t i = 0;
  while (i < scored.size()) {
    const double threshold = scored[i].first;
    while (i < scored.size() && scored[i].first == threshold) {
      (scored[i].second ? tp : fp)++;
      ++i;
    }
    const double tpr = static_cast<double>(tp) / static_cast<double>(pos);
    const double fpr = static_cast<double>(fp) / static_cast<double>(neg);
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    out.auc += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
    out.aupr += (tpr - prev_recall) * precision;
    if (!fpr95_found && tpr >= 0.95) {
      out.fpr_at_95_tpr = fpr;
      fpr95_found = true;
    }
    prev_fpr = fpr;
    prev_tpr = tpr;
    prev_recall = tpr;
  }
  return out;
}

RocMetrics roc_metrics(const PredictionDump& dump) {
  require_classification(dump);
  std::vector<double> conf;
  std::vector<bool> flags;
  conf.reserve(dump.cls.size());
  flags.reserve(dump.cls.size());
  for (const auto& r : dump.cls) {
    conf.push_back(r.confidence);
    flags.push_back(!r.in_dist);
  }
  return roc_metrics(conf, flags);
}

CurveData accuracy_vs_confidence(const PredictionDump& dump,
                                 const std::vector<double>& thresholds) {
  require_classification(dump);
  CurveData curve;
  for (double tau : thresholds) {
    long support = 0, correct = 0;
    for (const auto& r : dump.cls) {
      if (r.confidence >= tau) {
        ++support;
        correct += record_correct(r) ? 1 : 0;
      }
    }
    CurvePoint p;
    p.x = tau;
    p.support = support;
    p.value = support > 0 ? static_cast<double>(correct) / static_cast<double>(support)
                          : std::numeric_limits<double>::quiet_NaN();
    curve.points.push_back(p);
  }
  return curve;
}

namespace {

CurvePoint score_bin(const std::vector<const ClassificationRecord*>& in_bin, double x,
                     bool precision) {
  CurvePoint point;
  point.x = x;
  point.support = static_cast<long>(in_bin.size());
  if (in_bin.empty()) {
    point.value = std::numeric_limits<double>::quiet_NaN();
    return point;
  }
  if (!precision) {
    long correct = 0;
    for (const auto* r : in_bin) correct += record_correct(*r) ? 1 : 0;
    point.value = static_cast<double>(correct) / static_cast<double>(in_bin.size());
  } else {
    std::map<int, std::pair<long, long>> per_class;  // pred -> (correct, total)
    for (const auto* r : in_bin) {
      auto& [c, t] = per_class[r->pred];
      ++t;
      c += record_correct(*r) ? 1 : 0;
    }
    double sum = 0.0;
    for (const auto& [cls, ct] : per_class)
      sum += static_cast<double>(ct.first) / static_cast<double>(ct.second);
    point.value = sum / static_cast<double>(per_class.size());
  }
  return point;
}

CurveData binned_curve(const PredictionDump& dump, int bins, bool precision, BinMode mode) {
  require_classification(dump);
  if (bins < 1) throw ContractError("need at least one bin");
  CurveData curve;

  if (mode == BinMode::equal_width) {
    std::vector<std::vector<const ClassificationRecord*>> members(static_cast<std::size_t>(bins));
    for (const auto& r : dump.cls) {
      int b = static_cast<int>(r.confidence * bins);
      b = std::clamp(b, 0, bins - 1);
      members[static_cast<std::size_t>(b)].push_back(&r);
    }
    for (int b = 0; b < bins; ++b)
      curve.points.push_back(
          score_bin(members[static_cast<std::size_t>(b)], (b + 0.5) / bins, precision));
    return curve;
  }

  // equal_count: sorted slices of near-equal size
  std::vector<const ClassificationRecord*> sorted;
  sorted.reserve(dump.cls.size());
  for (const auto& r : dump.cls) sorted.push_back(&r);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto* a, const auto* b) { return a->confidence < b->confidence; });
  const auto n = sorted.size();
  std::size_t at = 0;
  for (int b = 0; b < bins; ++b) {
    const std::size_t len = n / static_cast<std::size_t>(bins) +
                            (static_cast<std::size_t>(b) < n % static_cast<std::size_t>(bins));
    std::vector<const ClassificationRecord*> slice(sorted.begin() + static_cast<std::ptrdiff_t>(at),
                                                   sorted.begin() + static_cast<std::ptrdiff_t>(at + len));
    double mean_conf = std::numeric_limits<double>::quiet_NaN();
    if (!slice.empty()) {
      mean_conf = 0.0;
      for (const auto* r : slice) mean_conf += r->confidence;
      mean_conf /= static_cast<double>(slice.size());
    }
    curve.points.push_back(score_bin(slice, mean_conf, precision));
    at += len;
  }
  return curve;
}

}  // namespace

CurveData calibration_curve(const PredictionDump& dump, int bins, BinMode mode) {
  return binned_curve(dump, bins, false, mode);
}

CurveData precision_calibration_curve(const PredictionDump& dump, int bins, BinMode mode) {
  return binned_curve(dump, bins, true, mode);
}

void write_dump(const PredictionDump& dump, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  if (dump.task == TaskKind::classification) {
    out << "id,label,pred,confidence,in_dist\n";
    for (const auto& r : dump.cls)
      out << r.id << ',' << r.label << ',' << r.pred << ',' << fmt_double(r.confidence) << ','
          << (r.in_dist ? 1 : 0) << '\n';
  } else {
    out << "id,target,mu,sigma2_json\n";
    for (const auto& r : dump.reg) {
      nlohmann::json comps = nlohmann::json::array();
      for (const auto& c : r.components) comps.push_back({c.mean, c.var});
      out << r.id << ',' << fmt_double(r.target) << ',' << fmt_double(r.mu) << ",\""
          << comps.dump() << "\"\n";
    }
  }
  if (!out) throw IoError("write failed: " + path);
}

PredictionDump read_dump(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string header;
  if (!std::getline(in, header)) throw FormatError("empty dump file: " + path);
  if (!header.empty() && header.back() == '\r') header.pop_back();

  PredictionDump dump;
  std::string line;
  std::size_t row = 1;
  if (header == "id,label,pred,confidence,in_dist") {
    dump.task = TaskKind::classification;
    while (std::getline(in, line)) {
      ++row;
      if (line.empty()) continue;
      const auto f = split_csv_row(line);
      if (f.size() != 5)
        throw FormatError(path + ":" + std::to_string(row) + ": expected 5 fields");
      ClassificationRecord r;
      r.id = std::stoll(f[0]);
      r.label = std::stoi(f[1]);
      r.pred = std::stoi(f[2]);
      r.confidence = std::stod(f[3]);
      r.in_dist = std::stoi(f[4]) != 0;
      dump.cls.push_back(r);
    }
  } else if (header == "id,target,mu,sigma2_json") {
    dump.task = TaskKind::regression;
    while (std::getline(in, line)) {
      ++row;
      if (line.empty()) continue;
      const auto f = split_csv_row(line);
      if (f.size() != 4)
        throw FormatError(path + ":" + std::to_string(row) + ": expected 4 fields");
      RegressionRecord r;
      r.id = std::stoll(f[0]);
      r.target = std::stod(f[1]);
      r.mu = std::stod(f[2]);
      const auto comps = nlohmann::json::parse(f[3], nullptr, false);
      if (comps.is_discarded() || !comps.is_array())
        throw FormatError(path + ":" + std::to_string(row) + ": bad component JSON");
      for (const auto& c : comps) r.components.push_back({c.at(0).get<double>(), c.at(1).get<double>()});
      dump.reg.push_back(r);
    }
  } else {
    throw FormatError("unrecognized dump header in " + path);
  }
  return dump;
}

void write_curve(const CurveData& curve, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "x,value,support\n";
  for (const auto& p : curve.points)
    out << fmt_double(p.x) << ',' << (std::isnan(p.value) ? "nan" : fmt_double(p.value)) << ','
        << p.support << '\n';
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace tradi::metrics
