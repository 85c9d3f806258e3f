#include "tradi/metrics.hpp"

#include "tradi/oracles.hpp"

#include <doctest.h>

#include "helpers.hpp"

#include <cmath>
#include <fstream>
#include <random>

using namespace tradi;

namespace {

metrics::PredictionDump simple_dump(const std::vector<double>& conf,
                                    const std::vector<bool>& correct,
                                    const std::vector<bool>& ood = {}) {
  metrics::PredictionDump dump;
  dump.task = metrics::TaskKind::classification;
  for (std::size_t i = 0; i < conf.size(); ++i) {
    metrics::ClassificationRecord r;
    r.id = static_cast<std::int64_t>(i);
    r.confidence = conf[i];
    r.in_dist = ood.empty() ? true : !ood[i];
    r.label = r.in_dist ? (correct[i] ? 1 : 0) : -1;
    r.pred = 1;
    r.p_true = r.in_dist ? (correct[i] ? conf[i] : 1.0 - conf[i]) : 0.0;
    dump.cls.push_back(r);
  }
  return dump;
}

}  // namespace

TEST_CASE("perfect predictions score perfectly") {
  const auto dump = simple_dump({1.0, 1.0, 1.0}, {true, true, true});
  CHECK(metrics::accuracy(dump) == 1.0);
  CHECK(metrics::ece(dump, 15) == 0.0);
}

TEST_CASE("two-point regression rmse by hand") {
  metrics::PredictionDump dump;
  dump.task = metrics::TaskKind::regression;
  metrics::RegressionRecord a, b;
  a.target = 2.0;
  a.mu = 0.0;
  a.components = {{0.0, 1.0}};
  b.target = 0.0;
  b.mu = 2.0;
  b.components = {{2.0, 1.0}};
  dump.reg = {a, b};
  CHECK(metrics::rmse(dump) == doctest::Approx(2.0));
}

TEST_CASE("task mismatch is rejected") {
  const auto cls = simple_dump({0.5}, {true});
  CHECK_THROWS_AS(metrics::rmse(cls), ContractError);
  metrics::PredictionDump reg;
  reg.task = metrics::TaskKind::regression;
  reg.reg.push_back({0, 0.0, 0.0, {{0.0, 1.0}}});
  CHECK_THROWS_AS(metrics::accuracy(reg), ContractError);
  metrics::PredictionDump empty;
  CHECK_THROWS_AS(metrics::ece(empty, 15), ContractError);
}

TEST_CASE("a perfectly calibrated construction keeps ece below half a bin") {
  // bin centers carry matching hit rates by construction
  metrics::PredictionDump dump;
  dump.task = metrics::TaskKind::classification;
  auto rng = make_rng(5);
  const int bins = 15;
  int id = 0;
  for (int b = 0; b < bins; ++b) {
    const double conf = (b + 0.5) / bins;
    const int n = 2000;
    const int hits = static_cast<int>(std::lround(conf * n));
    for (int i = 0; i < n; ++i) {
      metrics::ClassificationRecord r;
      r.id = id++;
      r.confidence = conf;
      r.pred = 1;
      r.label = i < hits ? 1 : 0;
      dump.cls.push_back(r);
    }
  }
  (void)rng;
  CHECK(metrics::ece(dump, bins) < 1.0 / (2.0 * bins));
}

TEST_CASE("ece equals the accuracy-confidence gap at constant confidence") {
  auto rng = make_rng(6);
  std::bernoulli_distribution hit(0.37);
  std::vector<double> conf;
  std::vector<bool> correct;
  for (int i = 0; i < 5000; ++i) {
    conf.push_back(0.7);
    correct.push_back(hit(rng));
  }
  const auto dump = simple_dump(conf, correct);
  const double acc = metrics::accuracy(dump);
  CHECK(metrics::ece(dump, 15) == doctest::Approx(std::abs(acc - 0.7)).epsilon(1e-12));
  CHECK(metrics::ece(dump, 15) >= 0.0);
  CHECK(metrics::ece(dump, 15) <= 1.0);
}

TEST_CASE("ood examples count as incorrect in ece and accuracy") {
  const auto dump = simple_dump({0.9, 0.9}, {true, true}, {false, true});
  CHECK(metrics::accuracy(dump) == doctest::Approx(0.5));
  // one correct at 0.9, one forced-wrong at 0.9 -> acc 0.5 in the top bin
  CHECK(metrics::ece(dump, 10) == doctest::Approx(0.4));
}

TEST_CASE("roc metrics on separable and degenerate scores") {
  SUBCASE("perfect separation") {
    const auto m =
        metrics::roc_metrics({0.9, 0.8, 0.2, 0.1}, {false, false, true, true});
    CHECK(m.auc == doctest::Approx(1.0));
    CHECK(m.aupr == doctest::Approx(1.0));
    CHECK(m.fpr_at_95_tpr == doctest::Approx(0.0));
  }
  SUBCASE("identical scores sit at chance") {
    const auto m = metrics::roc_metrics({0.5, 0.5, 0.5, 0.5}, {false, true, false, true});
    CHECK(m.auc == doctest::Approx(0.5));
  }
  SUBCASE("single class is rejected") {
    CHECK_THROWS_AS(metrics::roc_metrics({0.5, 0.4}, {true, true}), ContractError);
  }
}

TEST_CASE("six-example dump matches brute-force enumeration exactly") {
  const std::vector<double> conf = {0.95, 0.9, 0.8, 0.7, 0.6, 0.2};
  const std::vector<bool> ood = {false, false, true, false, true, true};
  const auto fast = metrics::roc_metrics(conf, ood);
  const auto slow = oracles::brute_force_roc(conf, ood);
  CHECK(fast.auc == slow.auc);
  CHECK(fast.aupr == slow.aupr);
  CHECK(fast.fpr_at_95_tpr == slow.fpr_at_95_tpr);
}

TEST_CASE("roc equals brute force on dumps with ties") {
  auto rng = make_rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::bernoulli_distribution flag(0.3);
  for (int rep = 0; rep < 5; ++rep) {
    std::vector<double> conf;
    std::vector<bool> ood;
    bool has_pos = false, has_neg = false;
    for (int i = 0; i < 400; ++i) {
      conf.push_back(std::round(u(rng) * 25.0) / 25.0);
      ood.push_back(flag(rng));
      (ood.back() ? has_pos : has_neg) = true;
    }
    if (!has_pos || !has_neg) continue;
    const auto fast = metrics::roc_metrics(conf, ood);
    const auto slow = oracles::brute_force_roc(conf, ood);
    CHECK(std::abs(fast.auc - slow.auc) < 1e-12);
    CHECK(std::abs(fast.aupr - slow.aupr) < 1e-12);
    CHECK(fast.fpr_at_95_tpr == slow.fpr_at_95_tpr);
  }
}

TEST_CASE("auc is invariant under a strictly monotone score transform") {
  auto rng = make_rng(19);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::bernoulli_distribution flag(0.4);
  std::vector<double> conf;
  std::vector<bool> ood;
  for (int i = 0; i < 300; ++i) {
    conf.push_back(u(rng));
    ood.push_back(flag(rng));
  }
  ood[0] = true;
  ood[1] = false;
  // cube the detection score: 1 - c' = (1 - c)^3
  std::vector<double> transformed;
  for (double c : conf) transformed.push_back(1.0 - std::pow(1.0 - c, 3.0));
  const auto a = metrics::roc_metrics(conf, ood);
  const auto b = metrics::roc_metrics(transformed, ood);
  CHECK(std::abs(a.auc - b.auc) < 1e-12);
}

TEST_CASE("accuracy-vs-confidence curve") {
  const auto dump = simple_dump({0.9, 0.8, 0.55, 0.3}, {true, false, true, false});
  const auto curve = metrics::accuracy_vs_confidence(dump, {0.0, 0.5, 0.85, 0.99});

  SUBCASE("threshold zero equals global accuracy") {
    CHECK(curve.points[0].value == doctest::Approx(metrics::accuracy(dump)));
    CHECK(curve.points[0].support == 4);
  }
  SUBCASE("support is non-increasing and empty selections are flagged") {
    CHECK(curve.points[1].support == 3);
    CHECK(curve.points[2].support == 1);
    CHECK(curve.points[3].support == 0);
    CHECK(std::isnan(curve.points[3].value));
    for (std::size_t i = 1; i < curve.points.size(); ++i)
      CHECK(curve.points[i].support <= curve.points[i - 1].support);
  }
  SUBCASE("hand enumeration agrees") {
    const auto slow =
        oracles::brute_force_accuracy_vs_confidence(dump, {0.0, 0.5, 0.85, 0.99});
    for (std::size_t i = 0; i < curve.points.size(); ++i) {
      CHECK(curve.points[i].support == slow.points[i].support);
      if (curve.points[i].support > 0) CHECK(curve.points[i].value == slow.points[i].value);
    }
  }
}

TEST_CASE("calibration curve basics") {
  const auto dump =
      simple_dump({0.9, 0.8, 0.55, 0.3, 0.2}, {true, false, true, false, true});

  SUBCASE("single bin reduces to global accuracy") {
    const auto curve = metrics::calibration_curve(dump, 1);
    REQUIRE(curve.points.size() == 1);
    CHECK(curve.points[0].value == doctest::Approx(metrics::accuracy(dump)));
    CHECK(curve.points[0].support == 5);
  }
  SUBCASE("empty bins carry markers and supports sum to the dump size") {
    const auto curve = metrics::calibration_curve(dump, 10);
    long total = 0;
    bool saw_empty = false;
    for (const auto& p : curve.points) {
      total += p.support;
      if (p.support == 0) {
        saw_empty = true;
        CHECK(std::isnan(p.value));
      }
    }
    CHECK(total == 5);
    CHECK(saw_empty);
  }
}

TEST_CASE("ten-example curves match enumeration") {
  auto rng = make_rng(23);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> cls(0, 2);
  metrics::PredictionDump dump;
  dump.task = metrics::TaskKind::classification;
  for (int i = 0; i < 10; ++i) {
    metrics::ClassificationRecord r;
    r.id = i;
    r.confidence = u(rng);
    r.pred = cls(rng);
    r.label = cls(rng);
    dump.cls.push_back(r);
  }
  for (bool precision : {false, true}) {
    const auto fast = precision ? metrics::precision_calibration_curve(dump, 5)
                                : metrics::calibration_curve(dump, 5);
    const auto slow = oracles::brute_force_calibration(dump, 5, precision);
    for (std::size_t i = 0; i < fast.points.size(); ++i) {
      CHECK(fast.points[i].support == slow.points[i].support);
      if (fast.points[i].support > 0)
        CHECK(fast.points[i].value == doctest::Approx(slow.points[i].value).epsilon(1e-14));
    }
  }
}

TEST_CASE("equal-count binning slices the sorted dump evenly") {
  auto rng = make_rng(29);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  metrics::PredictionDump dump;
  dump.task = metrics::TaskKind::classification;
  const int n = 103;
  for (int i = 0; i < n; ++i) {
    metrics::ClassificationRecord r;
    r.id = i;
    r.confidence = u(rng);
    r.pred = 1;
    r.label = u(rng) < r.confidence ? 1 : 0;
    dump.cls.push_back(r);
  }
  const int bins = 10;
  const auto curve = metrics::calibration_curve(dump, bins, metrics::BinMode::equal_count);
  REQUIRE(curve.points.size() == bins);

  long total = 0;
  for (const auto& p : curve.points) {
    total += p.support;
    CHECK(p.support >= n / bins);
    CHECK(p.support <= n / bins + 1);
  }
  CHECK(total == n);
  // x values (mean slice confidence) are non-decreasing across slices
  for (std::size_t i = 1; i < curve.points.size(); ++i)
    CHECK(curve.points[i].x >= curve.points[i - 1].x);

  // direct recomputation of the first slice
  std::vector<const metrics::ClassificationRecord*> sorted;
  for (const auto& r : dump.cls) sorted.push_back(&r);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](auto* a, auto* b) { return a->confidence < b->confidence; });
  const long first_len = curve.points[0].support;
  long correct = 0;
  for (long i = 0; i < first_len; ++i)
    correct += (sorted[static_cast<std::size_t>(i)]->pred ==
                sorted[static_cast<std::size_t>(i)]->label)
                   ? 1
                   : 0;
  CHECK(curve.points[0].value ==
        doctest::Approx(double(correct) / double(first_len)).epsilon(1e-14));
}

TEST_CASE("metrics are pure functions of the dump") {
  const auto dump = simple_dump({0.9, 0.7, 0.4}, {true, false, true}, {false, false, true});
  CHECK(metrics::accuracy(dump) == metrics::accuracy(dump));
  CHECK(metrics::ece(dump, 15) == metrics::ece(dump, 15));
  const auto a = metrics::roc_metrics(dump);
  const auto b = metrics::roc_metrics(dump);
  CHECK(a.auc == b.auc);
  CHECK(a.aupr == b.aupr);
  CHECK(a.fpr_at_95_tpr == b.fpr_at_95_tpr);
}

TEST_CASE("classification nll needs the true-label probability") {
  metrics::PredictionDump dump;
  dump.task = metrics::TaskKind::classification;
  metrics::ClassificationRecord r;
  r.label = 1;
  r.pred = 1;
  r.confidence = 0.8;
  r.p_true = 0.8;
  dump.cls.push_back(r);
  CHECK(metrics::classification_nll(dump) == doctest::Approx(-std::log(0.8)));

  dump.cls[0].p_true = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(metrics::classification_nll(dump), ContractError);
}

TEST_CASE("dump csv round trips both task kinds") {
  const auto dir = testutil::temp_dir("dumps");

  SUBCASE("classification") {
    const auto dump = simple_dump({0.9, 0.25}, {true, false}, {false, true});
    const auto path = dir + "/cls.csv";
    metrics::write_dump(dump, path);
    const auto back = metrics::read_dump(path);
    REQUIRE(back.task == metrics::TaskKind::classification);
    REQUIRE(back.cls.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(back.cls[i].id == dump.cls[i].id);
      CHECK(back.cls[i].label == dump.cls[i].label);
      CHECK(back.cls[i].pred == dump.cls[i].pred);
      CHECK(back.cls[i].confidence == dump.cls[i].confidence);
      CHECK(back.cls[i].in_dist == dump.cls[i].in_dist);
    }
  }

  SUBCASE("regression with mixture components") {
    metrics::PredictionDump dump;
    dump.task = metrics::TaskKind::regression;
    metrics::RegressionRecord r;
    r.id = 7;
    r.target = -1.25;
    r.mu = 0.5;
    r.components = {{0.25, 1.5}, {0.75, 0.25}};
    dump.reg.push_back(r);
    const auto path = dir + "/reg.csv";
    metrics::write_dump(dump, path);
    const auto back = metrics::read_dump(path);
    REQUIRE(back.task == metrics::TaskKind::regression);
    REQUIRE(back.reg.size() == 1);
    CHECK(back.reg[0].target == -1.25);
    CHECK(back.reg[0].mu == 0.5);
    REQUIRE(back.reg[0].components.size() == 2);
    CHECK(back.reg[0].components[1].mean == 0.75);
    CHECK(back.reg[0].components[1].var == 0.25);
    // the reloaded dump scores identically
    CHECK(metrics::regression_mixture_nll(back) ==
          doctest::Approx(metrics::regression_mixture_nll(dump)).epsilon(1e-14));
  }

  SUBCASE("bad files are rejected") {
    const auto path = dir + "/bad.csv";
    {
      std::ofstream out(path);
      out << "wrong,header\n1,2\n";
    }
    CHECK_THROWS_AS(metrics::read_dump(path), FormatError);
    CHECK_THROWS_AS(metrics::read_dump(dir + "/missing.csv"), IoError);
  }
}
