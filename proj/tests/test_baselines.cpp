#include "tradi/baselines.hpp"

#include "tradi/losses.hpp"
#include "tradi/metrics.hpp"

#include <doctest.h>

#include "helpers.hpp"

#include <cmath>

using namespace tradi;

namespace {

train::TrainResult quick_classifier(const data::Dataset& ds, std::uint64_t seed,
                                    double dropout_rate = 0.0) {
  std::vector<nn::LayerSpec> specs = {nn::dense(static_cast<int>(ds.features.cols()), 12),
                                      nn::relu(12)};
  if (dropout_rate > 0.0) specs.push_back(nn::dropout(12, dropout_rate));
  specs.push_back(nn::dense(12, 3));
  train::TrainOptions opts;
  opts.lr = 0.1;
  opts.epochs = 3;
  opts.batch_size = 16;
  opts.seed = seed;
  opts.track = false;
  return train::train_classifier(specs, ds, opts);
}

}  // namespace

TEST_CASE("method names parse both ways") {
  using baselines::Method;
  CHECK(baselines::method_from_string("deep_ensemble") == Method::deep_ensemble);
  CHECK(baselines::method_from_string("mcp") == Method::mcp);
  CHECK(baselines::method_name(Method::gauss_perturb) == "gauss_perturb");
  CHECK_THROWS_AS(baselines::method_from_string("swag"), ConfigError);
  CHECK(baselines::BaselineConfig{}.perturb_scale == 1.0);
}

TEST_CASE("deep ensembles differ only by seed") {
  const auto ds = testutil::blobs(64, 6, 3, 50);
  auto train_one = [&](std::uint64_t seed) { return quick_classifier(ds, seed); };

  SUBCASE("a single member reproduces a standalone training") {
    const auto members = baselines::deep_ensemble_train(1, train_one, 7, 1);
    const auto solo = train_one(derive_seed(7, 0xde00));
    CHECK((members[0].params.values - solo.params.values).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("members are distinct") {
    const auto members = baselines::deep_ensemble_train(3, train_one, 7, 1);
    CHECK((members[0].params.values - members[1].params.values).cwiseAbs().maxCoeff() > 0.0);
    CHECK((members[1].params.values - members[2].params.values).cwiseAbs().maxCoeff() > 0.0);
  }

  SUBCASE("parallel training matches serial member for member") {
    const auto serial = baselines::deep_ensemble_train(4, train_one, 9, 1);
    const auto parallel = baselines::deep_ensemble_train(4, train_one, 9, 4);
    for (std::size_t j = 0; j < 4; ++j)
      CHECK((serial[j].params.values - parallel[j].params.values).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("a failing member reports its index") {
    auto flaky = [&](std::uint64_t seed) -> train::TrainResult {
      if (seed == derive_seed(7, 0xde00 + 2)) throw NumericError("diverged");
      return quick_classifier(ds, seed);
    };
    try {
      baselines::deep_ensemble_train(4, flaky, 7, 1);
      FAIL("expected failure");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("member 2") != std::string::npos);
    }
  }
}

TEST_CASE("mc dropout requires live dropout layers") {
  const auto ds = testutil::blobs(48, 5, 3, 51);
  const auto plain = quick_classifier(ds, 3);
  CHECK_THROWS_AS(baselines::mc_dropout_predict_classification(plain.net, plain.params,
                                                               ds.features, 4, 0),
                  ConfigError);
}

TEST_CASE("mc dropout at a vanishing rate reduces to the deterministic pass") {
  const auto ds = testutil::blobs(48, 5, 3, 52);
  const auto tr = quick_classifier(ds, 4, 1e-12);
  const Matrix mc = baselines::mc_dropout_predict_classification(tr.net, tr.params,
                                                                 ds.features, 16, 99);
  const Matrix point = losses::softmax(
      nn::forward(tr.net, tr.params, ds.features, nn::ForwardMode::eval, 0).output);
  CHECK((mc - point).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("mc dropout prediction stabilizes with many passes") {
  const auto ds = testutil::blobs(8, 5, 3, 53);
  const auto tr = quick_classifier(ds, 5, 0.3);
  const int passes = 10000;

  Matrix first = Matrix::Zero(ds.features.rows(), 3);
  Matrix second = Matrix::Zero(ds.features.rows(), 3);
  Matrix sq = Matrix::Zero(ds.features.rows(), 3);
  for (int p = 0; p < passes; ++p) {
    const auto out = nn::forward(tr.net, tr.params, ds.features, nn::ForwardMode::mc_dropout,
                                 derive_seed(1717, static_cast<std::uint64_t>(p)));
    const Matrix probs = losses::softmax(out.output);
    (p < passes / 2 ? first : second) += probs;
    sq += probs.cwiseProduct(probs);
  }
  const Matrix mean = (first + second) / passes;
  first /= passes / 2.0;
  second /= passes / 2.0;
  for (Eigen::Index i = 0; i < mean.size(); ++i) {
    const double var = sq.reshaped()[i] / passes -
                       mean.reshaped()[i] * mean.reshaped()[i];
    const double se_halves = std::sqrt(std::max(var, 1e-30) / (passes / 2.0)) * 2.0;
    CHECK(std::abs(first.reshaped()[i] - second.reshaped()[i]) <= 3.0 * se_halves + 1e-9);
  }
}

TEST_CASE("gaussian perturbation scales with the init deviation") {
  const auto ds = testutil::blobs(48, 5, 3, 54);
  const auto tr = quick_classifier(ds, 6);

  SUBCASE("vanishing scale reproduces the trained network") {
    const auto members =
        baselines::gauss_perturb_ensemble(tr.net, tr.params, 3, 1e-12, 1, {});
    for (const auto& m : members)
      CHECK((m.params.values - tr.params.values).cwiseAbs().maxCoeff() < 1e-9);
  }

  SUBCASE("per-weight deviation matches scale times the init std") {
    const double scale = 0.5;
    const int m = 4000;
    const auto members = baselines::gauss_perturb_ensemble(tr.net, tr.params, m, scale, 2, {});
    // first weight of the first dense layer: fan_in = 5
    const double expected_sd = scale * std::sqrt(2.0 / 5.0);
    double sum = 0.0, sq = 0.0;
    for (const auto& s : members) {
      const double d = s.params.values[0] - tr.params.values[0];
      sum += d;
      sq += d * d;
    }
    const double sd = std::sqrt(sq / m - (sum / m) * (sum / m));
    CHECK(sd == doctest::Approx(expected_sd).epsilon(0.08));
  }

  SUBCASE("non-positive scale is rejected") {
    CHECK_THROWS_AS(baselines::gauss_perturb_ensemble(tr.net, tr.params, 2, 0.0, 1, {}),
                    ContractError);
  }
}

TEST_CASE("mcp confidence reads the softmax maximum") {
  const std::vector<nn::LayerSpec> specs = {nn::dense(1, 2)};
  auto init = nn::init_weights(specs, 0);
  const auto net = nn::make_network(specs);
  Matrix x(1, 1);
  x << 0.0;

  init.params.values << 0, 0, 0, 0;  // uniform logits
  CHECK(baselines::mcp_confidence(net, init.params, x)[0] == doctest::Approx(0.5));

  init.params.values << 0, 0, 50, -50;  // strongly peaked
  CHECK(baselines::mcp_confidence(net, init.params, x)[0] == doctest::Approx(1.0));
}

TEST_CASE("identical dumps give identical metrics regardless of producer") {
  // the comparison tables run through one metric path; two methods writing
  // the same predictions must score the same
  metrics::PredictionDump dump;
  dump.task = metrics::TaskKind::classification;
  for (int i = 0; i < 10; ++i) {
    metrics::ClassificationRecord r;
    r.id = i;
    r.label = i % 3;
    r.pred = (i * 7) % 3;
    r.confidence = 0.1 * (i % 10);
    dump.cls.push_back(r);
  }
  auto copy = dump;
  CHECK(metrics::accuracy(dump) == metrics::accuracy(copy));
  CHECK(metrics::ece(dump, 15) == metrics::ece(copy, 15));
}

TEST_CASE("dropout insertion leaves dropout-bearing chains alone") {
  const std::vector<nn::LayerSpec> with = {nn::dense(4, 8), nn::relu(8), nn::dropout(8, 0.2),
                                           nn::dense(8, 2)};
  CHECK(baselines::with_dropout(with, 0.5).size() == with.size());

  const std::vector<nn::LayerSpec> without = {nn::dense(4, 8), nn::relu(8), nn::dense(8, 8),
                                              nn::relu(8), nn::dense(8, 2)};
  const auto inserted = baselines::with_dropout(without, 0.5);
  CHECK(inserted.size() == without.size() + 2);
  int drops = 0;
  for (const auto& s : inserted)
    if (s.kind == nn::LayerKind::dropout) ++drops;
  CHECK(drops == 2);
  CHECK_NOTHROW(nn::make_network(inserted));
}
