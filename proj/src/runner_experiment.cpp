#include "tradi/losses.hpp"
#include "tradi/metrics.hpp"
#include "tradi/runner.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

namespace tradi::runner {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct PhaseTimer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double stop() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

std::vector<Matrix> calibration_batches(const Matrix& features, int rows, int batch_size) {
  const auto n = std::min<Eigen::Index>(features.rows(), std::max(1, rows));
  std::vector<Matrix> batches;
  for (Eigen::Index at = 0; at < n; at += batch_size)
    batches.push_back(features.middleRows(at, std::min<Eigen::Index>(batch_size, n - at)));
  return batches;
}

metrics::PredictionDump dump_from_probs(const Matrix& probs, const std::vector<int>& labels,
                                        const std::vector<bool>& in_dist) {
  metrics::PredictionDump dump;
  dump.task = metrics::TaskKind::classification;
  dump.cls.reserve(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    metrics::ClassificationRecord r;
    r.id = i;
    r.label = labels[static_cast<std::size_t>(i)];
    Eigen::Index arg = 0;
    r.confidence = probs.row(i).maxCoeff(&arg);
    r.pred = static_cast<int>(arg);
    r.in_dist = in_dist.empty() || in_dist[static_cast<std::size_t>(i)];
    if (r.in_dist && r.label >= 0 && r.label < probs.cols())
      r.p_true = probs(i, r.label);
    dump.cls.push_back(r);
  }
  return dump;
}

metrics::PredictionDump dump_from_mixture(const sampler::RegressionMixture& mix,
                                          const Vector& targets) {
  metrics::PredictionDump dump;
  dump.task = metrics::TaskKind::regression;
  dump.reg.reserve(static_cast<std::size_t>(mix.mu.rows()));
  for (Eigen::Index i = 0; i < mix.mu.rows(); ++i) {
    metrics::RegressionRecord r;
    r.id = i;
    r.target = targets[i];
    for (Eigen::Index j = 0; j < mix.mu.cols(); ++j)
      r.components.push_back({mix.mu(i, j), mix.sigma2(i, j)});
    r.mu = sampler::mixture_moments(mix.mu.row(i).transpose(), mix.sigma2.row(i).transpose()).mean;
    dump.reg.push_back(r);
  }
  return dump;
}

void write_probs_sidecar(const metrics::PredictionDump& dump, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "id,label,p_true\n";
  for (const auto& r : dump.cls) out << r.id << ',' << r.label << ',' << r.p_true << '\n';
}

Matrix ensemble_probs(const nn::Network& net, const std::vector<sampler::WeightSample>& ensemble,
                      const Matrix& inputs) {
  return sampler::predict_classification(net, ensemble, inputs);
}

// Deep-ensemble members keep their own batchnorm running statistics.
Matrix members_probs(const std::vector<train::TrainResult>& members, const Matrix& inputs) {
  Matrix mean = Matrix::Zero(inputs.rows(), members.front().net.output_dim());
  for (const auto& m : members) {
    const auto out = nn::forward(m.net, m.params, inputs, nn::ForwardMode::eval, 0);
    mean += losses::softmax(out.output);
  }
  return mean / static_cast<double>(members.size());
}

sampler::RegressionMixture members_mixture(const std::vector<train::TrainResult>& members,
                                           const Matrix& inputs) {
  sampler::RegressionMixture mix;
  mix.mu = Matrix(inputs.rows(), static_cast<Eigen::Index>(members.size()));
  mix.sigma2 = Matrix(inputs.rows(), static_cast<Eigen::Index>(members.size()));
  for (std::size_t j = 0; j < members.size(); ++j) {
    const auto out =
        nn::forward(members[j].net, members[j].params, inputs, nn::ForwardMode::eval, 0);
    const auto heads = nn::regression_heads(out.output);
    mix.mu.col(static_cast<Eigen::Index>(j)) = heads.mu;
    mix.sigma2.col(static_cast<Eigen::Index>(j)) = heads.sigma2;
  }
  return mix;
}

void denormalize_mixture(sampler::RegressionMixture& mix, const data::Normalization& norm) {
  for (Eigen::Index i = 0; i < mix.mu.rows(); ++i)
    for (Eigen::Index j = 0; j < mix.mu.cols(); ++j) {
      mix.mu(i, j) = data::denormalize_mean(mix.mu(i, j), norm);
      mix.sigma2(i, j) = data::denormalize_variance(mix.sigma2(i, j), norm);
    }
}

struct RegressionScore {
  double rmse = 0.0;
  double nll = 0.0;
};

RegressionScore score_regression(const metrics::PredictionDump& dump) {
  return {metrics::rmse(dump), metrics::regression_mixture_nll(dump)};
}

std::string method_label(const baselines::BaselineConfig& b) {
  return baselines::method_name(b.method);
}

}  // namespace

// ---------------------------------------------------------------------------
// toy_regression
// ---------------------------------------------------------------------------

namespace {

RunReport run_toy(const ExperimentConfig& cfg, const std::string& out_dir, int workers) {
  RunReport report;
  const auto gp = data::synth_gp(cfg.dataset.n_train, cfg.dataset.n_test,
                                 derive_seed(cfg.seed, 0xda7a));

  // trained in z-scored units like the fold harness; predictions are
  // de-normalized before scoring
  std::vector<int> all_rows(static_cast<std::size_t>(gp.train.rows()));
  std::iota(all_rows.begin(), all_rows.end(), 0);
  const auto norm = data::fit_normalization(gp.train, all_rows);
  data::Dataset train = gp.train;
  train.features = data::normalize_features(train.features, norm);
  train.targets = data::normalize_targets(train.targets, norm);
  const Matrix test_features = data::normalize_features(gp.test.features, norm);

  const auto specs = build_chain(cfg.arch, 1, 1);
  train::TrainOptions topts;
  topts.lr = cfg.optim.lr;
  topts.epochs = cfg.optim.epochs;
  topts.batch_size = cfg.optim.batch_size;
  topts.phase1_epochs = cfg.optim.phase1_epochs;
  topts.phase2_lr = cfg.optim.phase2_lr;
  topts.bn_momentum = cfg.optim.bn_momentum;
  topts.seed = derive_seed(cfg.seed, 0x7a71);
  topts.hyper = cfg.tracking.hyper;
  topts.thin = cfg.tracking.thin;
  topts.track = true;
  topts.track_cov = cfg.tracking.track_cov || cfg.sampling.mode == sampler::SampleMode::full_cov;
  topts.cov_limit = cfg.tracking.cov_limit;

  const auto tr = train::train_regressor(specs, train, topts);
  report.timings["tradi_train_wall_s"] = tr.wall_seconds;
  report.timings["tradi_train_cpu_s"] = tr.cpu_seconds;

  sampler::EnsembleConfig ecfg;
  ecfg.mode = cfg.sampling.mode;
  ecfg.n_models = cfg.sampling.n_models;
  ecfg.rff_features = cfg.sampling.rff_features;
  ecfg.rff_sigma = cfg.sampling.rff_sigma;
  ecfg.per_layer_draw = cfg.sampling.per_layer_draw;
  ecfg.seed = derive_seed(cfg.seed, 0x5a3e);
  const auto calib =
      calibration_batches(train.features, cfg.sampling.calibration_rows, cfg.optim.batch_size);
  const auto ensemble =
      sampler::build_ensemble(ecfg, tr.net, tr.params, tr.state, tr.cov ? &*tr.cov : nullptr,
                              tr.net.has_batchnorm() ? calib : std::vector<Matrix>{});

  auto mix = sampler::predict_regression(tr.net, ensemble, test_features);
  denormalize_mixture(mix, norm);
  auto dump = dump_from_mixture(mix, gp.test.targets);
  const auto dump_path = (fs::path(out_dir) / "tradi.dump.csv").string();
  metrics::write_dump(dump, dump_path);

  // predictive standard deviation inside the training range vs at least one
  // kernel length-scale outside it
  double inside = 0.0, outside = 0.0;
  long n_in = 0, n_out = 0;
  for (Eigen::Index i = 0; i < gp.test.features.rows(); ++i) {
    const double x = gp.test.features(i, 0);
    const auto mom =
        sampler::mixture_moments(mix.mu.row(i).transpose(), mix.sigma2.row(i).transpose());
    const double sd = std::sqrt(mom.variance);
    if (x >= gp.train_lo && x <= gp.train_hi) {
      inside += sd;
      ++n_in;
    } else if (x <= gp.train_lo - 1.0 || x >= gp.train_hi + 1.0) {
      outside += sd;
      ++n_out;
    }
  }
  inside /= std::max(1L, n_in);
  outside /= std::max(1L, n_out);

  MethodRow row;
  row.name = "tradi";
  const auto sc = score_regression(dump);
  row.values["rmse"] = sc.rmse;
  row.values["nll"] = sc.nll;
  row.values["train_seconds"] = tr.wall_seconds;
  row.values["std_inside"] = inside;
  row.values["std_outside"] = outside;
  row.values["std_ratio"] = inside > 0.0 ? outside / inside : 0.0;
  row.dump_path = dump_path;
  report.rows.push_back(row);

  // plot-ready profile: x, mixture mean, mixture std
  {
    const auto profile_path = (fs::path(out_dir) / "tradi.profile.csv").string();
    std::ofstream out(profile_path);
    out << "x,mean,std\n";
    for (Eigen::Index i = 0; i < gp.test.features.rows(); ++i) {
      const auto mom =
          sampler::mixture_moments(mix.mu.row(i).transpose(), mix.sigma2.row(i).transpose());
      out << gp.test.features(i, 0) << ',' << mom.mean << ',' << std::sqrt(mom.variance) << '\n';
    }
    report.curve_files.push_back(profile_path);
  }

  for (const auto& b : cfg.baseline_list) {
    MethodRow brow;
    brow.name = method_label(b);
    sampler::RegressionMixture bmix;
    PhaseTimer timer;
    switch (b.method) {
      case baselines::Method::deep_ensemble: {
        auto train_one = [&](std::uint64_t seed) {
          auto o = topts;
          o.seed = seed;
          o.track = false;
          o.track_cov = false;
          return train::train_regressor(specs, train, o);
        };
        const auto members = baselines::deep_ensemble_train(
            b.m, train_one, derive_seed(cfg.seed, 0xdeef), workers);
        bmix = members_mixture(members, test_features);
        break;
      }
      case baselines::Method::mc_dropout: {
        auto dspecs = baselines::with_dropout(specs, b.dropout_rate);
        auto o = topts;
        o.seed = derive_seed(cfg.seed, 0xd0);
        o.track = false;
        o.track_cov = false;
        const auto dtr = train::train_regressor(dspecs, train, o);
        bmix = baselines::mc_dropout_predict_regression(dtr.net, dtr.params, test_features,
                                                        b.m, derive_seed(cfg.seed, 0xd1));
        break;
      }
      case baselines::Method::gauss_perturb: {
        const auto members = baselines::gauss_perturb_ensemble(
            tr.net, tr.params, b.m, b.perturb_scale, derive_seed(cfg.seed, 0x9a), {});
        bmix = sampler::predict_regression(tr.net, members, test_features);
        break;
      }
      case baselines::Method::mcp:
        throw ConfigError("mcp is a classification baseline");
    }
    denormalize_mixture(bmix, norm);
    brow.values["train_seconds"] = timer.stop();
    auto bdump = dump_from_mixture(bmix, gp.test.targets);
    const auto bpath = (fs::path(out_dir) / (brow.name + ".dump.csv")).string();
    metrics::write_dump(bdump, bpath);
    brow.dump_path = bpath;
    const auto bsc = score_regression(bdump);
    brow.values["rmse"] = bsc.rmse;
    brow.values["nll"] = bsc.nll;
    report.rows.push_back(brow);
  }
  return report;
}

// ---------------------------------------------------------------------------
// uci_regression
// ---------------------------------------------------------------------------

struct FoldScores {
  std::map<std::string, RegressionScore> by_method;
  std::map<std::string, metrics::PredictionDump> dumps;
  double tradi_train_s = 0.0;
};

FoldScores run_uci_fold(const ExperimentConfig& cfg, const data::Dataset& ds,
                        const std::vector<int>& train_idx, const std::vector<int>& test_idx,
                        int fold) {
  FoldScores out;
  const auto norm = data::fit_normalization(ds, train_idx);

  data::Dataset train = data::subset(ds, train_idx);
  data::Dataset test = data::subset(ds, test_idx);
  train.features = data::normalize_features(train.features, norm);
  train.targets = data::normalize_targets(train.targets, norm);
  test.features = data::normalize_features(test.features, norm);
  // targets stay in original units; predictions are de-normalized

  const auto specs = build_chain(cfg.arch, static_cast<int>(ds.features.cols()), 1);
  train::TrainOptions topts;
  topts.lr = cfg.optim.lr;
  topts.epochs = cfg.optim.epochs;
  topts.batch_size = cfg.optim.batch_size;
  topts.phase1_epochs = cfg.optim.phase1_epochs;
  topts.phase2_lr = cfg.optim.phase2_lr;
  topts.bn_momentum = cfg.optim.bn_momentum;
  topts.seed = derive_seed(cfg.seed, 0xf0 + static_cast<std::uint64_t>(fold));
  topts.hyper = cfg.tracking.hyper;
  topts.thin = cfg.tracking.thin;
  topts.track = true;
  topts.track_cov = cfg.tracking.track_cov || cfg.sampling.mode == sampler::SampleMode::full_cov;
  topts.cov_limit = cfg.tracking.cov_limit;

  const auto tr = train::train_regressor(specs, train, topts);
  out.tradi_train_s = tr.wall_seconds;

  sampler::EnsembleConfig ecfg;
  ecfg.mode = cfg.sampling.mode;
  ecfg.n_models = cfg.sampling.n_models;
  ecfg.rff_features = cfg.sampling.rff_features;
  ecfg.rff_sigma = cfg.sampling.rff_sigma;
  ecfg.per_layer_draw = cfg.sampling.per_layer_draw;
  ecfg.seed = derive_seed(cfg.seed, 0x5a00 + static_cast<std::uint64_t>(fold));
  const auto calib =
      calibration_batches(train.features, cfg.sampling.calibration_rows, cfg.optim.batch_size);
  const auto ensemble =
      sampler::build_ensemble(ecfg, tr.net, tr.params, tr.state, tr.cov ? &*tr.cov : nullptr,
                              tr.net.has_batchnorm() ? calib : std::vector<Matrix>{});
  auto mix = sampler::predict_regression(tr.net, ensemble, test.features);
  denormalize_mixture(mix, norm);
  auto dump = dump_from_mixture(mix, test.targets);
  out.by_method["tradi"] = score_regression(dump);
  out.dumps["tradi"] = std::move(dump);

  for (const auto& b : cfg.baseline_list) {
    sampler::RegressionMixture bmix;
    switch (b.method) {
      case baselines::Method::deep_ensemble: {
        auto train_one = [&](std::uint64_t seed) {
          auto o = topts;
          o.seed = seed;
          o.track = false;
          o.track_cov = false;
          return train::train_regressor(specs, train, o);
        };
        const auto members = baselines::deep_ensemble_train(
            b.m, train_one, derive_seed(cfg.seed, 0xde00 + static_cast<std::uint64_t>(fold)), 1);
        bmix = members_mixture(members, test.features);
        break;
      }
      case baselines::Method::mc_dropout: {
        if (tr.net.has_dropout()) {
          bmix = baselines::mc_dropout_predict_regression(
              tr.net, tr.params, test.features, b.m,
              derive_seed(cfg.seed, 0xd100 + static_cast<std::uint64_t>(fold)));
        } else {
          auto dspecs = baselines::with_dropout(specs, b.dropout_rate);
          auto o = topts;
          o.seed = derive_seed(cfg.seed, 0xd000 + static_cast<std::uint64_t>(fold));
          o.track = false;
          o.track_cov = false;
          const auto dtr = train::train_regressor(dspecs, train, o);
          bmix = baselines::mc_dropout_predict_regression(
              dtr.net, dtr.params, test.features, b.m,
              derive_seed(cfg.seed, 0xd100 + static_cast<std::uint64_t>(fold)));
        }
        break;
      }
      case baselines::Method::gauss_perturb: {
        const auto members = baselines::gauss_perturb_ensemble(
            tr.net, tr.params, b.m, b.perturb_scale,
            derive_seed(cfg.seed, 0x9a00 + static_cast<std::uint64_t>(fold)), {});
        bmix = sampler::predict_regression(tr.net, members, test.features);
        break;
      }
      case baselines::Method::mcp:
        throw ConfigError("mcp is a classification baseline");
    }
    denormalize_mixture(bmix, norm);
    auto bdump = dump_from_mixture(bmix, test.targets);
    out.by_method[method_label(b)] = score_regression(bdump);
    out.dumps[method_label(b)] = std::move(bdump);
  }
  return out;
}

RunReport run_uci(const ExperimentConfig& cfg, const std::string& out_dir, int workers) {
  RunReport report;
  const auto ds = data::uci_load(cfg.dataset.csv, cfg.dataset.target_column);
  const auto plan = data::make_folds(ds, cfg.dataset.folds, derive_seed(cfg.seed, 0xf01d));

  std::vector<FoldScores> folds(static_cast<std::size_t>(cfg.dataset.folds));
  PhaseTimer total;
  parallel_for(cfg.dataset.folds, workers, [&](int f) {
    folds[static_cast<std::size_t>(f)] =
        run_uci_fold(cfg, ds, plan.train_idx[static_cast<std::size_t>(f)],
                     plan.test_idx[static_cast<std::size_t>(f)], f);
  });
  report.timings["total_wall_s"] = total.stop();

  std::vector<std::string> methods = {"tradi"};
  for (const auto& b : cfg.baseline_list) methods.push_back(method_label(b));

  double tradi_train = 0.0;
  for (const auto& f : folds) tradi_train += f.tradi_train_s;

  for (const auto& name : methods) {
    std::vector<double> rmses, nlls;
    metrics::PredictionDump merged;
    merged.task = metrics::TaskKind::regression;
    for (std::size_t f = 0; f < folds.size(); ++f) {
      const auto& sc = folds[f].by_method.at(name);
      rmses.push_back(sc.rmse);
      nlls.push_back(sc.nll);
      for (auto r : folds[f].dumps.at(name).reg) {
        r.id += static_cast<std::int64_t>(f) * 1000000;
        merged.reg.push_back(std::move(r));
      }
    }
    auto mean = [](const std::vector<double>& v) {
      double s = 0.0;
      for (double x : v) s += x;
      return s / static_cast<double>(v.size());
    };
    auto stdev = [&](const std::vector<double>& v, double m) {
      double s = 0.0;
      for (double x : v) s += (x - m) * (x - m);
      return v.size() > 1 ? std::sqrt(s / static_cast<double>(v.size() - 1)) : 0.0;
    };
    MethodRow row;
    row.name = name;
    const double rm = mean(rmses), nm = mean(nlls);
    row.values["rmse_mean"] = rm;
    row.values["rmse_std"] = stdev(rmses, rm);
    row.values["nll_mean"] = nm;
    row.values["nll_std"] = stdev(nlls, nm);
    if (name == "tradi") row.values["train_seconds"] = tradi_train;
    const auto path = (fs::path(out_dir) / (name + ".dump.csv")).string();
    metrics::write_dump(merged, path);
    row.dump_path = path;
    report.rows.push_back(row);
  }
  return report;
}

// ---------------------------------------------------------------------------
// mnist_classification / mnist_ood
// ---------------------------------------------------------------------------

MethodRow classification_row(const std::string& name, const metrics::PredictionDump& dump,
                             int ece_bins, bool ood_metrics) {
  MethodRow row;
  row.name = name;
  row.values["accuracy"] = metrics::accuracy(dump);
  row.values["ece"] = metrics::ece(dump, ece_bins);
  bool has_p_true = false;
  for (const auto& r : dump.cls)
    if (r.in_dist && std::isfinite(r.p_true)) {
      has_p_true = true;
      break;
    }
  if (has_p_true) row.values["nll"] = metrics::classification_nll(dump);
  if (ood_metrics) {
    const auto roc = metrics::roc_metrics(dump);
    row.values["auc"] = roc.auc;
    row.values["aupr"] = roc.aupr;
    row.values["fpr_at_95_tpr"] = roc.fpr_at_95_tpr;
  }
  return row;
}

RunReport run_mnist(const ExperimentConfig& cfg, const std::string& out_dir, int workers,
                    bool ood_task) {
  RunReport report;
  const auto train_set = data::mnist_load(cfg.dataset.train_images, cfg.dataset.train_labels);
  const auto test_in = data::mnist_load(cfg.dataset.test_images, cfg.dataset.test_labels);

  data::Dataset eval_set = test_in;
  if (ood_task) {
    data::Dataset ood;
    if (!cfg.dataset.ood_folder.empty()) {
      auto loaded = data::ood_folder_load(cfg.dataset.ood_folder);
      ood = std::move(loaded.data);
      report.timings["ood_skipped_files"] = loaded.skipped;
    } else {
      ood = data::as_ood(data::mnist_load(cfg.dataset.ood_images, cfg.dataset.ood_labels));
    }
    if (ood.rows() == 0) throw IoError("out-of-distribution source is empty");
    eval_set = data::concat(test_in, ood);
  }

  const int n_classes = 1 + *std::max_element(train_set.labels.begin(), train_set.labels.end());
  const auto specs =
      build_chain(cfg.arch, static_cast<int>(train_set.features.cols()), n_classes);

  train::TrainOptions topts;
  topts.lr = cfg.optim.lr;
  topts.epochs = cfg.optim.epochs;
  topts.batch_size = cfg.optim.batch_size;
  topts.bn_momentum = cfg.optim.bn_momentum;
  topts.seed = derive_seed(cfg.seed, 0x3217);
  topts.hyper = cfg.tracking.hyper;
  topts.thin = cfg.tracking.thin;
  topts.track = true;
  topts.track_cov = cfg.tracking.track_cov || cfg.sampling.mode == sampler::SampleMode::full_cov;
  topts.cov_limit = cfg.tracking.cov_limit;

  const auto tr = train::train_classifier(specs, train_set, topts);
  report.timings["tradi_train_wall_s"] = tr.wall_seconds;
  report.timings["tradi_train_cpu_s"] = tr.cpu_seconds;

  const auto calib =
      calibration_batches(train_set.features, cfg.sampling.calibration_rows, cfg.optim.batch_size);

  sampler::EnsembleConfig ecfg;
  ecfg.mode = cfg.sampling.mode;
  ecfg.n_models = cfg.sampling.n_models;
  ecfg.rff_features = cfg.sampling.rff_features;
  ecfg.rff_sigma = cfg.sampling.rff_sigma;
  ecfg.per_layer_draw = cfg.sampling.per_layer_draw;
  ecfg.seed = derive_seed(cfg.seed, 0x5a3e);
  const auto ensemble =
      sampler::build_ensemble(ecfg, tr.net, tr.params, tr.state, tr.cov ? &*tr.cov : nullptr,
                              tr.net.has_batchnorm() ? calib : std::vector<Matrix>{});

  auto emit = [&](const std::string& name, const Matrix& probs, double train_s) {
    auto dump = dump_from_probs(probs, eval_set.labels, eval_set.in_dist);
    const auto path = (fs::path(out_dir) / (name + ".dump.csv")).string();
    metrics::write_dump(dump, path);
    write_probs_sidecar(dump, (fs::path(out_dir) / (name + ".probs.csv")).string());
    auto row = classification_row(name, dump, cfg.ece_bins, ood_task);
    row.dump_path = path;
    row.values["train_seconds"] = train_s;
    report.rows.push_back(row);
  };

  emit("tradi", ensemble_probs(tr.net, ensemble, eval_set.features), tr.wall_seconds);

  for (const auto& b : cfg.baseline_list) {
    switch (b.method) {
      case baselines::Method::mcp: {
        const auto out = nn::forward(tr.net, tr.params, eval_set.features, nn::ForwardMode::eval, 0);
        emit("mcp", losses::softmax(out.output), tr.wall_seconds);
        break;
      }
      case baselines::Method::gauss_perturb: {
        const auto members = baselines::gauss_perturb_ensemble(
            tr.net, tr.params, b.m, b.perturb_scale, derive_seed(cfg.seed, 0x9a), calib);
        emit("gauss_perturb", ensemble_probs(tr.net, members, eval_set.features), tr.wall_seconds);
        break;
      }
      case baselines::Method::mc_dropout: {
        if (tr.net.has_dropout()) {
          const Matrix probs = baselines::mc_dropout_predict_classification(
              tr.net, tr.params, eval_set.features, b.m, derive_seed(cfg.seed, 0xd1));
          emit("mc_dropout", probs, tr.wall_seconds);
        } else {
          auto dspecs = baselines::with_dropout(specs, b.dropout_rate);
          auto o = topts;
          o.seed = derive_seed(cfg.seed, 0xd0);
          o.track = false;
          const auto dtr = train::train_classifier(dspecs, train_set, o);
          const Matrix probs = baselines::mc_dropout_predict_classification(
              dtr.net, dtr.params, eval_set.features, b.m, derive_seed(cfg.seed, 0xd1));
          emit("mc_dropout", probs, dtr.wall_seconds);
        }
        break;
      }
      case baselines::Method::deep_ensemble: {
        auto train_one = [&](std::uint64_t seed) {
          auto o = topts;
          o.seed = seed;
          o.track = false;
          return train::train_classifier(specs, train_set, o);
        };
        PhaseTimer timer;
        const auto members =
            baselines::deep_ensemble_train(b.m, train_one, derive_seed(cfg.seed, 0xdeef), workers);
        emit("deep_ensemble", members_probs(members, eval_set.features), timer.stop());
        break;
      }
    }
  }

  // curve files for every method
  std::vector<std::string> dumps;
  for (const auto& row : report.rows) dumps.push_back(row.dump_path);
  const auto curves = emit_curves(
      dumps,
      {CurveKind::calibration, CurveKind::accuracy_vs_confidence, CurveKind::precision_calibration},
      out_dir, cfg.calibration_bins,
      cfg.equal_count_bins ? metrics::BinMode::equal_count : metrics::BinMode::equal_width);
  report.curve_files.insert(report.curve_files.end(), curves.begin(), curves.end());
  return report;
}

}  // namespace

RunReport run_experiment(const ExperimentConfig& cfg, const std::string& out_dir, int workers) {
  fs::create_directories(out_dir);
  PhaseTimer total;
  const std::clock_t cpu_start = std::clock();

  RunReport report;
  switch (cfg.task) {
    case Task::toy_regression: report = run_toy(cfg, out_dir, workers); break;
    case Task::uci_regression: report = run_uci(cfg, out_dir, workers); break;
    case Task::mnist_classification: report = run_mnist(cfg, out_dir, workers, false); break;
    case Task::mnist_ood: report = run_mnist(cfg, out_dir, workers, true); break;
  }

  report.resolved_config = resolved_config_json(cfg);
  report.timings["total_wall_s"] = total.stop();
  report.timings["total_cpu_s"] =
      static_cast<double>(std::clock() - cpu_start) / CLOCKS_PER_SEC;
  report.run_id = [&] {
    std::uint64_t h = splitmix64(cfg.seed);
    for (char c : report.resolved_config) h = splitmix64(h ^ static_cast<std::uint64_t>(c));
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
  }();

  write_report(report, out_dir);
  return report;
}

void write_report(const RunReport& report, const std::string& out_dir) {
  fs::create_directories(out_dir);

  json j;
  j["run_id"] = report.run_id;
  j["config"] = json::parse(report.resolved_config.empty() ? "{}" : report.resolved_config);
  j["timings"] = report.timings;
  json rows = json::array();
  for (const auto& r : report.rows) {
    json row;
    row["method"] = r.name;
    row["dump"] = r.dump_path;
    for (const auto& [k, v] : r.values) row[k] = v;
    rows.push_back(row);
  }
  j["methods"] = rows;
  j["curves"] = report.curve_files;

  std::ofstream out(fs::path(out_dir) / "report.json");
  if (!out) throw IoError("cannot write report.json");
  out << j.dump(2) << '\n';

  // one CSV row per method, with the union of metric columns
  std::set<std::string> keys;
  for (const auto& r : report.rows)
    for (const auto& [k, v] : r.values) keys.insert(k);
  std::ofstream csv(fs::path(out_dir) / "table.csv");
  if (!csv) throw IoError("cannot write table.csv");
  csv << "method";
  for (const auto& k : keys) csv << ',' << k;
  csv << '\n';
  for (const auto& r : report.rows) {
    csv << r.name;
    for (const auto& k : keys) {
      csv << ',';
      const auto it = r.values.find(k);
      if (it != r.values.end()) csv << it->second;
    }
    csv << '\n';
  }
}

std::vector<std::string> emit_curves(const std::vector<std::string>& dump_paths,
                                     const std::vector<CurveKind>& kinds,
                                     const std::string& out_dir, int bins,
                                     metrics::BinMode mode) {
  fs::create_directories(out_dir);
  std::vector<std::string> written;
  for (const auto& path : dump_paths) {
    if (!fs::exists(path)) throw IoError("dump not found: " + path);
    const auto dump = metrics::read_dump(path);
    std::string stem = fs::path(path).stem().string();
    if (stem.ends_with(".dump")) stem = stem.substr(0, stem.size() - 5);
    for (const auto kind : kinds) {
      metrics::CurveData curve;
      std::string suffix;
      switch (kind) {
        case CurveKind::calibration:
          curve = metrics::calibration_curve(dump, bins, mode);
          suffix = "calib";
          break;
        case CurveKind::accuracy_vs_confidence: {
          std::vector<double> grid;
          for (int i = 0; i <= 20; ++i) grid.push_back(i / 20.0);
          curve = metrics::accuracy_vs_confidence(dump, grid);
          suffix = "avc";
          break;
        }
        case CurveKind::precision_calibration:
          curve = metrics::precision_calibration_curve(dump, bins, mode);
          suffix = "prec";
          break;
      }
      const auto out_path = (fs::path(out_dir) / (stem + "." + suffix + ".curve.csv")).string();
      metrics::write_curve(curve, out_path);
      written.push_back(out_path);
    }
  }
  return written;
}

}  // namespace tradi::runner
