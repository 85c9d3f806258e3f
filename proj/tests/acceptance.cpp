// Acceptance suite. Each criterion prints exactly one PASS/FAIL/SKIP line and
// the binary exits 0 (all pass), 1 (any fail), or 77 (nothing failed but at
// least one criterion skipped for lack of its dataset).
//
// Dataset layout under --data-dir (or $TRADI_DATA_DIR):
//   uci/boston.csv  uci/concrete.csv  uci/yacht.csv   (numeric CSV, target last)
//   mnist/train-images-idx3-ubyte  mnist/train-labels-idx1-ubyte
//   mnist/t10k-images-idx3-ubyte   mnist/t10k-labels-idx1-ubyte
//   notmnist/   (28x28 grayscale PGM files)           - preferred OOD source
//   fashion/t10k-images-idx3-ubyte fashion/t10k-labels-idx1-ubyte  - fallback

#include "tradi/baselines.hpp"
#include "tradi/data_io.hpp"
#include "tradi/metrics.hpp"
#include "tradi/runner.hpp"
#include "tradi/train.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using namespace tradi;

namespace {

enum class Outcome { pass, fail, skip };

struct CriterionResult {
  Outcome outcome = Outcome::skip;
  std::string detail;
};

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

std::string data_dir;

std::optional<std::string> find_data(const std::string& rel) {
  if (data_dir.empty()) return std::nullopt;
  const auto p = fs::path(data_dir) / rel;
  if (fs::exists(p)) return p.string();
  return std::nullopt;
}

// --- criterion 1: toy GP regression, extrapolation variance ----------------

CriterionResult criterion_toy() {
  Timer timer;
  // var_state_noise compensates the eta^2 scaling of the tracked variances:
  // the plain-SGD learning rate that is stable on this net (0.01) is an
  // order below the reference training rate, so the filter's state noise is
  // lowered to land the tracked weight spread at the same relative scale.
  const auto cfg = runner::parse_config(R"({
    "task": "toy_regression",
    "seed": 7,
    "architecture": {"hidden_units": 200, "hidden_layers": 1},
    "optimizer": {"lr": 0.01, "epochs": 3000, "batch_size": 128, "phase1_epochs": 1500},
    "tracker": {"var_state_noise": 1e-7},
    "sampler": {"mode": "rff", "n_models": 20, "rff_features": 10, "rff_sigma": 1.0},
    "data": {"n_train": 20, "n_test": 200}
  })");
  const auto out = fs::temp_directory_path() / "tradi_accept_toy";
  const auto report = runner::run_experiment(cfg, out.string(), 1);
  const double inside = report.rows[0].values.at("std_inside");
  const double outside = report.rows[0].values.at("std_outside");
  const double ratio = report.rows[0].values.at("std_ratio");
  const double wall = timer.seconds();

  CriterionResult res;
  res.outcome = (ratio >= 2.0 && wall < 60.0) ? Outcome::pass : Outcome::fail;
  std::ostringstream os;
  os << "predictive std outside/inside = " << outside << "/" << inside << " = " << ratio
     << " (need >= 2), " << wall << "s (need < 60)";
  res.detail = os.str();
  return res;
}

// --- criterion 2: UCI regression benchmarks --------------------------------

struct UciSpec {
  const char* file;
  double rmse_limit;
  double nll_limit;  // <= 0 means no NLL gate
  double dropout_rate;
};

CriterionResult criterion_uci() {
  // paper mean + one reported std for the tracked-filter rows of the
  // regression benchmark table
  const UciSpec specs[] = {
      {"uci/boston.csv", 3.6, 2.6, 0.005},
      {"uci/concrete.csv", 5.65, 0.0, 0.1},
      {"uci/yacht.csv", 1.30, 0.0, 0.001},
  };

  Timer timer;
  bool any_missing = false;
  bool all_pass = true;
  std::ostringstream os;
  for (const auto& spec : specs) {
    const auto path = find_data(spec.file);
    if (!path) {
      any_missing = true;
      os << spec.file << ": missing; ";
      continue;
    }
    std::ostringstream cfg_text;
    cfg_text << R"({
      "task": "uci_regression",
      "seed": 13,
      "architecture": {"hidden_units": 50, "hidden_layers": 1, "dropout_rate": )"
             << spec.dropout_rate << R"(},
      "optimizer": {"lr": 0.1, "epochs": 40, "batch_size": 32, "phase1_epochs": 20,
                    "phase2_lr": 0.01},
      "sampler": {"mode": "rff", "n_models": 20},
      "data": {"csv": ")" << *path << R"(", "folds": 20}
    })";
    const auto cfg = runner::parse_config(cfg_text.str());
    const auto out = fs::temp_directory_path() / "tradi_accept_uci";
    const auto report = runner::run_experiment(cfg, out.string(), 2);
    const double rmse = report.rows[0].values.at("rmse_mean");
    const double nll = report.rows[0].values.at("nll_mean");
    bool ok = rmse <= spec.rmse_limit;
    if (spec.nll_limit > 0.0) ok = ok && nll <= spec.nll_limit;
    all_pass = all_pass && ok;
    os << spec.file << ": rmse " << rmse << " (limit " << spec.rmse_limit << ")";
    if (spec.nll_limit > 0.0) os << ", nll " << nll << " (limit " << spec.nll_limit << ")";
    os << (ok ? " ok; " : " FAIL; ");
  }
  os << timer.seconds() << "s (need < 600)";

  CriterionResult res;
  if (any_missing) {
    res.outcome = Outcome::skip;
    res.detail = "dataset(s) missing under --data-dir/TRADI_DATA_DIR: " + os.str();
  } else {
    res.outcome = (all_pass && timer.seconds() < 600.0) ? Outcome::pass : Outcome::fail;
    res.detail = os.str();
  }
  return res;
}

// --- criterion 3: MNIST classification -------------------------------------

std::optional<std::string> mnist_config_json(bool ood, std::string* missing) {
  const char* names[] = {"mnist/train-images-idx3-ubyte", "mnist/train-labels-idx1-ubyte",
                         "mnist/t10k-images-idx3-ubyte", "mnist/t10k-labels-idx1-ubyte"};
  std::string paths[4];
  for (int i = 0; i < 4; ++i) {
    const auto p = find_data(names[i]);
    if (!p) {
      *missing = names[i];
      return std::nullopt;
    }
    paths[i] = *p;
  }

  std::ostringstream os;
  os << R"({
    "task": ")" << (ood ? "mnist_ood" : "mnist_classification") << R"(",
    "seed": 3,
    "architecture": {"hidden_units": 200, "hidden_layers": 3, "batchnorm": true},
    "optimizer": {"lr": 0.01, "epochs": 20, "batch_size": 128},
    "sampler": {"mode": "rff", "n_models": 20, "calibration_rows": 2048},
    "data": {
      "train_images": ")" << paths[0] << R"(",
      "train_labels": ")" << paths[1] << R"(",
      "test_images": ")" << paths[2] << R"(",
      "test_labels": ")" << paths[3] << R"(")";
  return os.str();
}

CriterionResult criterion_mnist() {
  std::string missing;
  auto base = mnist_config_json(false, &missing);
  if (!base) {
    return {Outcome::skip, "dataset missing under --data-dir/TRADI_DATA_DIR: " + missing};
  }
  Timer timer;
  const auto cfg = runner::parse_config(*base + "}}");
  const auto out = fs::temp_directory_path() / "tradi_accept_mnist";
  const auto report = runner::run_experiment(cfg, out.string(), 2);
  const double acc = report.rows[0].values.at("accuracy");
  const double nll = report.rows[0].values.at("nll");
  const double wall = timer.seconds();

  CriterionResult res;
  res.outcome =
      (acc >= 0.98 && nll <= 0.08 && wall < 1800.0) ? Outcome::pass : Outcome::fail;
  std::ostringstream os;
  os << "accuracy " << 100.0 * acc << "% (need >= 98), nll " << nll << " (need <= 0.08), "
     << wall << "s (need < 1800)";
  res.detail = os.str();
  return res;
}

// --- criterion 4: MNIST out-of-distribution --------------------------------

CriterionResult criterion_ood() {
  std::string missing;
  auto base = mnist_config_json(true, &missing);
  if (!base) {
    return {Outcome::skip, "dataset missing under --data-dir/TRADI_DATA_DIR: " + missing};
  }

  const auto notmnist = find_data("notmnist");
  const auto fashion_img = find_data("fashion/t10k-images-idx3-ubyte");
  const auto fashion_lab = find_data("fashion/t10k-labels-idx1-ubyte");
  const bool fallback = !notmnist;
  std::ostringstream cfg_text;
  cfg_text << *base;
  if (notmnist) {
    cfg_text << R"(, "ood_folder": ")" << *notmnist << R"(", "ood_name": "notmnist"})";
  } else if (fashion_img && fashion_lab) {
    cfg_text << R"(, "ood_images": ")" << *fashion_img << R"(", "ood_labels": ")" << *fashion_lab
             << R"(", "ood_name": "fashion"})";
  } else {
    return {Outcome::skip,
            "no OOD source: need notmnist/ (PGM folder) or fashion/t10k IDX pair"};
  }
  cfg_text << R"(, "baselines": [{"method": "gauss_perturb", "m": 20, "perturb_scale": 1.0},
                                 {"method": "mc_dropout", "m": 20, "dropout_rate": 0.1},
                                 {"method": "mcp"}]})";

  const std::string text = cfg_text.str();
  Timer timer;
  const auto cfg = runner::parse_config(text);
  const auto out = fs::temp_directory_path() / "tradi_accept_ood";
  const auto report = runner::run_experiment(cfg, out.string(), 2);

  double tradi_auc = 0, tradi_fpr = 1, tradi_ece = 1, gauss_ece = -1, drop_ece = -1, mcp_auc = 0;
  for (const auto& row : report.rows) {
    if (row.name == "tradi") {
      tradi_auc = row.values.at("auc");
      tradi_fpr = row.values.at("fpr_at_95_tpr");
      tradi_ece = row.values.at("ece");
    } else if (row.name == "gauss_perturb") {
      gauss_ece = row.values.at("ece");
    } else if (row.name == "mc_dropout") {
      drop_ece = row.values.at("ece");
    } else if (row.name == "mcp") {
      mcp_auc = row.values.at("auc");
    }
  }

  const bool ordering = tradi_ece < gauss_ece && tradi_ece < drop_ece;
  bool ok = ordering;
  std::ostringstream os;
  if (!fallback) {
    ok = ok && tradi_auc >= 0.90 && tradi_fpr <= 0.25;
    os << "auc " << 100.0 * tradi_auc << " (need >= 90), fpr@95 " << 100.0 * tradi_fpr
       << " (need <= 25), ";
  } else {
    os << "[fashion fallback: ordering gate only] auc " << 100.0 * tradi_auc << ", fpr@95 "
       << 100.0 * tradi_fpr << ", ";
  }
  os << "ece tracked/gauss/dropout = " << tradi_ece << "/" << gauss_ece << "/" << drop_ece
     << " (need tracked strictly lowest), mcp auc " << 100.0 * mcp_auc << ", "
     << timer.seconds() << "s";

  CriterionResult res;
  res.outcome = ok ? Outcome::pass : Outcome::fail;
  res.detail = os.str();
  return res;
}

// --- criterion 5: training-cost ordering ------------------------------------

CriterionResult criterion_efficiency() {
  Timer timer;
  // synthetic workload sized so the single training takes whole seconds
  data::Dataset ds;
  ds.task = metrics::TaskKind::classification;
  const int n = 8192, d = 256, classes = 10;
  ds.features = Matrix(n, d);
  ds.labels.resize(n);
  auto rng = make_rng(99);
  std::normal_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> cls(0, classes - 1);
  for (int i = 0; i < n; ++i) {
    const int c = cls(rng);
    ds.labels[static_cast<std::size_t>(i)] = c;
    for (int j = 0; j < d; ++j) ds.features(i, j) = (j % classes == c ? 1.0 : 0.0) + 0.3 * unit(rng);
  }
  const std::vector<nn::LayerSpec> specs = {nn::dense(d, 128), nn::relu(128),
                                            nn::dense(128, 128), nn::relu(128),
                                            nn::dense(128, classes)};
  train::TrainOptions opts;
  opts.lr = 0.05;
  opts.epochs = 6;
  opts.batch_size = 128;
  opts.seed = 1;
  opts.track = false;

  const auto plain = train::train_classifier(specs, ds, opts);

  auto tracked_opts = opts;
  tracked_opts.track = true;
  const auto tracked = train::train_classifier(specs, ds, tracked_opts);

  const int m = 20;
  double ensemble_wall = 0.0;
  auto train_one = [&](std::uint64_t seed) {
    auto o = opts;
    o.seed = seed;
    return train::train_classifier(specs, ds, o);
  };
  Timer de_timer;
  const auto members = baselines::deep_ensemble_train(m, train_one, 5, 1);
  ensemble_wall = de_timer.seconds();
  double member_sum = 0.0;
  for (const auto& mem : members) member_sum += mem.wall_seconds;

  const double tracked_ratio = tracked.wall_seconds / plain.wall_seconds;
  const double ensemble_ratio = ensemble_wall / plain.wall_seconds;
  const double scaling_error = std::abs(member_sum / (m * plain.wall_seconds) - 1.0);

  CriterionResult res;
  const bool ok = tracked_ratio <= 1.5 && ensemble_ratio >= 10.0 && scaling_error <= 0.2;
  res.outcome = ok ? Outcome::pass : Outcome::fail;
  std::ostringstream os;
  os << "single " << plain.wall_seconds << "s, tracked " << tracked.wall_seconds << "s ("
     << tracked_ratio << "x, need <= 1.5), ensemble of " << m << " " << ensemble_wall << "s ("
     << ensemble_ratio << "x, need >= 10); member-sum vs m*single off by "
     << 100.0 * scaling_error << "% (need <= 20%), total " << timer.seconds() << "s";
  res.detail = os.str();
  return res;
}

// --- criterion 6: oracle battery --------------------------------------------

CriterionResult criterion_oracles() {
  Timer timer;
  const auto report = runner::verify_suite(false);
  CriterionResult res;
  res.outcome = report.all_pass() && timer.seconds() < 300.0 ? Outcome::pass : Outcome::fail;
  std::ostringstream os;
  for (const auto& c : report.checks) os << c.name << (c.pass ? " ok; " : " FAIL; ");
  os << timer.seconds() << "s (need < 300)";
  res.detail = os.str();
  return res;
}

const char* criterion_names[] = {
    "toy GP extrapolation variance",   "UCI regression benchmarks",
    "MNIST classification",            "MNIST out-of-distribution",
    "training-cost ordering",          "oracle battery",
};

CriterionResult run_criterion(int index) {
  try {
    switch (index) {
      case 1: return criterion_toy();
      case 2: return criterion_uci();
      case 3: return criterion_mnist();
      case 4: return criterion_ood();
      case 5: return criterion_efficiency();
      case 6: return criterion_oracles();
    }
    return {Outcome::fail, "unknown criterion"};
  } catch (const std::exception& e) {
    return {Outcome::fail, std::string("threw: ") + e.what()};
  }
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  if (const char* env = std::getenv("TRADI_DATA_DIR")) data_dir = env;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) only = std::atoi(argv[++i]);
    else if (std::strcmp(argv[i], "--data-dir") == 0 && i + 1 < argc) data_dir = argv[++i];
  }

  bool any_fail = false, any_skip = false;
  for (int c = 1; c <= 6; ++c) {
    if (only != 0 && c != only) continue;
    const auto res = run_criterion(c);
    const char* label = res.outcome == Outcome::pass ? "PASS"
                        : res.outcome == Outcome::fail ? "FAIL"
                                                       : "SKIP";
    std::printf("criterion %d (%s): %s - %s\n", c, criterion_names[c - 1], label,
                res.detail.c_str());
    any_fail = any_fail || res.outcome == Outcome::fail;
    any_skip = any_skip || res.outcome == Outcome::skip;
  }
  if (any_fail) return 1;
  if (any_skip) return 77;
  return 0;
}
