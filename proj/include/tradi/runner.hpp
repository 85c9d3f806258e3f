#pragma once

#include "tradi/baselines.hpp"
#include "tradi/common.hpp"
#include "tradi/data_io.hpp"
#include "tradi/sampler.hpp"
#include "tradi/train.hpp"

#include <map>
#include <string>
#include <vector>

namespace tradi::runner {

enum class Task { toy_regression, uci_regression, mnist_classification, mnist_ood };

struct ArchitectureConfig {
  bool explicit_layers = false;
  std::vector<nn::LayerSpec> layers;  // used when explicit_layers
  int hidden_units = 50;
  int hidden_layers = 1;
  bool use_batchnorm = false;
  double dropout_rate = 0.0;
};

struct OptimizerConfig {
  double lr = 0.1;
  int batch_size = 128;
  int epochs = 40;
  int phase1_epochs = -1;   // regression MSE phase; -1 = epochs/2
  double phase2_lr = -1.0;  // NLL fine-tune rate; <= 0 reuses lr
  double bn_momentum = 0.1;
};

struct TrackerConfig {
  tracker::TrackerHyper hyper;
  int thin = 1;
  bool track_cov = false;
  int cov_limit = 100;
};

struct SamplerConfig {
  sampler::SampleMode mode = sampler::SampleMode::rff;
  int n_models = 20;
  int rff_features = 10;
  double rff_sigma = 1.0;
  bool per_layer_draw = false;
  int calibration_rows = 1024;
};

struct DataConfig {
  // toy_regression
  int n_train = 20;
  int n_test = 200;
  // uci_regression
  std::string csv;
  int target_column = -1;
  int folds = 20;
  // mnist tasks (IDX files)
  std::string train_images, train_labels, test_images, test_labels;
  // mnist_ood: either a grayscale image folder or an IDX pair
  std::string ood_folder;
  std::string ood_images, ood_labels;
  std::string ood_name = "ood";
};

struct ExperimentConfig {
  Task task = Task::toy_regression;
  ArchitectureConfig arch;
  OptimizerConfig optim;
  TrackerConfig tracking;
  SamplerConfig sampling;
  DataConfig dataset;
  std::vector<baselines::BaselineConfig> baseline_list;
  std::uint64_t seed = 1;
  int ece_bins = 15;
  int calibration_bins = 10;
  bool equal_count_bins = false;  // equal-count slices for the binned curves
  std::string output_dir = "out";
};

// Parses and validates; dataset paths resolve against TRADI_DATA_DIR when
// relative. Throws ConfigError on any invalid field or missing dataset path.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(const std::string& json_text, const std::string& origin = "<string>");
std::string resolved_config_json(const ExperimentConfig& cfg);

struct MethodRow {
  std::string name;
  std::map<std::string, double> values;
  std::string dump_path;
};

struct RunReport {
  std::string run_id;
  std::vector<MethodRow> rows;
  std::vector<std::string> curve_files;
  std::map<std::string, double> timings;  // seconds, wall and cpu per phase
  std::string resolved_config;
};

RunReport run_experiment(const ExperimentConfig& cfg, const std::string& out_dir, int workers);

// report.json and table.csv under out_dir.
void write_report(const RunReport& report, const std::string& out_dir);

enum class CurveKind { calibration, accuracy_vs_confidence, precision_calibration };
CurveKind curve_kind_from_string(const std::string& name);

// One curve CSV per (dump, kind), written next to out_dir; returns paths.
std::vector<std::string> emit_curves(const std::vector<std::string>& dump_paths,
                                     const std::vector<CurveKind>& kinds,
                                     const std::string& out_dir, int bins = 10,
                                     metrics::BinMode mode = metrics::BinMode::equal_width);

struct VerifyCheck {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct VerifyReport {
  std::vector<VerifyCheck> checks;
  bool all_pass() const {
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }
};

// The oracle battery: gradient finite differences, the scalar Kalman
// reference, kernel Monte-Carlo convergence, low-rank sampling moments,
// metric brute-force equality, and mixture-density quadrature.
// inject_gradient_fault corrupts one analytic gradient coordinate so the
// battery's own failure path stays honest.
VerifyReport verify_suite(bool inject_gradient_fault = false, std::uint64_t seed = 0x7e57);

// Layer chain described by an ArchitectureConfig for given dims.
std::vector<nn::LayerSpec> build_chain(const ArchitectureConfig& arch, int in_dim, int out_dim);

}  // namespace tradi::runner
