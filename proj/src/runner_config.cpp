#include "tradi/runner.hpp"

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace tradi::runner {

namespace {

using nlohmann::json;

Task task_from_string(const std::string& s) {
  if (s == "toy_regression") return Task::toy_regression;
  if (s == "uci_regression") return Task::uci_regression;
  if (s == "mnist_classification") return Task::mnist_classification;
  if (s == "mnist_ood") return Task::mnist_ood;
  throw ConfigError("unknown task: " + s);
}

std::string task_name(Task t) {
  switch (t) {
    case Task::toy_regression: return "toy_regression";
    case Task::uci_regression: return "uci_regression";
    case Task::mnist_classification: return "mnist_classification";
    case Task::mnist_ood: return "mnist_ood";
  }
  return "?";
}

nn::LayerSpec layer_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "dense") return nn::dense(j.at("in").get<int>(), j.at("out").get<int>());
  if (kind == "relu") return nn::relu(j.at("dim").get<int>());
  if (kind == "dropout") return nn::dropout(j.at("dim").get<int>(), j.at("rate").get<double>());
  if (kind == "batchnorm") return nn::batchnorm(j.at("dim").get<int>());
  throw ConfigError("unknown layer kind: " + kind);
}

std::string resolve_path(const std::string& path) {
  if (path.empty()) return path;
  namespace fs = std::filesystem;
  fs::path p(path);
  if (p.is_absolute() || fs::exists(p)) return p.string();
  if (const char* root = std::getenv("TRADI_DATA_DIR")) {
    const fs::path candidate = fs::path(root) / p;
    if (fs::exists(candidate)) return candidate.string();
  }
  return p.string();
}

void require_exists(const std::string& path, const std::string& what) {
  if (path.empty()) throw ConfigError(what + " path is not set");
  if (!std::filesystem::exists(path)) throw ConfigError(what + " not found: " + path);
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text, const std::string& origin) {
  json j = json::parse(json_text, nullptr, false);
  if (j.is_discarded()) throw ConfigError(origin + ": not valid JSON");

  ExperimentConfig cfg;
  cfg.task = task_from_string(j.at("task").get<std::string>());
  maybe(j, "seed", cfg.seed);
  maybe(j, "ece_bins", cfg.ece_bins);
  maybe(j, "calibration_bins", cfg.calibration_bins);
  maybe(j, "equal_count_bins", cfg.equal_count_bins);
  maybe(j, "output_dir", cfg.output_dir);

  if (j.contains("architecture")) {
    const auto& a = j.at("architecture");
    if (a.is_array()) {
      cfg.arch.explicit_layers = true;
      for (const auto& lj : a) cfg.arch.layers.push_back(layer_from_json(lj));
    } else {
      maybe(a, "hidden_units", cfg.arch.hidden_units);
      maybe(a, "hidden_layers", cfg.arch.hidden_layers);
      maybe(a, "batchnorm", cfg.arch.use_batchnorm);
      maybe(a, "dropout_rate", cfg.arch.dropout_rate);
    }
  }

  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    maybe(o, "lr", cfg.optim.lr);
    maybe(o, "batch_size", cfg.optim.batch_size);
    maybe(o, "epochs", cfg.optim.epochs);
    maybe(o, "phase1_epochs", cfg.optim.phase1_epochs);
    maybe(o, "phase2_lr", cfg.optim.phase2_lr);
    maybe(o, "bn_momentum", cfg.optim.bn_momentum);
  }

  if (j.contains("tracker")) {
    const auto& t = j.at("tracker");
    maybe(t, "mean_state_noise", cfg.tracking.hyper.mean_state_noise);
    maybe(t, "mean_obs_noise", cfg.tracking.hyper.mean_obs_noise);
    maybe(t, "var_state_noise", cfg.tracking.hyper.var_state_noise);
    maybe(t, "var_obs_noise", cfg.tracking.hyper.var_obs_noise);
    maybe(t, "variance_floor", cfg.tracking.hyper.variance_floor);
    if (t.contains("variance_update")) {
      const std::string v = t.at("variance_update").get<std::string>();
      if (v == "centered")
        cfg.tracking.hyper.variance_update = tracker::VarianceUpdate::centered;
      else if (v == "plain")
        cfg.tracking.hyper.variance_update = tracker::VarianceUpdate::plain;
      else
        throw ConfigError("variance_update must be 'centered' or 'plain'");
    }
    maybe(t, "thin", cfg.tracking.thin);
    maybe(t, "track_cov", cfg.tracking.track_cov);
    maybe(t, "cov_limit", cfg.tracking.cov_limit);
  }

  if (j.contains("sampler")) {
    const auto& s = j.at("sampler");
    if (s.contains("mode")) {
      const std::string m = s.at("mode").get<std::string>();
      if (m == "rff")
        cfg.sampling.mode = sampler::SampleMode::rff;
      else if (m == "full_cov")
        cfg.sampling.mode = sampler::SampleMode::full_cov;
      else
        throw ConfigError("sampler mode must be 'rff' or 'full_cov'");
    }
    maybe(s, "n_models", cfg.sampling.n_models);
    maybe(s, "rff_features", cfg.sampling.rff_features);
    maybe(s, "rff_sigma", cfg.sampling.rff_sigma);
    maybe(s, "per_layer_draw", cfg.sampling.per_layer_draw);
    maybe(s, "calibration_rows", cfg.sampling.calibration_rows);
  }

  if (j.contains("data")) {
    const auto& d = j.at("data");
    maybe(d, "n_train", cfg.dataset.n_train);
    maybe(d, "n_test", cfg.dataset.n_test);
    maybe(d, "csv", cfg.dataset.csv);
    maybe(d, "target_column", cfg.dataset.target_column);
    maybe(d, "folds", cfg.dataset.folds);
    maybe(d, "train_images", cfg.dataset.train_images);
    maybe(d, "train_labels", cfg.dataset.train_labels);
    maybe(d, "test_images", cfg.dataset.test_images);
    maybe(d, "test_labels", cfg.dataset.test_labels);
    maybe(d, "ood_folder", cfg.dataset.ood_folder);
    maybe(d, "ood_images", cfg.dataset.ood_images);
    maybe(d, "ood_labels", cfg.dataset.ood_labels);
    maybe(d, "ood_name", cfg.dataset.ood_name);
  }

  if (j.contains("baselines")) {
    for (const auto& b : j.at("baselines")) {
      baselines::BaselineConfig bc;
      bc.method = baselines::method_from_string(b.at("method").get<std::string>());
      maybe(b, "m", bc.m);
      maybe(b, "perturb_scale", bc.perturb_scale);
      maybe(b, "dropout_rate", bc.dropout_rate);
      cfg.baseline_list.push_back(bc);
    }
  }

  // validation
  if (!(cfg.optim.lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (cfg.optim.epochs < 1) throw ConfigError("epochs must be at least 1");
  if (cfg.optim.batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (cfg.sampling.n_models < 1) throw ConfigError("n_models must be at least 1");
  if (cfg.ece_bins < 1) throw ConfigError("ece_bins must be at least 1");
  if (cfg.calibration_bins < 1) throw ConfigError("calibration_bins must be at least 1");
  for (const auto& b : cfg.baseline_list) {
    if (b.m < 1) throw ConfigError("baseline ensemble size must be at least 1");
    const bool regression =
        cfg.task == Task::toy_regression || cfg.task == Task::uci_regression;
    if (regression && b.method == baselines::Method::mcp)
      throw ConfigError("mcp is a classification baseline");
  }

  switch (cfg.task) {
    case Task::toy_regression:
      if (cfg.dataset.n_train < 1 || cfg.dataset.n_test < 1)
        throw ConfigError("toy split sizes must be positive");
      break;
    case Task::uci_regression:
      cfg.dataset.csv = resolve_path(cfg.dataset.csv);
      require_exists(cfg.dataset.csv, "uci csv");
      if (cfg.dataset.folds < 1) throw ConfigError("folds must be at least 1");
      break;
    case Task::mnist_ood:
      if (!cfg.dataset.ood_folder.empty()) {
        cfg.dataset.ood_folder = resolve_path(cfg.dataset.ood_folder);
        require_exists(cfg.dataset.ood_folder, "ood folder");
      } else {
        cfg.dataset.ood_images = resolve_path(cfg.dataset.ood_images);
        cfg.dataset.ood_labels = resolve_path(cfg.dataset.ood_labels);
        require_exists(cfg.dataset.ood_images, "ood images");
        require_exists(cfg.dataset.ood_labels, "ood labels");
      }
      [[fallthrough]];
    case Task::mnist_classification:
      cfg.dataset.train_images = resolve_path(cfg.dataset.train_images);
      cfg.dataset.train_labels = resolve_path(cfg.dataset.train_labels);
      cfg.dataset.test_images = resolve_path(cfg.dataset.test_images);
      cfg.dataset.test_labels = resolve_path(cfg.dataset.test_labels);
      require_exists(cfg.dataset.train_images, "train images");
      require_exists(cfg.dataset.train_labels, "train labels");
      require_exists(cfg.dataset.test_images, "test images");
      require_exists(cfg.dataset.test_labels, "test labels");
      break;
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

std::string resolved_config_json(const ExperimentConfig& cfg) {
  json j;
  j["task"] = task_name(cfg.task);
  j["seed"] = cfg.seed;
  j["ece_bins"] = cfg.ece_bins;
  j["calibration_bins"] = cfg.calibration_bins;
  j["equal_count_bins"] = cfg.equal_count_bins;
  j["output_dir"] = cfg.output_dir;

  if (cfg.arch.explicit_layers) {
    json layers = json::array();
    for (const auto& l : cfg.arch.layers) {
      json lj;
      switch (l.kind) {
        case nn::LayerKind::dense:
          lj = {{"kind", "dense"}, {"in", l.in_dim}, {"out", l.out_dim}};
          break;
        case nn::LayerKind::relu: lj = {{"kind", "relu"}, {"dim", l.in_dim}}; break;
        case nn::LayerKind::dropout:
          lj = {{"kind", "dropout"}, {"dim", l.in_dim}, {"rate", l.dropout_rate}};
          break;
        case nn::LayerKind::batchnorm:
          lj = {{"kind", "batchnorm"}, {"dim", l.in_dim}};
          break;
      }
      layers.push_back(lj);
    }
    j["architecture"] = layers;
  } else {
    j["architecture"] = {{"hidden_units", cfg.arch.hidden_units},
                         {"hidden_layers", cfg.arch.hidden_layers},
                         {"batchnorm", cfg.arch.use_batchnorm},
                         {"dropout_rate", cfg.arch.dropout_rate}};
  }

  j["optimizer"] = {{"lr", cfg.optim.lr},
                    {"batch_size", cfg.optim.batch_size},
                    {"epochs", cfg.optim.epochs},
                    {"phase1_epochs", cfg.optim.phase1_epochs},
                    {"phase2_lr", cfg.optim.phase2_lr},
                    {"bn_momentum", cfg.optim.bn_momentum}};
  j["tracker"] = {
      {"mean_state_noise", cfg.tracking.hyper.mean_state_noise},
      {"mean_obs_noise", cfg.tracking.hyper.mean_obs_noise},
      {"var_state_noise", cfg.tracking.hyper.var_state_noise},
      {"var_obs_noise", cfg.tracking.hyper.var_obs_noise},
      {"variance_floor", cfg.tracking.hyper.variance_floor},
      {"variance_update",
       cfg.tracking.hyper.variance_update == tracker::VarianceUpdate::centered ? "centered"
                                                                               : "plain"},
      {"thin", cfg.tracking.thin},
      {"track_cov", cfg.tracking.track_cov},
      {"cov_limit", cfg.tracking.cov_limit}};
  j["sampler"] = {{"mode", cfg.sampling.mode == sampler::SampleMode::rff ? "rff" : "full_cov"},
                  {"n_models", cfg.sampling.n_models},
                  {"rff_features", cfg.sampling.rff_features},
                  {"rff_sigma", cfg.sampling.rff_sigma},
                  {"per_layer_draw", cfg.sampling.per_layer_draw},
                  {"calibration_rows", cfg.sampling.calibration_rows}};
  j["data"] = {{"n_train", cfg.dataset.n_train},   {"n_test", cfg.dataset.n_test},
               {"csv", cfg.dataset.csv},           {"target_column", cfg.dataset.target_column},
               {"folds", cfg.dataset.folds},       {"train_images", cfg.dataset.train_images},
               {"train_labels", cfg.dataset.train_labels},
               {"test_images", cfg.dataset.test_images},
               {"test_labels", cfg.dataset.test_labels},
               {"ood_folder", cfg.dataset.ood_folder},
               {"ood_images", cfg.dataset.ood_images},
               {"ood_labels", cfg.dataset.ood_labels},
               {"ood_name", cfg.dataset.ood_name}};
  json bl = json::array();
  for (const auto& b : cfg.baseline_list)
    bl.push_back({{"method", baselines::method_name(b.method)},
                  {"m", b.m},
                  {"perturb_scale", b.perturb_scale},
                  {"dropout_rate", b.dropout_rate}});
  j["baselines"] = bl;
  return j.dump(2);
}

CurveKind curve_kind_from_string(const std::string& name) {
  if (name == "calib") return CurveKind::calibration;
  if (name == "avc") return CurveKind::accuracy_vs_confidence;
  if (name == "prec") return CurveKind::precision_calibration;
  throw ConfigError("unknown curve kind: " + name + " (expected calib, avc, or prec)");
}

std::vector<nn::LayerSpec> build_chain(const ArchitectureConfig& arch, int in_dim, int out_dim) {
  if (arch.explicit_layers) {
    if (arch.layers.front().in_dim != in_dim || arch.layers.back().out_dim != out_dim)
      throw ConfigError("explicit architecture does not match the task dimensions");
    return arch.layers;
  }
  std::vector<nn::LayerSpec> specs;
  int prev = in_dim;
  for (int l = 0; l < arch.hidden_layers; ++l) {
    specs.push_back(nn::dense(prev, arch.hidden_units));
    specs.push_back(nn::relu(arch.hidden_units));
    if (arch.use_batchnorm) specs.push_back(nn::batchnorm(arch.hidden_units));
    if (arch.dropout_rate > 0.0) specs.push_back(nn::dropout(arch.hidden_units, arch.dropout_rate));
    prev = arch.hidden_units;
  }
  specs.push_back(nn::dense(prev, out_dim));
  return specs;
}

}  // namespace tradi::runner
