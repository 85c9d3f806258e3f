// Command-line front end: config-driven experiment runs, the oracle verify
// battery, and curve regeneration from prediction dumps.

#include "tradi/runner.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

namespace {

int guarded(const std::function<void()>& body) {
  try {
    body();
    return 0;
  } catch (const tradi::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const tradi::ContractError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const tradi::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 3;
  } catch (const tradi::IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return 4;
  } catch (const tradi::FormatError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"train-time weight-distribution tracking and uncertainty benchmarks"};
  app.require_subcommand(1);

  // run
  std::string config_path, out_dir;
  int workers = 1;
  std::int64_t seed_override = -1;
  auto* run = app.add_subcommand("run", "run an experiment from a JSON config");
  run->add_option("config", config_path, "experiment config path")->required();
  run->add_option("--out", out_dir, "output directory (default: config output_dir)");
  run->add_option("--workers", workers, "worker threads for folds/ensemble members");
  run->add_option("--seed", seed_override, "override the config seed");

  // verify
  bool inject_fault = false;
  auto* verify = app.add_subcommand("verify", "run the oracle battery");
  verify->add_flag("--inject-gradient-fault", inject_fault,
                   "corrupt one analytic gradient coordinate (negative control)");

  // curves
  std::vector<std::string> dump_paths;
  std::string kind_name = "calib";
  std::string curves_out = ".";
  int bins = 10;
  bool equal_count = false;
  auto* curves = app.add_subcommand("curves", "regenerate curve CSVs from dumps");
  curves->add_option("dumps", dump_paths, "prediction dump CSVs")->required();
  curves->add_option("--kind", kind_name, "calib, avc, or prec");
  curves->add_option("--out", curves_out, "output directory");
  curves->add_option("--bins", bins, "bin count for the binned curves");
  curves->add_flag("--equal-count", equal_count, "equal-count bins instead of equal-width");

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) {
    return guarded([&] {
      auto cfg = tradi::runner::load_config(config_path);
      if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
      const std::string dir = out_dir.empty() ? cfg.output_dir : out_dir;
      const auto report = tradi::runner::run_experiment(cfg, dir, workers);
      std::printf("run %s finished: %zu method rows, %.1fs\n", report.run_id.c_str(),
                  report.rows.size(), report.timings.at("total_wall_s"));
      for (const auto& row : report.rows) {
        std::printf("  %-16s", row.name.c_str());
        for (const auto& [k, v] : row.values) std::printf(" %s=%.4g", k.c_str(), v);
        std::printf("\n");
      }
    });
  }

  if (verify->parsed()) {
    const auto report = tradi::runner::verify_suite(inject_fault);
    std::vector<std::string> failed;
    for (const auto& c : report.checks) {
      std::printf("%-32s %s  (%s)\n", c.name.c_str(), c.pass ? "PASS" : "FAIL",
                  c.detail.c_str());
      if (!c.pass) failed.push_back(c.name);
    }
    if (!failed.empty()) {
      std::printf("failing checks:");
      for (const auto& name : failed) std::printf(" %s", name.c_str());
      std::printf("\n");
      return 1;
    }
    return 0;
  }

  if (curves->parsed()) {
    return guarded([&] {
      const auto kind = tradi::runner::curve_kind_from_string(kind_name);
      const auto mode = equal_count ? tradi::metrics::BinMode::equal_count
                                    : tradi::metrics::BinMode::equal_width;
      const auto files = tradi::runner::emit_curves(dump_paths, {kind}, curves_out, bins, mode);
      for (const auto& f : files) std::printf("%s\n", f.c_str());
    });
  }

  return 0;
}
