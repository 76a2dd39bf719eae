#include <CLI11.hpp>
#include <yaml-cpp/yaml.h>

#include <cstdio>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include "ttsgd/config.hpp"
#include "ttsgd/experiment.hpp"
#include "ttsgd/ttsgd.hpp"

namespace {

enum Exit { kOk = 0, kThresholds = 1, kConfig = 2, kNumeric = 3, kIo = 4 };

int report(const char* kind, const std::exception& e, int code) {
  std::cerr << "ttsgd: " << kind << ": " << e.what() << '\n';
  return code;
}

void print_summary(const ttsgd::ExperimentResult& res) {
  for (const auto& r : res.summary)
    if (r.status != "info")
      std::cout << r.status << "  " << r.item << "  " << r.quantity << " = " << ttsgd::format_double(r.value)
                << " (threshold " << ttsgd::format_double(r.threshold) << ")\n";
}

int cmd_run(const std::string& path, std::size_t workers, bool quiet) {
  const ttsgd::ExperimentConfig cfg = ttsgd::load_config(path);
  auto progress = [quiet](const std::string& f) {
    if (!quiet) std::cerr << "finished " << f << '\n';
  };
  const auto res = ttsgd::run_experiment(cfg, workers, progress);
  const auto dir = ttsgd::write_outputs(cfg, res);
  print_summary(res);
  std::cout << "wrote " << res.runs.size() + res.extra.size() << " files and summary.csv to " << dir.string() << '\n';
  return res.passed() ? kOk : kThresholds;
}

int cmd_check(const std::string& path) {
  ttsgd::ExperimentConfig cfg = ttsgd::load_config(path);
  const auto rows = ttsgd::gradient_check_rows(cfg, cfg.seeds.front());
  bool ok = true;
  std::printf("%-10s %-12s %14s %14s %12s\n", "quantity", "coordinate", "analytic", "finite_diff", "rel_error");
  for (const auto& r : rows) {
    const bool matrix = r.quantity.rfind("matrix_", 0) == 0;
    const double tol = matrix ? cfg.acceptance.matrix_tolerance : cfg.acceptance.tangent_tolerance;
    const bool pass = r.rel_error < tol;
    ok = ok && pass;
    std::printf("%-10s %-12s %14.6e %14.6e %12.3e %s\n", r.quantity.c_str(), r.coordinate.c_str(), r.analytic,
                r.finite_difference, r.rel_error, pass ? "ok" : "FAIL");
  }
  return ok ? kOk : kThresholds;
}

int cmd_average(const std::vector<std::string>& inputs, const std::string& out) {
  std::vector<ttsgd::TrajectoryRecord> recs;
  for (const auto& p : inputs) recs.push_back(ttsgd::read_csv(p));
  ttsgd::emit_csv(ttsgd::average_records(recs), out);
  return kOk;
}

int cmd_riccati(const std::string& path) {
  const ttsgd::ExperimentConfig cfg = ttsgd::load_config(path);
  std::cout << "# config_hash: " << cfg.hash << '\n';
  for (const auto& [k, v] : ttsgd::riccati_report(cfg)) std::cout << k << ": " << ttsgd::format_double(v) << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-timescale joint parameter estimation and sensor placement"};
  app.require_subcommand(1);
  app.set_version_flag("--version", ttsgd::kToolVersion);

  std::string config;
  std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
  bool quiet = false;
  auto* run = app.add_subcommand("run", "Run the experiment described by a config file");
  run->add_option("config", config, "YAML config")->required();
  run->add_option("-j,--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
  run->add_flag("-q,--quiet", quiet, "No progress output");

  auto* check = app.add_subcommand("check-gradients", "Compare tangent filters with finite differences");
  check->add_option("config", config, "YAML config")->required();

  std::vector<std::string> inputs;
  std::string out;
  auto* avg = app.add_subcommand("average", "Row-wise mean of aligned trajectory CSVs");
  avg->add_option("csv", inputs, "Input CSV files")->required();
  avg->add_option("--out", out, "Output CSV")->required();

  auto* ric = app.add_subcommand("riccati", "Print steady-state filter oracle values");
  ric->add_option("config", config, "YAML config")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (*run) return cmd_run(config, workers, quiet);
    if (*check) return cmd_check(config);
    if (*avg) return cmd_average(inputs, out);
    if (*ric) return cmd_riccati(config);
  } catch (const ttsgd::ConfigError& e) {
    return report("config error", e, kConfig);
  } catch (const ttsgd::DimensionError& e) {
    return report("config error", e, kConfig);
  } catch (const ttsgd::AlignmentError& e) {
    return report("config error", e, kConfig);
  } catch (const YAML::Exception& e) {
    return report("config error", e, kConfig);
  } catch (const ttsgd::NumericBlowup& e) {
    return report("numeric error", e, kNumeric);
  } catch (const ttsgd::ConvergenceError& e) {
    return report("numeric error", e, kNumeric);
  } catch (const ttsgd::DomainError& e) {
    return report("numeric error", e, kNumeric);
  } catch (const ttsgd::ConditioningError& e) {
    return report("numeric error", e, kNumeric);
  } catch (const ttsgd::IoError& e) {
    return report("I/O error", e, kIo);
  } catch (const std::filesystem::filesystem_error& e) {
    return report("I/O error", e, kIo);
  }
  return kOk;
}
