// cgc_cli: run single experiments, directory suites, or the lemma battery.
// Exit status is 0 iff every certification passed.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "cgc/experiment.hpp"
#include "cgc/lemmas.hpp"

namespace fs = std::filesystem;

namespace {

int cmd_run(const std::string& config_path, const std::string& out_dir, bool csv, bool checks_only) {
  cgc::ExperimentConfig cfg;
  try {
    cfg = cgc::load_config(config_path);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  }
  const cgc::ExperimentResult res = cgc::run_experiment(cfg);
  const std::string report = cgc::format_report(res);

  if (checks_only) {
    for (const auto& c : res.checks) {
      std::cout << c.kind << ' ' << (c.passed ? "PASS" : "FAIL") << ' ' << c.detail << '\n';
    }
    if (res.error) std::cout << "error " << *res.error << '\n';
  } else {
    std::cout << report;
  }

  if (!out_dir.empty() || csv) {
    const fs::path dir = out_dir.empty() ? fs::path(".") : fs::path(out_dir);
    fs::create_directories(dir);
    std::ofstream(dir / (cfg.name + ".report.txt")) << report;
    if (csv) {
      std::ofstream f(dir / (cfg.name + ".csv"));
      cgc::write_csv(f, res.trace);
    }
  }
  return res.passed ? 0 : 1;
}

int cmd_suite(const std::string& dir, unsigned jobs) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) {
    std::cerr << "no .json configs in " << dir << '\n';
    return 2;
  }

  std::vector<cgc::ExperimentConfig> configs;
  bool config_errors = false;
  for (const auto& f : files) {
    try {
      configs.push_back(cgc::load_config(f));
    } catch (const std::exception& e) {
      std::cout << "experiment " << f.stem().string() << " FAIL config error: " << e.what() << '\n';
      config_errors = true;
    }
  }

  const cgc::SuiteReport rep = cgc::run_suite(configs, jobs);
  for (const auto& r : rep.runs) {
    std::cout << cgc::format_report(r);
  }
  std::cout << "suite passed=" << rep.passed << " failed=" << rep.failed
            << (config_errors ? " (config errors present)" : "") << '\n';
  return rep.all_passed() && !config_errors ? 0 : 1;
}

int cmd_lemmas() {
  bool ok = true;
  for (const auto& r : cgc::run_lemma_battery()) {
    std::printf("%s %s worst=%.3g tol=%.3g %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.worst,
                r.tolerance, r.detail.c_str());
    ok = ok && r.passed;
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cascaded geometric flight-control simulator"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  bool csv = false, checks_only = false;
  auto* run = app.add_subcommand("run", "Simulate one config and certify its checks");
  run->add_option("config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "Directory for the report (and CSV)");
  run->add_flag("--csv", csv, "Write the per-sample trace as CSV");
  run->add_flag("--checks-only", checks_only, "Print only the certification lines");

  std::string suite_dir;
  unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
  auto* suite = app.add_subcommand("suite", "Run every config in a directory");
  suite->add_option("dir", suite_dir, "Directory of configs")->required()->check(CLI::ExistingDirectory);
  suite->add_option("--jobs", jobs, "Parallel runs")->check(CLI::PositiveNumber);

  auto* lemmas = app.add_subcommand("lemmas", "Run the scalar-lemma oracle battery");

  CLI11_PARSE(app, argc, argv);

  if (*run) return cmd_run(config_path, out_dir, csv, checks_only);
  if (*suite) return cmd_suite(suite_dir, jobs);
  if (*lemmas) return cmd_lemmas();
  return 2;
}
