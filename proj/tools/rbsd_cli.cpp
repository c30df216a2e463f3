// Experiment runner: solve / check / sweep over the builtin benchmarks.

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "rbsd/checks.hpp"
#include "rbsd/errors.hpp"
#include "rbsd/experiment.hpp"
#include "rbsd/parallel.hpp"

namespace {

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out) throw rbsd::ValidationError("cannot write " + p.string());
  out << text;
}

// Flag values land in a Config so that config files and flags share one
// parser; flags given on the command line override file entries.
struct FlagSink {
  rbsd::Config cfg;
  std::string config_file;

  void add(CLI::App* app, const std::string& name, const std::string& help) {
    app->add_option_function<std::string>(
        "--" + name, [this, name](const std::string& v) { cfg.set(name, v); }, help);
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Randomized-control solver for partially observed problems"};
  app.require_subcommand(1);

  FlagSink flags;
  std::string out_dir = ".";
  std::string suite = "invariants";

  auto* solve = app.add_subcommand("solve", "run one solver or oracle and write a report");
  auto* check = app.add_subcommand("check", "run a property suite");
  auto* sweep = app.add_subcommand("sweep", "simultaneous refinement over levels");
  for (auto* sub : {solve, sweep}) {
    flags.add(sub, "problem", "benchmark name");
    flags.add(sub, "mode", "constrained|penalized|dual|primal|oracle");
    flags.add(sub, "paths", "scenario count P");
    flags.add(sub, "steps", "time steps N");
    flags.add(sub, "particles", "filter particles M");
    flags.add(sub, "degree", "polynomial degree");
    flags.add(sub, "features", "mean|moments|quantized");
    flags.add(sub, "lambda", "total mark intensity");
    flags.add(sub, "penalty-n", "penalty for --mode penalized");
    flags.add(sub, "penalty-scheme", "implicit|explicit");
    flags.add(sub, "resampling", "mark resampling auto|on|off");
    flags.add(sub, "budget", "dual search evaluations");
    flags.add(sub, "cells", "dual time cells");
    flags.add(sub, "link-slope", "dual feature link slope");
    flags.add(sub, "dual-lambda", "total intensity for the dual search");
    flags.add(sub, "policy-paths", "primal paths for policy evaluation");
    flags.add(sub, "oracle-paths", "paths for Monte Carlo oracles");
    flags.add(sub, "levels", "sweep levels");
    sub->add_option("--config", flags.config_file, "key=value config file");
    sub->add_option("--out", out_dir, "output directory");
  }
  for (auto* sub : {solve, sweep, check}) {
    flags.add(sub, "seed", "master seed");
    flags.add(sub, "threads", "worker threads");
  }
  check->add_option("--suite", suite, "suite name")->check(CLI::IsMember({"invariants"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    rbsd::Config cfg;
    if (!flags.config_file.empty()) cfg = rbsd::Config::load(flags.config_file);
    for (const auto& [k, v] : flags.cfg.entries()) cfg.set(k, v);
    rbsd::Settings settings = rbsd::Settings::from_config(cfg);
    if (!cfg.has("threads") && !cfg.has("run.threads")) settings.threads = rbsd::default_threads();

    if (check->parsed()) {
      const auto results = rbsd::run_invariant_checks(settings.seed, settings.threads);
      bool all = true;
      for (const auto& r : results) {
        std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << "  " << r.detail << '\n';
        all = all && r.passed;
      }
      return all ? 0 : 1;
    }

    std::filesystem::create_directories(out_dir);
    const std::filesystem::path dir(out_dir);
    if (solve->parsed()) {
      const rbsd::RunOutput out = rbsd::run_solve(settings);
      write_file(dir / "report.json", out.report.dump(2) + "\n");
      write_file(dir / "table.csv", out.table_csv);
      std::cout << out.report.value("y0", 0.0) << " +- " << out.report.value("stderr", 0.0)
                << '\n';
    } else {
      const rbsd::RunOutput out = rbsd::run_sweep(settings);
      write_file(dir / "report.json", out.report.dump(2) + "\n");
      write_file(dir / "convergence.csv", out.table_csv);
      std::cout << out.table_csv;
    }
    return 0;
  } catch (const rbsd::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return 2;
  } catch (const rbsd::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 3;
  } catch (const rbsd::NotApplicableError& e) {
    std::cerr << "not applicable: " << e.what() << '\n';
    return 2;
  }
}
