#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"
#include "rbsd/bsde.hpp"
#include "rbsd/config.hpp"

namespace rbsd {

/// Every knob of a run. Zero for steps/particles/degree means "benchmark
/// default"; the resolved values are what the config hash covers.
struct Settings {
  std::string problem = "bangbang1d";
  std::string mode = "constrained";  // constrained|penalized|dual|primal|oracle
  std::int64_t paths = 10000;
  int steps = 0;
  int particles = 0;
  int degree = 0;
  std::string features;
  double lambda = 1.0;
  int penalty_n = 16;
  std::string penalty_scheme = "explicit";
  std::string resampling = "auto";
  std::uint64_t seed = 1;
  int threads = 1;
  // dual search
  int budget = 200;
  int cells = 4;
  double link_slope = 0.0;
  double dual_lambda = 0.0;  // 0: use lambda
  // extra evaluations
  std::int64_t policy_paths = 0;
  std::int64_t oracle_paths = 100000;
  int levels = 3;

  /// Keys are the flag names without dashes; section "run" is also accepted
  /// as a prefix ("run.paths").
  static Settings from_config(const Config& cfg);
  /// Fills benchmark defaults and returns the canonical config of the run.
  Config resolved() const;
};

struct RunOutput {
  nlohmann::json report;   // deterministic part plus a "metadata" object
  std::string table_csv;   // per-knot diagnostics or per-candidate rows
  int exit_code = 0;
};

/// Dispatches on settings.mode. Library errors propagate to the caller.
RunOutput run_solve(const Settings& settings);

/// Simultaneous refinement over settings.levels: dt / 2, P * 4, M * 4 per
/// level (M stays 1 for fully observed problems).
RunOutput run_sweep(const Settings& settings);

nlohmann::json solution_json(const BsdeSolution& sol);
std::string knot_table_csv(const BsdeSolution& sol);

}  // namespace rbsd
