#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace rbsd {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Quick property suite (seconds): structural invariants of every module at
/// small sample sizes. The acceptance binary runs the full-size versions.
std::vector<CheckResult> run_invariant_checks(std::uint64_t seed, int threads);

}  // namespace rbsd
