#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "rbsd/filter.hpp"
#include "rbsd/model.hpp"

namespace rbsd {

struct ScenarioOptions {
  std::int64_t paths = 1000;
  std::uint64_t seed = 1;
  /// Path indices start here, so disjoint batches can share a seed.
  std::uint64_t first_index = 0;
  int threads = 1;
  FilterOptions filter;
  bool resample_marks = false;
  /// Larger invalid fractions abort generation with a NumericError.
  double max_invalid_fraction = 1e-3;
};

/// Per-scenario data consumed by the backward schemes, stored column-wise
/// (column p is scenario p). Invalid scenarios are already removed.
struct ScenarioBatch {
  TimeGrid tgrid;
  int controls = 0;
  std::vector<Eigen::MatrixXd> features;  // N + 1 entries, each P x q
  Eigen::MatrixXd running;                // N x P, filtered running gain per step
  Eigen::VectorXd terminal;               // P, filtered terminal gain
  Eigen::MatrixXd numeraire;              // (N + 1) x P, filter mass
  Eigen::MatrixXi marks;                  // (N + 1) x P, I at knots
  Eigen::MatrixXi arrival;                // (N + 1) x P, I just before knots
  Eigen::VectorXd path_gain;              // P, pathwise gain of the simulated state
  bool resampled_marks = false;
  std::int64_t dropped = 0;

  int steps() const { return tgrid.steps(); }
  Eigen::Index size() const { return terminal.size(); }
  /// Sum of filtered running gains and terminal gain, per scenario.
  Eigen::VectorXd filtered_gain() const;
};

/// Columns `cols` of a batch, in that order.
ScenarioBatch select_scenarios(const ScenarioBatch& batch, const std::vector<Eigen::Index>& cols);

/// Simulates `paths` randomized paths under the reference Poisson law with a
/// particle filter attached to each.
ScenarioBatch generate_scenarios(const ProblemSpec& spec, const ControlGrid& grid,
                                 const TimeGrid& tgrid, const ScenarioOptions& options);

}  // namespace rbsd
