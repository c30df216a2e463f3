#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "rbsd/filter.hpp"
#include "rbsd/model.hpp"
#include "rbsd/regression.hpp"
#include "rbsd/scenario.hpp"

namespace rbsd {

/// Whether scenarios redraw I uniformly at every knot before T. kAuto turns
/// it on whenever the grid has more than one control: with I_0 = a_0 the other
/// time-0 buckets are always empty.
enum class MarkResampling { kAuto, kOn, kOff };
bool resolve_mark_resampling(MarkResampling mode, const ControlGrid& grid);

enum class PenaltyScheme {
  /// Y(a) = V(a) + n dt sum_j lambda_j (C(a_j) - C(a))^+ with C the
  /// bucket-regressed continuation. Can overshoot the constrained value once
  /// n dt Lambda > 1.
  kExplicit,
  /// Y(a) = V(a) + n dt sum_j lambda_j (Y(a_j) - Y(a))^+, solved exactly.
  /// Never overshoots, but closes the gap more slowly in n.
  kImplicit,
};

struct BsdeOptions {
  int degree = 2;
  /// Each bucket needs max(min_bucket, 5 * basis size) scenarios.
  int min_bucket = 50;
  double svd_threshold = 1e-10;
  /// Regress values divided by the filter mass and multiply back.
  bool normalize = true;
  /// Constrained scheme: choose the maximizing control with the regressions
  /// of one half of the scenarios and read its value from the other half.
  /// Off: in-sample pointwise maximum, biased upward by regression noise.
  bool cross_fit = true;
  /// Clamp standardized features to this many standard deviations (0: off).
  double feature_clip = 3.0;
  PenaltyScheme penalty_scheme = PenaltyScheme::kExplicit;
  /// The standard error comes from re-solving on this many disjoint groups
  /// of scenarios (sectioning); the spread of the group values covers the
  /// regression error of every knot. Falls back to the time-0 bucket spread
  /// when groups are too thin or groups < 2.
  int stderr_groups = 10;
};

/// Bucket regressions at one knot, in numeraire-normalized units.
struct KnotModel {
  Standardizer standardizer;
  int degree = 0;
  bool intercept_only = false;
  Eigen::MatrixXd coeffs;        // L x J
  Eigen::MatrixXd continuation;  // L x J, explicit penalized scheme only
  std::vector<int> bucket_sizes;
  Eigen::VectorXd residual_rms;  // J
  bool truncated = false;

  int basis_dim() const { return static_cast<int>(coeffs.rows()); }
  Eigen::MatrixXd basis(const Eigen::MatrixXd& features) const;
  /// P x J fitted values for feature rows.
  Eigen::MatrixXd predict(const Eigen::MatrixXd& features) const;
  /// Lowest index among the maximizers of the fitted values.
  int argmax(const Eigen::VectorXd& features) const;
};

struct BsdeSolution {
  double y0 = 0.0;
  double stderr = 0.0;
  std::string mode = "constrained";
  int penalty_n = 0;
  std::vector<double> knots;
  std::vector<KnotModel> models;   // N, models[k] conditions on F_{t_k}
  Eigen::MatrixXi coverage;        // N x J bucket sizes
  Eigen::MatrixXd residuals;       // N x J
  Eigen::VectorXd time0_values;    // J, value of each time-0 bucket
  std::vector<std::string> warnings;
  std::uint64_t config_hash = 0;
  std::int64_t scenarios = 0;
};

/// Backward induction: Y_N = rho_N(g); at each knot regress Y_{k+1} plus the
/// filtered running gain of step k within every bucket {I_{t_k} = a_j} and
/// take the pointwise maximum. Throws CoverageError on thin buckets.
BsdeSolution solve_constrained(const ScenarioBatch& batch, const ProblemSpec& spec,
                               const ControlGrid& grid, const BsdeOptions& options = {});

/// Penalized scheme with integer penalty n. The value at time 0 is read at
/// the anchor control. n = 0 gives the reference-law gain.
BsdeSolution solve_penalized(const ScenarioBatch& batch, const ProblemSpec& spec,
                             const ControlGrid& grid, int n, const BsdeOptions& options = {});

/// Root of y = v + c sum_j w_j (y_j - y)^+ for c >= 0, w_j > 0.
double penalized_fixed_point(double v, double c, const std::vector<double>& ys,
                             const std::vector<double>& ws);

struct McEstimate {
  double mean = 0.0;
  double stderr = 0.0;
  std::int64_t n = 0;
};
McEstimate mc_estimate(const Eigen::VectorXd& samples);

/// Greedy feedback alpha(t_k) = argmax_j of the bucket regressions at the
/// current filter features, evaluated on fresh primal paths (their own seed).
/// A lower bound on the value up to Monte Carlo error.
McEstimate evaluate_policy_from_solution(const BsdeSolution& sol, const ProblemSpec& spec,
                                         const ControlGrid& grid, const TimeGrid& tgrid,
                                         const FilterOptions& filter, std::int64_t paths,
                                         std::uint64_t seed, int threads);

}  // namespace rbsd
