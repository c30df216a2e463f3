#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "rbsd/bsde.hpp"
#include "rbsd/filter.hpp"
#include "rbsd/model.hpp"
#include "rbsd/randomizer.hpp"

namespace rbsd {

/// nu_t(a_j) = clamp(theta_{b(t), j} + eta_j * features(0), lower, upper)
/// where b(t) is the time cell (breaks[b], breaks[b+1]] holding t and the
/// features are the filter summary at the last knot, so nu is predictable.
struct IntensityFamily {
  std::vector<double> breaks;  // B + 1 cell boundaries, 0 to T
  Eigen::MatrixXd theta;       // B x J
  Eigen::VectorXd eta;         // J, zero means no feature link
  double lower = 0.05;
  double upper = 20.0;

  int cells() const { return static_cast<int>(theta.rows()); }
  int cell(double t) const;
  bool uses_features() const { return eta.size() > 0 && eta.cwiseAbs().maxCoeff() > 0.0; }
  IntensityControl control() const;
};

/// theta = 1 on `cells` equal time cells, no link.
IntensityFamily make_intensity_family(const ControlGrid& grid, double horizon, int cells,
                                      double lower = 0.05, double upper = 20.0);
/// eta_j = -slope * a_j(0): pushes marks toward controls that oppose the
/// first feature coordinate.
void set_feedback_link(IntensityFamily& family, const ControlGrid& grid, double slope);

enum class GainMode { kReweight, kDirect };

struct GainOptions {
  GainMode mode = GainMode::kReweight;
  std::int64_t paths = 1000;
  std::uint64_t seed = 1;
  int threads = 1;
  /// Filter that supplies features to nu; only run when nu needs them.
  FilterOptions filter;
  bool track_features = false;
};

/// Reweight: mean of kappa_T^nu times the pathwise gain under the reference
/// law. Direct: mean gain with marks simulated under nu by thinning.
McEstimate estimate_randomized_gain(const ProblemSpec& spec, const ControlGrid& grid,
                                    const TimeGrid& tgrid, const IntensityControl& nu,
                                    const GainOptions& options);

struct SearchRow {
  int evaluation = 0;
  int cell = -1;  // -1 for the starting point
  int control = -1;
  double multiplier = 1.0;
  Eigen::MatrixXd theta;
  McEstimate gain;
};

struct SearchResult {
  IntensityFamily best;
  McEstimate best_gain;     // in-sample, common random numbers
  McEstimate fresh_gain;    // best family re-evaluated on an unused seed
  double max_gain = 0.0;    // max over every evaluated candidate
  std::vector<SearchRow> rows;
};

/// Coordinate ascent over theta_{b,j} with multipliers {1/4, 1/2, 2, 4}
/// around the incumbent. Every candidate uses the same seed, so differences
/// between candidates are not dominated by sampling noise.
SearchResult search_intensity(const ProblemSpec& spec, const ControlGrid& grid,
                              const TimeGrid& tgrid, const IntensityFamily& start, int budget,
                              const GainOptions& options);

void write_search_csv(const std::string& file, const SearchResult& result);

}  // namespace rbsd
