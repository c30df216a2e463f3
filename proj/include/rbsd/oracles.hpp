#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rbsd/benchmarks.hpp"
#include "rbsd/bsde.hpp"
#include "rbsd/model.hpp"

namespace rbsd {

// Reference solvers used to validate the main pipeline. None of them calls
// into forward, filter, randomizer or bsde: they only probe ProblemSpec
// coefficients and run their own loops.

/// Exact-equality probe of every coefficient at 100 random states for all
/// grid controls. Throws NotApplicableError on the first difference.
void require_control_independent(const ProblemSpec& spec, const ControlGrid& grid,
                                 std::uint64_t seed);

/// Euler Monte Carlo of int f dt + g(X_T) with the control frozen at the
/// anchor. Uses its own generator, not the library's counter streams.
McEstimate plain_mc_value(const ProblemSpec& spec, const ControlGrid& grid,
                          const TimeGrid& tgrid, std::int64_t paths, std::uint64_t seed);

struct HjbOptions {
  double x_max = 6.0;
  int nodes = 241;
  /// Sub-step count is capped; beyond it the lattice is rejected.
  int max_substeps = 1 << 20;
  double cfl = 0.9;
};

struct HjbResult {
  double value = 0.0;
  int substeps = 0;
  double dx = 0.0;
};

/// Explicit lattice for v_t + max_a {b v_x + s^2 v_xx / 2 + f} = 0, with
/// central or upwind drift differences, on [-x_max, x_max] with linear extrapolation at both ends. Requires n = 1
/// and no unobserved noise. The value at x0 is read by linear interpolation.
HjbResult hjb_lattice_value(const ProblemSpec& spec, const ControlGrid& grid,
                            const TimeGrid& tgrid, const HjbOptions& options = {});

struct ValidatedHjb {
  HjbResult coarse;
  HjbResult fine;  // twice the resolution in x (and therefore 4x in time)
  double relative_change = 0.0;
  bool validated = false;  // relative_change < 1%
};
ValidatedHjb hjb_with_doubling(const ProblemSpec& spec, const ControlGrid& grid,
                               const TimeGrid& tgrid, const HjbOptions& options = {});

struct LqgOracle {
  double continuous_value = 0.0;  // separation principle, continuous control
  McEstimate projected;           // nearest-grid feedback held over each knot
  double s0 = 0.0;                // Riccati S(0)
  double beta0 = 0.0;             // filter-error contribution at time 0
  double terminal_variance = 0.0; // Kalman error variance at T
  std::vector<std::string> warnings;
};

/// Kalman error variance P' = 2 a P + s^2 - c^2 P^2, control Riccati
/// -S' = 2 a S + q - b_u^2 S^2 / r with S(T) = p, and the filter-error term
/// -beta' = S (P c)^2 + q P with beta(T) = p P(T), all by RK4 with step 1e-6 T.
/// The projected value simulates the physical system with a discrete
/// Kalman-Bucy filter on tgrid.
LqgOracle lqg_kalman_value(const LqgParams& params, const TimeGrid& tgrid, std::int64_t paths,
                           std::uint64_t seed);

/// Expected -p X_T^2 without control (u = 0), from the mean/variance ODE.
double lqg_uncontrolled_value(const LqgParams& params);

}  // namespace rbsd
