#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rbsd/rng.hpp"

namespace rbsd {

// Coefficient functions are evaluated on blocks of states: column i of `x` is
// one point of R^n. Callees size `out` themselves; a single point is a block
// with one column.
using StateBlock = Eigen::Ref<const Eigen::MatrixXd>;
using Control = Eigen::VectorXd;

/// (t, x, a) -> out. Used for drift (n x B) and for diffusions, which are
/// packed column-major: column i of out holds the n x m matrix for point i.
using VectorField =
    std::function<void(double t, StateBlock x, const Control& a, Eigen::MatrixXd& out)>;
/// (t, x, a) -> out (B).
using ScalarField =
    std::function<void(double t, StateBlock x, const Control& a, Eigen::VectorXd& out)>;
/// x -> out (B).
using TerminalField = std::function<void(StateBlock x, Eigen::VectorXd& out)>;
/// Writes one draw of the initial state into x0 (already sized n).
using InitSampler = std::function<void(CounterRng& rng, Eigen::Ref<Eigen::VectorXd> x0)>;

struct GrowthBounds {
  double lipschitz = 1.0;
  double growth = 1.0;
  double power = 2.0;
};

/// Density coordinate of a reference-measure reformulation:
/// dZ = Z c(t, x, a) . dW with c = k^{-1} h, c of size d x B.
struct Likelihood {
  int z_index = 0;
  VectorField rate;
  double bound = 0.0;
};

struct ProblemSpec {
  std::string name;
  int dim_x = 1;
  int dim_v = 0;
  int dim_w = 0;
  double horizon = 1.0;
  VectorField drift;
  VectorField diff_v;
  VectorField diff_w;
  ScalarField running_gain;
  TerminalField terminal_gain;
  InitSampler init_sampler;
  bool init_deterministic = true;
  GrowthBounds bounds;
  std::optional<Likelihood> likelihood;
  /// Coordinates summarized by filter features. Empty means every coordinate
  /// except the likelihood one.
  std::vector<int> feature_coords;
};

struct ControlGrid {
  std::vector<Control> points;
  std::vector<double> weights;
  int anchor = 0;
  double total_mass = 0.0;

  int size() const { return static_cast<int>(points.size()); }
  int dim() const { return points.empty() ? 0 : static_cast<int>(points.front().size()); }
  const Control& anchor_point() const { return points[anchor]; }
};

struct TimeGrid {
  std::vector<double> knots;

  int steps() const { return static_cast<int>(knots.size()) - 1; }
  double horizon() const { return knots.back(); }
  double dt(int k) const { return knots[k + 1] - knots[k]; }
  /// Index k with knots[k] <= t < knots[k+1]; the last interval is closed.
  int interval(double t) const;
};

TimeGrid make_uniform_grid(double horizon, int steps);
TimeGrid make_time_grid(std::vector<double> knots);

ControlGrid make_control_grid(std::vector<Control> points, std::vector<double> weights,
                              int anchor);
/// Scalar controls with equal weights summing to total_mass.
ControlGrid make_scalar_grid(const std::vector<double>& values, double total_mass, int anchor);
/// Same points and anchor, weights scaled so that they sum to total_mass.
ControlGrid with_total_mass(const ControlGrid& grid, double total_mass);

/// Shape and sanity checks by probing every coefficient at (0, 0, a_j).
void validate_spec(const ProblemSpec& spec, const ControlGrid& grid);

struct LipschitzReport {
  double max_ratio = 0.0;
  int violations = 0;
  int probes = 0;
};
/// Sampled check of the declared drift Lipschitz constant on the unit ball.
/// Advisory: callers decide whether violations matter.
LipschitzReport sampled_lipschitz_check(const ProblemSpec& spec, const ControlGrid& grid,
                                        std::uint64_t seed, int pairs = 100);

std::vector<int> feature_coordinates(const ProblemSpec& spec);

// Single-point conveniences.
Eigen::VectorXd eval_drift(const ProblemSpec& spec, double t, const Eigen::VectorXd& x,
                           const Control& a);
Eigen::MatrixXd eval_diff_v(const ProblemSpec& spec, double t, const Eigen::VectorXd& x,
                            const Control& a);
Eigen::MatrixXd eval_diff_w(const ProblemSpec& spec, double t, const Eigen::VectorXd& x,
                            const Control& a);
double eval_running_gain(const ProblemSpec& spec, double t, const Eigen::VectorXd& x,
                         const Control& a);
double eval_terminal_gain(const ProblemSpec& spec, const Eigen::VectorXd& x);
Eigen::VectorXd sample_initial(const ProblemSpec& spec, CounterRng& rng);

// ---------------------------------------------------------------------------
// Reference-measure builders for partially observed problems.

/// Observation process dO = h dt + k dW_bar under the physical law, with the
/// state X_bar coefficients depending on (X_bar, O). Blocks passed to the raw
/// coefficients stack X_bar over O.
struct RawClassicalSpec {
  std::string name = "classical";
  int dim_xbar = 1;
  int dim_v = 0;
  int dim_w = 1;
  double horizon = 1.0;
  VectorField bbar;    // n_bar
  VectorField h;       // d
  VectorField sigma1;  // n_bar x m
  VectorField sigma2;  // n_bar x d
  std::function<void(double t, StateBlock o, Eigen::MatrixXd& out)> k;  // d x d
  ScalarField fbar;
  TerminalField gbar;
  InitSampler init_xbar;  // n_bar
  bool init_deterministic = true;
  Eigen::VectorXd o0;
  double kinv_h_bound = 0.0;
  GrowthBounds bounds;
};

/// Builds the spec over (X_bar, O, Z) under the reference law.
ProblemSpec build_classical_po_problem(const RawClassicalSpec& raw);

/// Latent factor M (not observed) with uncontrolled observation O. Raw state
/// blocks stack X_bar, M, O; the M-only coefficients receive M, h receives
/// (M, O) and k receives O.
struct RawLatentSpec {
  std::string name = "latent";
  int dim_xbar = 1;
  int dim_m = 1;
  int dim_v = 1;
  int dim_w = 1;
  double horizon = 1.0;
  VectorField bbar;
  VectorField sigma1;
  VectorField sigma2;
  std::function<void(double t, StateBlock m, Eigen::MatrixXd& out)> beta;
  std::function<void(double t, StateBlock m, Eigen::MatrixXd& out)> gamma1;
  std::function<void(double t, StateBlock m, Eigen::MatrixXd& out)> gamma2;
  std::function<void(double t, StateBlock mo, Eigen::MatrixXd& out)> h;
  std::function<void(double t, StateBlock o, Eigen::MatrixXd& out)> k;
  ScalarField fbar;
  TerminalField gbar;
  InitSampler init_xbar_m;  // n_bar + m_bar
  bool init_deterministic = true;
  Eigen::VectorXd o0;
  double kinv_h_bound = 0.0;
  GrowthBounds bounds;
};

/// Builds the spec over (X_bar, M, O, Z) under the reference law.
ProblemSpec build_latent_factor_problem(const RawLatentSpec& raw);

}  // namespace rbsd
