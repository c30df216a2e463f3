#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "rbsd/model.hpp"
#include "rbsd/randomizer.hpp"

namespace rbsd {

/// Scratch buffers for euler_step; reuse across calls to avoid allocation.
struct EulerWorkspace {
  Eigen::MatrixXd drift, dv, dw, rate;
  Eigen::RowVectorXd z;
};

/// One Euler-Maruyama step of every column of x over [t, t + dt] with a
/// shared observed increment dw (d) and per-column unobserved increments dv
/// (m x B). A likelihood coordinate, if present, is advanced by the exact
/// exponential of c . dw - |c|^2 dt / 2 with c frozen at the left point.
void euler_step(const ProblemSpec& spec, double t, double dt, const Control& a,
                Eigen::MatrixXd& x, const Eigen::VectorXd& dw, const Eigen::MatrixXd& dv,
                EulerWorkspace& ws);

/// Blow-up threshold on |x|_inf.
inline constexpr double kBlowUp = 1e8;

/// Receives the observed side of a simulation: Euler pieces with their shared
/// W increment, and every knot with the control in force from that knot on
/// (the last control for the final knot).
class PathObserver {
 public:
  virtual ~PathObserver() = default;
  virtual void segment(double t0, double t1, const Control& a, const Eigen::VectorXd& dw) = 0;
  virtual void knot(int k, double t, const Control& a) = 0;
  /// Observed features at the latest knot, if the observer computes any.
  virtual const Eigen::VectorXd* features() const { return nullptr; }
};

enum class MarkLaw { kReference, kControlled };

struct PathOptions {
  MarkLaw law = MarkLaw::kReference;
  /// Intensity of the controlled law; under the reference law a non-null nu
  /// switches on the computation of kappa_T^nu.
  const IntensityControl* nu = nullptr;
  /// Redraw I uniformly at every knot before T (coverage device).
  bool resample_marks = false;
  bool simulate_state = true;
  bool keep_arrays = true;
  PathObserver* observer = nullptr;
};

struct MarkedPath {
  TimeGrid grid;
  Eigen::MatrixXd x;            // (N+1) x n, state at knots
  std::vector<int> i_idx;       // I at knots (after any resampling)
  std::vector<int> i_arrival;   // I just before each knot
  Eigen::MatrixXd w_inc;        // N x d
  Eigen::MatrixXd v_inc;        // N x m
  JumpRecord jumps;
  double kappa_T = 1.0;
  double log_kappa_T = 0.0;
  /// int f(s, X_s, I_s) ds over the Euler pieces (left point) + g(X_T).
  double gain = 0.0;
  bool valid = true;
  double bad_time = std::numeric_limits<double>::quiet_NaN();
};

/// Streams used by path index `index`: marks, knot Brownian increments (d
/// normals for W then m for V per step), bridge splits of those increments at
/// jump times, initial state and mark resampling. Paths that differ only in
/// their marks therefore share every knot increment.
MarkedPath simulate_randomized_path(const ProblemSpec& spec, const ControlGrid& grid,
                                    const TimeGrid& tgrid, std::uint64_t seed,
                                    std::uint64_t index, const PathOptions& options = {});

/// What a feedback policy may see at knot k: the observed increments so far
/// and optional filter features. Never V or X.
struct Observation {
  int step = 0;
  double t = 0.0;
  const Eigen::MatrixXd* w_increments = nullptr;  // first `step` rows are filled
  const Eigen::VectorXd* features = nullptr;
};

class FeedbackPolicy {
 public:
  virtual ~FeedbackPolicy() = default;
  virtual Control act(const Observation& obs) = 0;
  /// Fresh copy with independent state, one per worker.
  virtual std::unique_ptr<FeedbackPolicy> clone() const = 0;
};

struct PrimalPath {
  Eigen::MatrixXd x;          // (N+1) x n
  std::vector<Control> controls;
  Eigen::MatrixXd w_inc;      // N x d
  /// sum_k f(t_k, X_k, alpha_k) dt_k + g(X_T)
  double gain = 0.0;
  bool valid = true;
  double bad_time = std::numeric_limits<double>::quiet_NaN();
};

PrimalPath simulate_primal_path(const ProblemSpec& spec, FeedbackPolicy& policy,
                                const TimeGrid& tgrid, std::uint64_t seed, std::uint64_t index,
                                PathObserver* observer = nullptr);

/// Row-major float64 dump: 32-byte header ("RBSD", then uint32 version, N, n,
/// d, m and a uint64 path count) then x, w_inc, v_inc, i_idx (as float64) for each path.
void write_path_dump(const std::string& file, const std::vector<MarkedPath>& paths);

}  // namespace rbsd
