#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "rbsd/model.hpp"
#include "rbsd/rng.hpp"

namespace rbsd {

/// Marked point process on (0, horizon]. I_t is the mark of the last jump at
/// or before t, and initial_mark before the first jump.
struct JumpRecord {
  std::vector<double> times;
  std::vector<int> marks;
  int initial_mark = 0;

  std::size_t size() const { return times.size(); }
  /// Number of jumps at or before t.
  std::size_t count_upto(double t) const;
  /// Number of jumps strictly before t.
  std::size_t count_before(double t) const;
  int mark_at(double t) const;
  int mark_before(double t) const;
  void push(double t, int mark);
};

/// First `count` jumps of a record: the information available to a
/// predictable intensity.
struct HistoryView {
  const JumpRecord* record = nullptr;
  std::size_t count = 0;

  int current_mark() const {
    return count == 0 ? record->initial_mark : record->marks[count - 1];
  }
};

/// Piecewise-constant observed features: values[k] holds on
/// (times[k], times[k+1]] and values[0] also at times[0]. The last value
/// extends to +infinity.
struct FeaturePath {
  std::vector<double> times{0.0};
  std::vector<Eigen::VectorXd> values{Eigen::VectorXd()};

  static FeaturePath constant(Eigen::VectorXd v);
  /// Value on a left neighbourhood (t - eps, t).
  const Eigen::VectorXd& left(double t) const;
  /// Value on a right neighbourhood (t, t + eps).
  const Eigen::VectorXd& right(double t) const;
  void push(double t, Eigen::VectorXd v);
};

/// Bounded positive intensity field nu_t(a_j), clamped to [lower, upper].
struct IntensityControl {
  std::function<double(double t, const HistoryView& history, const Eigen::VectorXd& features,
                       int j)>
      eval;
  double lower = 1.0;
  double upper = 1.0;

  /// Clamped value; throws NumericError when eval is not finite.
  double operator()(double t, const HistoryView& history, const Eigen::VectorXd& features,
                    int j) const;
};

IntensityControl constant_intensity(double c);
/// nu_t(a_j) = value(t, j), clamped to [lower, upper].
IntensityControl deterministic_intensity(std::function<double(double t, int j)> value,
                                         double lower, double upper);

JumpRecord simulate_marks_poisson(const ControlGrid& grid, double horizon, CounterRng& rng);

/// Thinning sampler for a controlled intensity, advanced interval by interval.
/// Candidates come from a Poisson process of rate upper * Lambda; each
/// consumes a gap variate, a mark variate and an acceptance variate, so the
/// result does not depend on how the horizon is chunked.
class MarkThinner {
 public:
  MarkThinner(const ControlGrid& grid, const IntensityControl& nu, CounterRng& rng);
  /// Appends accepted jumps in (current, t_end] using `features` on that
  /// interval.
  void advance(double t_end, const Eigen::VectorXd& features, JumpRecord& record);

 private:
  void draw_candidate();

  const ControlGrid& grid_;
  const IntensityControl& nu_;
  CounterRng& rng_;
  double rate_;
  double pending_time_ = 0.0;
  int pending_mark_ = 0;
  double pending_accept_ = 0.0;
  std::vector<double> cumulative_;
};

JumpRecord simulate_marks_controlled(const ControlGrid& grid, double horizon,
                                     const IntensityControl& nu, const FeaturePath& w_path,
                                     CounterRng& rng);

/// Logarithm of the Doleans exponential at time t. The time integral uses
/// two-point Gauss on the pieces between feature breakpoints and jump times
/// (each cut into `substeps` equal parts). The nodes are interior, so the rule
/// is exact when nu is affine in time between breakpoints.
double log_doleans_kappa(const JumpRecord& record, const ControlGrid& grid,
                         const IntensityControl& nu, const FeaturePath& w_path, double t,
                         int substeps = 1);
double doleans_kappa(const JumpRecord& record, const ControlGrid& grid,
                     const IntensityControl& nu, const FeaturePath& w_path, double t,
                     int substeps = 1);

/// Inversion construction: maps a rate-Lambda Poisson skeleton to a process
/// with intensity nu lambda by solving theta^(n)(T_n^nu) = T_n. The skeleton
/// must cover (0, upper * horizon]. Marks use one uniform each from `rng`.
JumpRecord construct_timechange_process(const ControlGrid& grid, double horizon,
                                        const IntensityControl& nu, const JumpRecord& skeleton,
                                        const FeaturePath& w_path, CounterRng& rng);

/// Cumulative map theta^(1)(t) of the first layer, for law checks.
double timechange_theta1(const ControlGrid& grid, const IntensityControl& nu,
                         const FeaturePath& w_path, double t);

/// Index j with cumulative[j-1] <= u * cumulative.back() < cumulative[j].
int sample_categorical(const std::vector<double>& cumulative, double u);

/// Piecewise-constant control: marks[i] holds on [times[i], times[i+1]),
/// times[0] = 0 and marks[0] is the anchor.
struct StepControl {
  std::vector<double> times{0.0};
  std::vector<int> marks{0};
};

/// rho(a, b) = |a - b|_inf / (1 + |a - b|_inf) on grid points.
double grid_metric(const ControlGrid& grid, int i, int j);

struct PerturbedProcess {
  JumpRecord merged;
  JumpRecord delayed;  // jumps at R_n with marks drawn near alpha_n
  JumpRecord poisson;  // independent superposed part of rate Lambda / k
};

/// Delayed-jump approximation of a step control plus an independent Poisson
/// measure with intensity lambda / k.
PerturbedProcess construct_perturbed_process(const ControlGrid& grid, const StepControl& control,
                                             int m, int k, double horizon, CounterRng& rng);

struct CompensatorBounds {
  double lower = 0.0;  // density w.r.t. lambda(da) dt
  double upper = 0.0;
};
CompensatorBounds perturbed_compensator_bounds(const ControlGrid& grid,
                                               const StepControl& control, int m, int k);

/// int_0^T rho(I_t, alpha_t) dt along one realization.
double control_distance(const ControlGrid& grid, const JumpRecord& record,
                        const StepControl& control, double horizon);

}  // namespace rbsd
