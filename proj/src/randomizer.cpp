#include "rbsd/randomizer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "rbsd/errors.hpp"

namespace rbsd {

std::size_t JumpRecord::count_upto(double t) const {
  return static_cast<std::size_t>(std::upper_bound(times.begin(), times.end(), t) - times.begin());
}

std::size_t JumpRecord::count_before(double t) const {
  return static_cast<std::size_t>(std::lower_bound(times.begin(), times.end(), t) - times.begin());
}

int JumpRecord::mark_at(double t) const {
  const std::size_t c = count_upto(t);
  return c == 0 ? initial_mark : marks[c - 1];
}

int JumpRecord::mark_before(double t) const {
  const std::size_t c = count_before(t);
  return c == 0 ? initial_mark : marks[c - 1];
}

void JumpRecord::push(double t, int mark) {
  times.push_back(t);
  marks.push_back(mark);
}

FeaturePath FeaturePath::constant(Eigen::VectorXd v) {
  FeaturePath p;
  p.values[0] = std::move(v);
  return p;
}

const Eigen::VectorXd& FeaturePath::left(double t) const {
  const auto c = std::lower_bound(times.begin(), times.end(), t) - times.begin();
  return values[static_cast<std::size_t>(std::max<std::ptrdiff_t>(c - 1, 0))];
}

const Eigen::VectorXd& FeaturePath::right(double t) const {
  const auto c = std::upper_bound(times.begin(), times.end(), t) - times.begin();
  return values[static_cast<std::size_t>(std::max<std::ptrdiff_t>(c - 1, 0))];
}

void FeaturePath::push(double t, Eigen::VectorXd v) {
  if (t <= times.back()) throw ValidationError("feature path times must increase");
  times.push_back(t);
  values.push_back(std::move(v));
}

double IntensityControl::operator()(double t, const HistoryView& history,
                                    const Eigen::VectorXd& features, int j) const {
  const double v = eval(t, history, features, j);
  if (!std::isfinite(v)) {
    std::ostringstream os;
    os << "intensity is not finite at t=" << t << ", control " << j;
    throw NumericError(os.str());
  }
  return std::clamp(v, lower, upper);
}

IntensityControl constant_intensity(double c) {
  IntensityControl nu;
  nu.eval = [c](double, const HistoryView&, const Eigen::VectorXd&, int) { return c; };
  nu.lower = c;
  nu.upper = c;
  return nu;
}

IntensityControl deterministic_intensity(std::function<double(double, int)> value, double lower,
                                         double upper) {
  IntensityControl nu;
  nu.eval = [value = std::move(value)](double t, const HistoryView&, const Eigen::VectorXd&,
                                       int j) { return value(t, j); };
  nu.lower = lower;
  nu.upper = upper;
  return nu;
}

int sample_categorical(const std::vector<double>& cumulative, double u) {
  const double x = u * cumulative.back();
  const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), x);
  return static_cast<int>(std::min<std::ptrdiff_t>(it - cumulative.begin(),
                                                    static_cast<std::ptrdiff_t>(cumulative.size()) - 1));
}

namespace {

std::vector<double> cumulative_weights(const ControlGrid& grid) {
  std::vector<double> c(grid.weights.size());
  double s = 0.0;
  for (std::size_t j = 0; j < c.size(); ++j) c[j] = (s += grid.weights[j]);
  return c;
}

void check_horizon(double horizon) {
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw ValidationError("horizon must be positive");
}

}  // namespace

JumpRecord simulate_marks_poisson(const ControlGrid& grid, double horizon, CounterRng& rng) {
  check_horizon(horizon);
  const auto cum = cumulative_weights(grid);
  JumpRecord rec;
  rec.initial_mark = grid.anchor;
  double t = 0.0;
  for (;;) {
    t += rng.exponential(grid.total_mass);
    if (t > horizon) break;
    rec.push(t, sample_categorical(cum, rng.uniform()));
  }
  return rec;
}

MarkThinner::MarkThinner(const ControlGrid& grid, const IntensityControl& nu, CounterRng& rng)
    : grid_(grid), nu_(nu), rng_(rng), rate_(nu.upper * grid.total_mass),
      cumulative_(cumulative_weights(grid)) {
  if (!(rate_ > 0.0) || !std::isfinite(rate_))
    throw ValidationError("thinning needs a positive finite dominating rate");
  draw_candidate();
}

void MarkThinner::draw_candidate() {
  pending_time_ += rng_.exponential(rate_);
  pending_mark_ = sample_categorical(cumulative_, rng_.uniform());
  pending_accept_ = rng_.uniform();
}

void MarkThinner::advance(double t_end, const Eigen::VectorXd& features, JumpRecord& record) {
  while (pending_time_ <= t_end) {
    const HistoryView h{&record, record.size()};
    const double v = nu_(pending_time_, h, features, pending_mark_);
    if (pending_accept_ * nu_.upper < v) record.push(pending_time_, pending_mark_);
    draw_candidate();
  }
}

JumpRecord simulate_marks_controlled(const ControlGrid& grid, double horizon,
                                     const IntensityControl& nu, const FeaturePath& w_path,
                                     CounterRng& rng) {
  check_horizon(horizon);
  JumpRecord rec;
  rec.initial_mark = grid.anchor;
  MarkThinner thinner(grid, nu, rng);
  for (std::size_t k = 0; k < w_path.times.size(); ++k) {
    const double end = k + 1 < w_path.times.size() ? std::min(w_path.times[k + 1], horizon) : horizon;
    if (end > w_path.times[k] || k == 0) thinner.advance(end, w_path.values[k], rec);
    if (end >= horizon) break;
  }
  return rec;
}

namespace {

double total_rate(const ControlGrid& grid, const IntensityControl& nu, double t,
                  const HistoryView& h, const Eigen::VectorXd& f) {
  double s = 0.0;
  for (int j = 0; j < grid.size(); ++j) s += nu(t, h, f, j) * grid.weights[j];
  return s;
}

}  // namespace

double log_doleans_kappa(const JumpRecord& record, const ControlGrid& grid,
                         const IntensityControl& nu, const FeaturePath& w_path, double t,
                         int substeps) {
  if (t < 0.0) throw ValidationError("kappa time must be nonnegative");
  substeps = std::max(substeps, 1);
  std::vector<double> cuts{0.0, t};
  for (double s : w_path.times)
    if (s > 0.0 && s < t) cuts.push_back(s);
  for (double s : record.times)
    if (s > 0.0 && s < t) cuts.push_back(s);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  double integral = 0.0;
  for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
    const double u0 = cuts[c], u1 = cuts[c + 1];
    const HistoryView h{&record, record.count_upto(u0)};
    const Eigen::VectorXd& f = w_path.right(u0);
    const double width = (u1 - u0) / substeps;
    // Two-point Gauss nodes stay inside the piece, so a left-continuous
    // nu is never read on the wrong side of a break.
    constexpr double kNode = 0.2113248654051871;  // (1 - 1/sqrt(3)) / 2
    for (int s = 0; s < substeps; ++s) {
      const double a = u0 + s * width;
      const double ra = grid.total_mass - total_rate(grid, nu, a + kNode * width, h, f);
      const double rb = grid.total_mass - total_rate(grid, nu, a + (1.0 - kNode) * width, h, f);
      integral += 0.5 * (ra + rb) * width;
    }
  }
  double log_product = 0.0;
  for (std::size_t n = 0; n < record.size() && record.times[n] <= t; ++n) {
    const double s = record.times[n];
    const HistoryView h{&record, n};
    log_product += std::log(nu(s, h, w_path.left(s), record.marks[n]));
  }
  return integral + log_product;
}

double doleans_kappa(const JumpRecord& record, const ControlGrid& grid,
                     const IntensityControl& nu, const FeaturePath& w_path, double t,
                     int substeps) {
  return std::exp(log_doleans_kappa(record, grid, nu, w_path, t, substeps));
}

namespace {

constexpr double kGaussNodes[5] = {0.0, -0.5384693101056831, 0.5384693101056831,
                                   -0.9061798459386640, 0.9061798459386640};
constexpr double kGaussWeights[5] = {0.5688888888888889, 0.4786286704993665, 0.4786286704993665,
                                     0.2369268850561891, 0.2369268850561891};

// (1/Lambda) int_{u}^{x} sum_j nu_s(a_j) lambda_j ds under a fixed history,
// with 5-point Gauss-Legendre on every feature cell.
double theta_increment(const ControlGrid& grid, const IntensityControl& nu, const HistoryView& h,
                       const FeaturePath& w_path, double u, double x) {
  if (x <= u) return 0.0;
  double acc = 0.0;
  double a = u;
  while (a < x) {
    const auto c = std::upper_bound(w_path.times.begin(), w_path.times.end(), a);
    const double b = c == w_path.times.end() ? x : std::min(*c, x);
    const Eigen::VectorXd& f = w_path.right(a);
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    double s = 0.0;
    for (int q = 0; q < 5; ++q) s += kGaussWeights[q] * total_rate(grid, nu, mid + half * kGaussNodes[q], h, f);
    acc += s * half;
    a = b;
  }
  return acc / grid.total_mass;
}

}  // namespace

double timechange_theta1(const ControlGrid& grid, const IntensityControl& nu,
                         const FeaturePath& w_path, double t) {
  JumpRecord empty;
  empty.initial_mark = grid.anchor;
  return theta_increment(grid, nu, HistoryView{&empty, 0}, w_path, 0.0, t);
}

JumpRecord construct_timechange_process(const ControlGrid& grid, double horizon,
                                        const IntensityControl& nu, const JumpRecord& skeleton,
                                        const FeaturePath& w_path, CounterRng& rng) {
  check_horizon(horizon);
  if (!(nu.lower > 0.0) || !(nu.upper >= nu.lower))
    throw ValidationError("time change needs 0 < lower <= upper");
  JumpRecord out;
  out.initial_mark = grid.anchor;
  double prev = 0.0;       // T_{n-1}^nu
  double prev_skel = 0.0;  // T_{n-1}
  std::vector<double> cum(grid.weights.size());
  for (std::size_t n = 0; n < skeleton.size(); ++n) {
    const double gap = skeleton.times[n] - prev_skel;
    const HistoryView h{&out, out.size()};
    if (theta_increment(grid, nu, h, w_path, prev, horizon) < gap) break;
    double lo = prev + gap / nu.upper;
    double hi = std::min(prev + gap / nu.lower, horizon);
    if (lo > hi) lo = hi;
    const double f_lo = theta_increment(grid, nu, h, w_path, prev, lo) - gap;
    const double f_hi = theta_increment(grid, nu, h, w_path, prev, hi) - gap;
    if (f_lo > 1e-12 || f_hi < -1e-12) {
      std::ostringstream os;
      os << "time-change bracket failure at jump " << n << ": [" << lo << ", " << hi
         << "] gives residuals " << f_lo << ", " << f_hi;
      throw NumericError(os.str());
    }
    while (hi - lo > 1e-10) {
      const double mid = 0.5 * (lo + hi);
      if (theta_increment(grid, nu, h, w_path, prev, mid) < gap)
        lo = mid;
      else
        hi = mid;
    }
    const double tn = 0.5 * (lo + hi);
    const Eigen::VectorXd& f = w_path.left(tn);
    double s = 0.0;
    for (int j = 0; j < grid.size(); ++j) cum[j] = (s += nu(tn, h, f, j) * grid.weights[j]);
    out.push(tn, sample_categorical(cum, rng.uniform()));
    prev = tn;
    prev_skel = skeleton.times[n];
  }
  return out;
}

double grid_metric(const ControlGrid& grid, int i, int j) {
  const double d = (grid.points[i] - grid.points[j]).cwiseAbs().maxCoeff();
  return d / (1.0 + d);
}

namespace {

void check_step_control(const ControlGrid& grid, const StepControl& c) {
  if (c.times.empty() || c.times.size() != c.marks.size() || c.times.front() != 0.0)
    throw ValidationError("step control must start at time 0");
  if (c.marks.front() != grid.anchor) throw ValidationError("step control must start at the anchor");
  for (std::size_t i = 1; i < c.times.size(); ++i)
    if (!(c.times[i] > c.times[i - 1])) throw ValidationError("step control times must increase");
  for (int m : c.marks)
    if (m < 0 || m >= grid.size()) throw ValidationError("step control mark out of range");
}

double ball_mass(const ControlGrid& grid, int center, int m) {
  double s = 0.0;
  for (int j = 0; j < grid.size(); ++j)
    if (grid_metric(grid, center, j) < 1.0 / m) s += grid.weights[j];
  return s;
}

}  // namespace

PerturbedProcess construct_perturbed_process(const ControlGrid& grid, const StepControl& control,
                                             int m, int k, double horizon, CounterRng& rng) {
  check_horizon(horizon);
  check_step_control(grid, control);
  if (m < 1 || k < 1) throw ValidationError("m and k must be at least 1");

  PerturbedProcess out;
  out.delayed.initial_mark = grid.anchor;
  out.poisson.initial_mark = grid.anchor;
  out.merged.initial_mark = grid.anchor;

  double delay = 0.0;
  std::vector<double> cum(grid.weights.size());
  for (std::size_t n = 1; n < control.times.size(); ++n) {
    delay += rng.exponential(static_cast<double>(m) * std::ldexp(1.0, static_cast<int>(std::min<std::size_t>(n, 1000))));
    const double u = rng.uniform();
    const int alpha = control.marks[n];
    double s = 0.0;
    for (int j = 0; j < grid.size(); ++j)
      cum[j] = (s += grid_metric(grid, alpha, j) < 1.0 / m ? grid.weights[j] : 0.0);
    if (!(s > 0.0)) throw ValidationError("empty neighbourhood in the perturbed construction");
    const double r = control.times[n] + delay;
    if (r <= horizon) out.delayed.push(r, sample_categorical(cum, u));
  }

  ControlGrid thin = with_total_mass(grid, grid.total_mass / k);
  out.poisson = simulate_marks_poisson(thin, horizon, rng);

  std::size_t a = 0, b = 0;
  while (a < out.delayed.size() || b < out.poisson.size()) {
    const bool take_a = b >= out.poisson.size() ||
                        (a < out.delayed.size() && out.delayed.times[a] < out.poisson.times[b]);
    if (take_a) {
      out.merged.push(out.delayed.times[a], out.delayed.marks[a]);
      ++a;
    } else {
      out.merged.push(out.poisson.times[b], out.poisson.marks[b]);
      ++b;
    }
  }
  return out;
}

CompensatorBounds perturbed_compensator_bounds(const ControlGrid& grid,
                                               const StepControl& control, int m, int k) {
  check_step_control(grid, control);
  CompensatorBounds b;
  b.lower = 1.0 / k;
  double peak = 0.0;
  for (std::size_t n = 1; n < control.times.size(); ++n) {
    const double rate = static_cast<double>(m) * std::ldexp(1.0, static_cast<int>(n));
    peak = std::max(peak, rate / ball_mass(grid, control.marks[n], m));
  }
  b.upper = b.lower + peak;
  return b;
}

double control_distance(const ControlGrid& grid, const JumpRecord& record,
                        const StepControl& control, double horizon) {
  std::vector<double> cuts{0.0, horizon};
  for (double s : record.times)
    if (s < horizon) cuts.push_back(s);
  for (double s : control.times)
    if (s > 0.0 && s < horizon) cuts.push_back(s);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  double acc = 0.0;
  for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
    const double u = cuts[c];
    const auto it = std::upper_bound(control.times.begin(), control.times.end(), u);
    const int target = control.marks[static_cast<std::size_t>(it - control.times.begin()) - 1];
    acc += grid_metric(grid, record.mark_at(u), target) * (cuts[c + 1] - u);
  }
  return acc;
}

}  // namespace rbsd
