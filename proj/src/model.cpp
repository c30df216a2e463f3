#include "rbsd/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "rbsd/errors.hpp"

namespace rbsd {

int TimeGrid::interval(double t) const {
  const auto it = std::upper_bound(knots.begin(), knots.end(), t);
  int k = static_cast<int>(it - knots.begin()) - 1;
  return std::clamp(k, 0, steps() - 1);
}

TimeGrid make_uniform_grid(double horizon, int steps) {
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw ValidationError("horizon must be positive");
  if (steps < 1) throw ValidationError("steps must be at least 1");
  TimeGrid g;
  g.knots.resize(steps + 1);
  for (int k = 0; k <= steps; ++k) g.knots[k] = horizon * k / steps;
  g.knots.back() = horizon;
  return g;
}

TimeGrid make_time_grid(std::vector<double> knots) {
  if (knots.size() < 2) throw ValidationError("time grid needs at least two knots");
  if (knots.front() != 0.0) throw ValidationError("time grid must start at 0");
  for (std::size_t i = 1; i < knots.size(); ++i)
    if (!(knots[i] > knots[i - 1])) throw ValidationError("time grid must be strictly increasing");
  return TimeGrid{std::move(knots)};
}

ControlGrid make_control_grid(std::vector<Control> points, std::vector<double> weights,
                              int anchor) {
  if (points.empty()) throw ValidationError("control grid is empty");
  if (points.size() != weights.size()) throw ValidationError("one weight per control point");
  const auto q = points.front().size();
  for (const auto& p : points) {
    if (p.size() != q || q == 0) throw ValidationError("control points must share a positive width");
    if (!p.allFinite()) throw ValidationError("control point is not finite");
  }
  for (double w : weights)
    if (!(w > 0.0) || !std::isfinite(w)) throw ValidationError("control weights must be positive");
  if (anchor < 0 || anchor >= static_cast<int>(points.size()))
    throw ValidationError("anchor index out of range");
  ControlGrid g;
  g.points = std::move(points);
  g.weights = std::move(weights);
  g.anchor = anchor;
  g.total_mass = std::accumulate(g.weights.begin(), g.weights.end(), 0.0);
  return g;
}

ControlGrid make_scalar_grid(const std::vector<double>& values, double total_mass, int anchor) {
  if (!(total_mass > 0.0)) throw ValidationError("total mass must be positive");
  std::vector<Control> pts;
  for (double v : values) pts.push_back(Control::Constant(1, v));
  std::vector<double> w(values.size(), total_mass / std::max<std::size_t>(1, values.size()));
  return make_control_grid(std::move(pts), std::move(w), anchor);
}

ControlGrid with_total_mass(const ControlGrid& grid, double total_mass) {
  if (!(total_mass > 0.0)) throw ValidationError("total mass must be positive");
  std::vector<double> w = grid.weights;
  for (double& x : w) x *= total_mass / grid.total_mass;
  return make_control_grid(grid.points, std::move(w), grid.anchor);
}

std::vector<int> feature_coordinates(const ProblemSpec& spec) {
  if (!spec.feature_coords.empty()) return spec.feature_coords;
  std::vector<int> c;
  for (int i = 0; i < spec.dim_x; ++i)
    if (!spec.likelihood || spec.likelihood->z_index != i) c.push_back(i);
  return c;
}

namespace {

void expect_shape(const Eigen::MatrixXd& m, Eigen::Index rows, Eigen::Index cols,
                  const char* what, int j) {
  if (m.rows() != rows || m.cols() != cols) {
    std::ostringstream os;
    os << what << " returned " << m.rows() << "x" << m.cols() << " at control " << j
       << ", expected " << rows << "x" << cols;
    throw ValidationError(os.str());
  }
}

}  // namespace

void validate_spec(const ProblemSpec& spec, const ControlGrid& grid) {
  if (spec.dim_x < 1 || spec.dim_v < 0 || spec.dim_w < 0)
    throw ValidationError("invalid dimensions");
  if (!(spec.horizon > 0.0) || !std::isfinite(spec.horizon))
    throw ValidationError("horizon must be positive");
  if (!spec.drift || !spec.diff_v || !spec.diff_w || !spec.running_gain ||
      !spec.terminal_gain || !spec.init_sampler)
    throw ValidationError("problem spec has a missing coefficient");
  if (spec.likelihood) {
    if (spec.likelihood->z_index < 0 || spec.likelihood->z_index >= spec.dim_x)
      throw ValidationError("likelihood coordinate out of range");
    if (!spec.likelihood->rate) throw ValidationError("likelihood rate missing");
  }
  for (int c : spec.feature_coords)
    if (c < 0 || c >= spec.dim_x) throw ValidationError("feature coordinate out of range");
  if (grid.size() < 1) throw ValidationError("control grid is empty");

  const int n = spec.dim_x;
  const Eigen::MatrixXd x0 = Eigen::MatrixXd::Zero(n, 1);
  Eigen::MatrixXd out;
  Eigen::VectorXd g;
  for (int j = 0; j < grid.size(); ++j) {
    const Control& a = grid.points[j];
    spec.drift(0.0, x0, a, out);
    expect_shape(out, n, 1, "drift", j);
    spec.diff_v(0.0, x0, a, out);
    expect_shape(out, static_cast<Eigen::Index>(n) * spec.dim_v, 1, "diff_v", j);
    spec.diff_w(0.0, x0, a, out);
    expect_shape(out, static_cast<Eigen::Index>(n) * spec.dim_w, 1, "diff_w", j);
    spec.running_gain(0.0, x0, a, g);
    if (g.size() != 1) throw ValidationError("running gain must return one value per point");
    if (spec.likelihood) {
      spec.likelihood->rate(0.0, x0, a, out);
      expect_shape(out, spec.dim_w, 1, "likelihood rate", j);
    }
  }
  spec.terminal_gain(x0, g);
  if (g.size() != 1) throw ValidationError("terminal gain must return one value per point");
}

LipschitzReport sampled_lipschitz_check(const ProblemSpec& spec, const ControlGrid& grid,
                                        std::uint64_t seed, int pairs) {
  LipschitzReport rep;
  CounterRng rng(seed, stream_id(0, Stream::kAux));
  const int n = spec.dim_x;
  Eigen::MatrixXd x(n, 1), y(n, 1), bx, by;
  auto unit_ball = [&](Eigen::MatrixXd& p) {
    for (int i = 0; i < n; ++i) p(i, 0) = rng.normal();
    const double r = std::pow(rng.uniform(), 1.0 / n);
    p *= r / std::max(p.norm(), 1e-300);
  };
  for (int s = 0; s < pairs; ++s) {
    unit_ball(x);
    unit_ball(y);
    const double dx = (x - y).cwiseAbs().maxCoeff();
    if (dx == 0.0) continue;
    for (int j = 0; j < grid.size(); ++j) {
      spec.drift(0.0, x, grid.points[j], bx);
      spec.drift(0.0, y, grid.points[j], by);
      const double ratio = (bx - by).cwiseAbs().maxCoeff() / dx;
      rep.max_ratio = std::max(rep.max_ratio, ratio);
      ++rep.probes;
      if (ratio > 1.01 * spec.bounds.lipschitz) ++rep.violations;
    }
  }
  return rep;
}

Eigen::VectorXd eval_drift(const ProblemSpec& spec, double t, const Eigen::VectorXd& x,
                           const Control& a) {
  Eigen::MatrixXd out;
  spec.drift(t, x, a, out);
  return out.col(0);
}

Eigen::MatrixXd eval_diff_v(const ProblemSpec& spec, double t, const Eigen::VectorXd& x,
                            const Control& a) {
  Eigen::MatrixXd out;
  spec.diff_v(t, x, a, out);
  return Eigen::Map<const Eigen::MatrixXd>(out.data(), spec.dim_x, spec.dim_v);
}

Eigen::MatrixXd eval_diff_w(const ProblemSpec& spec, double t, const Eigen::VectorXd& x,
                            const Control& a) {
  Eigen::MatrixXd out;
  spec.diff_w(t, x, a, out);
  return Eigen::Map<const Eigen::MatrixXd>(out.data(), spec.dim_x, spec.dim_w);
}

double eval_running_gain(const ProblemSpec& spec, double t, const Eigen::VectorXd& x,
                         const Control& a) {
  Eigen::VectorXd out;
  spec.running_gain(t, x, a, out);
  return out(0);
}

double eval_terminal_gain(const ProblemSpec& spec, const Eigen::VectorXd& x) {
  Eigen::VectorXd out;
  spec.terminal_gain(x, out);
  return out(0);
}

Eigen::VectorXd sample_initial(const ProblemSpec& spec, CounterRng& rng) {
  Eigen::VectorXd x(spec.dim_x);
  spec.init_sampler(rng, x);
  return x;
}

// ---------------------------------------------------------------------------

namespace {

// c = k^{-1} h column by column; k is packed (d*d) x B.
void solve_kinv_h(const Eigen::MatrixXd& k, const Eigen::MatrixXd& h, int d, Eigen::MatrixXd& c) {
  const Eigen::Index B = h.cols();
  c.resize(d, B);
  if (d == 1) {
    c = h.array() / k.array();
    return;
  }
  for (Eigen::Index i = 0; i < B; ++i) {
    Eigen::Map<const Eigen::MatrixXd> ki(k.col(i).data(), d, d);
    c.col(i) = ki.partialPivLu().solve(h.col(i));
  }
}

// out.topRows(rows) -= sigma2 * c per column, sigma2 packed (rows*d) x B.
void subtract_sigma2_c(const Eigen::MatrixXd& sigma2, const Eigen::MatrixXd& c, int rows,
                       int d, Eigen::Ref<Eigen::MatrixXd> out) {
  for (int l = 0; l < d; ++l)
    out.array() -= sigma2.middleRows(static_cast<Eigen::Index>(l) * rows, rows).array() *
                   c.row(l).replicate(rows, 1).array();
}

void check_bound(double bound) {
  if (!(bound > 0.0) || !std::isfinite(bound))
    throw ValidationError("declared bound on k^{-1}h must be positive and finite");
}

}  // namespace

ProblemSpec build_classical_po_problem(const RawClassicalSpec& raw) {
  check_bound(raw.kinv_h_bound);
  if (raw.dim_xbar < 1 || raw.dim_w < 1 || raw.dim_v < 0)
    throw ValidationError("classical spec needs n_bar >= 1 and d >= 1");
  if (!raw.bbar || !raw.h || !raw.sigma1 || !raw.sigma2 || !raw.k || !raw.fbar || !raw.gbar ||
      !raw.init_xbar)
    throw ValidationError("classical spec has a missing coefficient");
  if (raw.o0.size() != raw.dim_w) throw ValidationError("o0 must have dimension d");

  const int nb = raw.dim_xbar, d = raw.dim_w, m = raw.dim_v;
  const int ny = nb + d;
  const int n = ny + 1;
  const int zi = ny;

  // With Z last, the raw coefficients see the top block (X_bar; O) of every
  // column without a copy.
  auto rate = [raw, nb, d](double t, StateBlock x, const Control& a, Eigen::MatrixXd& c) {
    thread_local Eigen::MatrixXd h, k;
    raw.h(t, x.topRows(nb + d), a, h);
    raw.k(t, x.middleRows(nb, d), k);
    solve_kinv_h(k, h, d, c);
  };

  ProblemSpec s;
  s.name = raw.name;
  s.dim_x = n;
  s.dim_v = m;
  s.dim_w = d;
  s.horizon = raw.horizon;
  s.bounds = raw.bounds;
  s.init_deterministic = raw.init_deterministic;
  s.likelihood = Likelihood{zi, rate, raw.kinv_h_bound};

  s.drift = [raw, rate, nb, d, ny, n](double t, StateBlock x, const Control& a,
                                      Eigen::MatrixXd& out) {
    thread_local Eigen::MatrixXd b, s2, c;
    const auto y = x.topRows(ny);
    raw.bbar(t, y, a, b);
    raw.sigma2(t, y, a, s2);
    rate(t, x, a, c);
    out.setZero(n, x.cols());
    out.topRows(nb) = b;
    subtract_sigma2_c(s2, c, nb, d, out.topRows(nb));
  };
  s.diff_v = [raw, nb, ny, n, m](double t, StateBlock x, const Control& a,
                                 Eigen::MatrixXd& out) {
    thread_local Eigen::MatrixXd s1;
    out.setZero(static_cast<Eigen::Index>(n) * m, x.cols());
    if (m == 0) return;
    raw.sigma1(t, x.topRows(ny), a, s1);
    for (int l = 0; l < m; ++l)
      out.middleRows(static_cast<Eigen::Index>(l) * n, nb) =
          s1.middleRows(static_cast<Eigen::Index>(l) * nb, nb);
  };
  s.diff_w = [raw, rate, nb, n, d, ny, zi](double t, StateBlock x, const Control& a,
                                           Eigen::MatrixXd& out) {
    thread_local Eigen::MatrixXd s2, k, c;
    raw.sigma2(t, x.topRows(ny), a, s2);
    raw.k(t, x.middleRows(nb, d), k);
    rate(t, x, a, c);
    out.setZero(static_cast<Eigen::Index>(n) * d, x.cols());
    for (int l = 0; l < d; ++l) {
      const Eigen::Index base = static_cast<Eigen::Index>(l) * n;
      out.middleRows(base, nb) = s2.middleRows(static_cast<Eigen::Index>(l) * nb, nb);
      for (int r = 0; r < d; ++r)
        out.row(base + nb + r) = k.row(static_cast<Eigen::Index>(l) * d + r);
      out.row(base + zi) = x.row(zi).array() * c.row(l).array();
    }
  };
  s.running_gain = [raw, ny, zi](double t, StateBlock x, const Control& a, Eigen::VectorXd& out) {
    raw.fbar(t, x.topRows(ny), a, out);
    out.array() *= x.row(zi).transpose().array();
  };
  s.terminal_gain = [raw, ny, zi](StateBlock x, Eigen::VectorXd& out) {
    raw.gbar(x.topRows(ny), out);
    out.array() *= x.row(zi).transpose().array();
  };
  s.init_sampler = [raw, nb, d, zi](CounterRng& rng, Eigen::Ref<Eigen::VectorXd> x0) {
    raw.init_xbar(rng, x0.head(nb));
    x0.segment(nb, d) = raw.o0;
    x0(zi) = 1.0;
  };
  return s;
}

ProblemSpec build_latent_factor_problem(const RawLatentSpec& raw) {
  check_bound(raw.kinv_h_bound);
  if (raw.dim_xbar < 1 || raw.dim_m < 1 || raw.dim_w < 1 || raw.dim_v < 0)
    throw ValidationError("latent spec needs n_bar, m_bar, d >= 1");
  if (!raw.bbar || !raw.sigma1 || !raw.sigma2 || !raw.beta || !raw.gamma1 || !raw.gamma2 ||
      !raw.h || !raw.k || !raw.fbar || !raw.gbar || !raw.init_xbar_m)
    throw ValidationError("latent spec has a missing coefficient");
  if (raw.o0.size() != raw.dim_w) throw ValidationError("o0 must have dimension d");

  const int nb = raw.dim_xbar, mb = raw.dim_m, d = raw.dim_w, m = raw.dim_v;
  const int ny = nb + mb + d;
  const int n = ny + 1;
  const int zi = ny;

  auto rate = [raw, nb, mb, d](double t, StateBlock x, const Control&, Eigen::MatrixXd& c) {
    thread_local Eigen::MatrixXd h, k;
    raw.h(t, x.middleRows(nb, mb + d), h);
    raw.k(t, x.middleRows(nb + mb, d), k);
    solve_kinv_h(k, h, d, c);
  };

  ProblemSpec s;
  s.name = raw.name;
  s.dim_x = n;
  s.dim_v = m;
  s.dim_w = d;
  s.horizon = raw.horizon;
  s.bounds = raw.bounds;
  s.init_deterministic = raw.init_deterministic;
  s.likelihood = Likelihood{zi, rate, raw.kinv_h_bound};

  s.drift = [raw, rate, nb, mb, d, ny, n](double t, StateBlock x, const Control& a,
                                          Eigen::MatrixXd& out) {
    thread_local Eigen::MatrixXd b, s2, be, g2, c;
    const auto y = x.topRows(ny);
    raw.bbar(t, y, a, b);
    raw.sigma2(t, y, a, s2);
    raw.beta(t, x.middleRows(nb, mb), be);
    raw.gamma2(t, x.middleRows(nb, mb), g2);
    rate(t, x, a, c);
    out.setZero(n, x.cols());
    out.topRows(nb) = b;
    subtract_sigma2_c(s2, c, nb, d, out.topRows(nb));
    out.middleRows(nb, mb) = be;
    subtract_sigma2_c(g2, c, mb, d, out.middleRows(nb, mb));
  };
  s.diff_v = [raw, nb, mb, ny, n, m](double t, StateBlock x, const Control& a,
                                     Eigen::MatrixXd& out) {
    thread_local Eigen::MatrixXd s1, g1;
    out.setZero(static_cast<Eigen::Index>(n) * m, x.cols());
    if (m == 0) return;
    raw.sigma1(t, x.topRows(ny), a, s1);
    raw.gamma1(t, x.middleRows(nb, mb), g1);
    for (int l = 0; l < m; ++l) {
      const Eigen::Index base = static_cast<Eigen::Index>(l) * n;
      out.middleRows(base, nb) = s1.middleRows(static_cast<Eigen::Index>(l) * nb, nb);
      out.middleRows(base + nb, mb) = g1.middleRows(static_cast<Eigen::Index>(l) * mb, mb);
    }
  };
  s.diff_w = [raw, rate, nb, mb, d, ny, n, zi](double t, StateBlock x, const Control& a,
                                               Eigen::MatrixXd& out) {
    thread_local Eigen::MatrixXd s2, g2, k, c;
    raw.sigma2(t, x.topRows(ny), a, s2);
    raw.gamma2(t, x.middleRows(nb, mb), g2);
    raw.k(t, x.middleRows(nb + mb, d), k);
    rate(t, x, a, c);
    out.setZero(static_cast<Eigen::Index>(n) * d, x.cols());
    for (int l = 0; l < d; ++l) {
      const Eigen::Index base = static_cast<Eigen::Index>(l) * n;
      out.middleRows(base, nb) = s2.middleRows(static_cast<Eigen::Index>(l) * nb, nb);
      out.middleRows(base + nb, mb) = g2.middleRows(static_cast<Eigen::Index>(l) * mb, mb);
      for (int r = 0; r < d; ++r)
        out.row(base + nb + mb + r) = k.row(static_cast<Eigen::Index>(l) * d + r);
      out.row(base + zi) = x.row(zi).array() * c.row(l).array();
    }
  };
  s.running_gain = [raw, ny, zi](double t, StateBlock x, const Control& a, Eigen::VectorXd& out) {
    raw.fbar(t, x.topRows(ny), a, out);
    out.array() *= x.row(zi).transpose().array();
  };
  s.terminal_gain = [raw, ny, zi](StateBlock x, Eigen::VectorXd& out) {
    raw.gbar(x.topRows(ny), out);
    out.array() *= x.row(zi).transpose().array();
  };
  s.init_sampler = [raw, nb, mb, d, zi](CounterRng& rng, Eigen::Ref<Eigen::VectorXd> x0) {
    raw.init_xbar_m(rng, x0.head(nb + mb));
    x0.segment(nb + mb, d) = raw.o0;
    x0(zi) = 1.0;
  };
  return s;
}

}  // namespace rbsd
