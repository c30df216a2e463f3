#include "rbsd/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "rbsd/errors.hpp"

namespace rbsd {

void require_control_independent(const ProblemSpec& spec, const ControlGrid& grid,
                                 std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif(0.0, spec.horizon);
  Eigen::MatrixXd x(spec.dim_x, 100);
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = normal(gen);
  const double t = unif(gen);
  const Control& a0 = grid.anchor_point();

  Eigen::MatrixXd m0, m1;
  Eigen::VectorXd v0, v1;
  auto same_field = [&](const VectorField& field, const char* what) {
    field(t, x, a0, m0);
    for (int j = 0; j < grid.size(); ++j) {
      field(t, x, grid.points[j], m1);
      if (m1.rows() != m0.rows() || m1.cols() != m0.cols() || (m1.array() != m0.array()).any())
        throw NotApplicableError(std::string(what) + " depends on the control");
    }
  };
  same_field(spec.drift, "drift");
  if (spec.dim_v > 0) same_field(spec.diff_v, "diff_v");
  if (spec.dim_w > 0) same_field(spec.diff_w, "diff_w");
  spec.running_gain(t, x, a0, v0);
  for (int j = 0; j < grid.size(); ++j) {
    spec.running_gain(t, x, grid.points[j], v1);
    if ((v1.array() != v0.array()).any())
      throw NotApplicableError("running gain depends on the control");
  }
}

McEstimate plain_mc_value(const ProblemSpec& spec, const ControlGrid& grid,
                          const TimeGrid& tgrid, std::int64_t paths, std::uint64_t seed) {
  require_control_independent(spec, grid, seed);
  if (paths < 2) throw ValidationError("plain MC needs at least two paths");
  const int n = spec.dim_x, m = spec.dim_v, d = spec.dim_w;
  const Control& a = grid.anchor_point();
  std::mt19937_64 gen(seed ^ 0x5bd1e995ULL);
  std::normal_distribution<double> normal;

  // All paths advance together as one block.
  Eigen::MatrixXd x(n, paths);
  for (std::int64_t p = 0; p < paths; ++p) {
    CounterRng init(gen(), 0);
    Eigen::VectorXd x0(n);
    spec.init_sampler(init, x0);
    x.col(p) = x0;
  }
  Eigen::VectorXd gain = Eigen::VectorXd::Zero(paths), f, g;
  Eigen::MatrixXd b, sv, sw, inc(std::max(m, d), paths);
  for (int k = 0; k < tgrid.steps(); ++k) {
    const double t = tgrid.knots[k], dt = tgrid.dt(k), sq = std::sqrt(dt);
    spec.running_gain(t, x, a, f);
    gain += f * dt;
    spec.drift(t, x, a, b);
    Eigen::MatrixXd next = x + b * dt;
    if (m > 0) {
      spec.diff_v(t, x, a, sv);
      for (int l = 0; l < m; ++l) {
        for (std::int64_t p = 0; p < paths; ++p) inc(0, p) = sq * normal(gen);
        next.array() += sv.middleRows(l * n, n).array() * inc.row(0).replicate(n, 1).array();
      }
    }
    if (d > 0) {
      spec.diff_w(t, x, a, sw);
      for (int l = 0; l < d; ++l) {
        for (std::int64_t p = 0; p < paths; ++p) inc(0, p) = sq * normal(gen);
        next.array() += sw.middleRows(l * n, n).array() * inc.row(0).replicate(n, 1).array();
      }
    }
    x.swap(next);
  }
  spec.terminal_gain(x, g);
  gain += g;

  McEstimate e;
  e.n = paths;
  e.mean = gain.mean();
  e.stderr = std::sqrt((gain.array() - e.mean).square().sum() / (paths - 1) / paths);
  return e;
}

HjbResult hjb_lattice_value(const ProblemSpec& spec, const ControlGrid& grid,
                            const TimeGrid& tgrid, const HjbOptions& options) {
  if (spec.dim_x != 1) throw NotApplicableError("HJB lattice needs a scalar state");
  if (!spec.init_deterministic) throw NotApplicableError("HJB lattice needs a fixed x0");
  if (options.nodes < 5 || !(options.x_max > 0.0)) throw ValidationError("bad lattice");
  const int H = options.nodes;
  const double dx = 2.0 * options.x_max / (H - 1);
  Eigen::MatrixXd xs(1, H);
  for (int i = 0; i < H; ++i) xs(0, i) = -options.x_max + i * dx;

  const int J = grid.size();
  Eigen::MatrixXd b, sv, sw;
  Eigen::VectorXd f;
  std::vector<Eigen::ArrayXd> drift(J), var(J), run(J);
  auto load = [&](double t) {
    double bound = 0.0;
    for (int j = 0; j < J; ++j) {
      spec.drift(t, xs, grid.points[j], b);
      drift[j] = b.row(0).transpose().array();
      var[j] = Eigen::ArrayXd::Zero(H);
      if (spec.dim_v > 0) {
        spec.diff_v(t, xs, grid.points[j], sv);
        if (sv.cwiseAbs().maxCoeff() > 0.0)
          throw NotApplicableError("HJB lattice needs a fully observed state");
      }
      if (spec.dim_w > 0) {
        spec.diff_w(t, xs, grid.points[j], sw);
        var[j] = sw.array().square().colwise().sum().transpose();
      }
      spec.running_gain(t, xs, grid.points[j], f);
      run[j] = f.array();
      bound = std::max(bound, (var[j] + drift[j].abs() * dx).maxCoeff());
    }
    return bound;
  };

  Eigen::VectorXd gv;
  spec.terminal_gain(xs, gv);
  Eigen::ArrayXd v = gv.array(), next(H);

  HjbResult res;
  res.dx = dx;
  for (int k = tgrid.steps() - 1; k >= 0; --k) {
    const double t_hi = tgrid.knots[k + 1], dt = tgrid.dt(k);
    const double bound = load(t_hi);
    const double dt_max = bound > 0.0 ? options.cfl * dx * dx / bound : dt;
    const int sub = std::max(1, static_cast<int>(std::ceil(dt / dt_max)));
    res.substeps += sub;
    if (res.substeps > options.max_substeps)
      throw ValidationError("HJB lattice exceeds the sub-step cap; coarsen the lattice");
    const double h = dt / sub;
    for (int s = 0; s < sub; ++s) {
      const double t = t_hi - s * h;
      if (s > 0) load(t);
      for (int i = 1; i < H - 1; ++i) {
        const double fwd = (v(i + 1) - v(i)) / dx, bwd = (v(i) - v(i - 1)) / dx;
        const double lap = (v(i + 1) - 2.0 * v(i) + v(i - 1)) / (dx * dx);
        double best = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < J; ++j) {
          const double bj = drift[j](i);
          // Central differences stay monotone while the cell Peclet number
          // |b| dx / s^2 is at most 1; upwind beyond that.
          const double grad = std::abs(bj) * dx <= var[j](i) ? 0.5 * (fwd + bwd)
                              : bj > 0.0                     ? fwd
                                                             : bwd;
          const double ham = bj * grad + 0.5 * var[j](i) * lap + run[j](i);
          best = std::max(best, ham);
        }
        next(i) = v(i) + h * best;
      }
      next(0) = 2.0 * next(1) - next(2);
      next(H - 1) = 2.0 * next(H - 2) - next(H - 3);
      v.swap(next);
    }
  }

  CounterRng rng(0, 0);
  Eigen::VectorXd x0(1);
  spec.init_sampler(rng, x0);
  const double pos = (x0(0) + options.x_max) / dx;
  if (pos < 0.0 || pos > H - 1) throw ValidationError("x0 outside the lattice");
  const int i0 = std::min(H - 2, static_cast<int>(pos));
  const double w = pos - i0;
  res.value = (1.0 - w) * v(i0) + w * v(i0 + 1);
  return res;
}

ValidatedHjb hjb_with_doubling(const ProblemSpec& spec, const ControlGrid& grid,
                               const TimeGrid& tgrid, const HjbOptions& options) {
  ValidatedHjb out;
  out.coarse = hjb_lattice_value(spec, grid, tgrid, options);
  HjbOptions fine = options;
  fine.nodes = 2 * options.nodes - 1;
  out.fine = hjb_lattice_value(spec, grid, tgrid, fine);
  const double scale = std::max(std::abs(out.fine.value), 1e-12);
  out.relative_change = std::abs(out.fine.value - out.coarse.value) / scale;
  out.validated = out.relative_change < 0.01;
  return out;
}

namespace {

struct RiccatiSolution {
  double s0 = 0.0, beta0 = 0.0, p_T = 0.0;
};

RiccatiSolution integrate_riccati(const LqgParams& q, long steps) {
  const double T = q.horizon, h = T / steps;
  auto kalman = [&](double P) { return 2.0 * q.a * P + q.s * q.s - q.c * q.c * P * P; };
  // Error variance on the half-step lattice, needed at RK4 midpoints below.
  std::vector<double> P(2 * steps + 1);
  P[0] = q.p0;
  const double hh = h / 2.0;
  for (long i = 0; i < 2 * steps; ++i) {
    const double y = P[i];
    const double k1 = kalman(y), k2 = kalman(y + hh / 2 * k1), k3 = kalman(y + hh / 2 * k2),
                 k4 = kalman(y + hh * k3);
    P[i + 1] = y + hh / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
  }

  // Backward in time: d/d(tau) of (S, beta) with tau = T - t.
  auto rhs = [&](double S, double Pv, double& dS, double& dB) {
    dS = 2.0 * q.a * S + q.q - q.b_u * q.b_u * S * S / q.r;
    dB = S * (Pv * q.c) * (Pv * q.c) + q.q * Pv;
  };
  RiccatiSolution out;
  out.p_T = P.back();
  double S = q.p, B = q.p * P.back();
  for (long i = steps; i > 0; --i) {
    const double p_hi = P[2 * i], p_mid = P[2 * i - 1], p_lo = P[2 * i - 2];
    double s1, b1, s2, b2, s3, b3, s4, b4;
    rhs(S, p_hi, s1, b1);
    rhs(S + h / 2 * s1, p_mid, s2, b2);
    rhs(S + h / 2 * s2, p_mid, s3, b3);
    rhs(S + h * s3, p_lo, s4, b4);
    S += h / 6 * (s1 + 2 * s2 + 2 * s3 + s4);
    B += h / 6 * (b1 + 2 * b2 + 2 * b3 + b4);
  }
  out.s0 = S;
  out.beta0 = B;
  return out;
}

}  // namespace

LqgOracle lqg_kalman_value(const LqgParams& q, const TimeGrid& tgrid, std::int64_t paths,
                           std::uint64_t seed) {
  if (!(q.r > 0.0)) throw ValidationError("LQG oracle needs r > 0");
  LqgOracle out;
  const RiccatiSolution fine = integrate_riccati(q, 1000000);
  const RiccatiSolution coarse = integrate_riccati(q, 500000);
  out.s0 = fine.s0;
  out.beta0 = fine.beta0;
  out.terminal_variance = fine.p_T;
  out.continuous_value = -(fine.s0 * q.m0 * q.m0 + fine.beta0);
  if (std::abs(fine.beta0 - coarse.beta0) + std::abs(fine.s0 - coarse.s0) > 1e-8)
    out.warnings.push_back("Riccati integration not converged at step 1e-6 T");
  if (!std::isfinite(out.continuous_value))
    out.warnings.push_back("Riccati solution is not finite");

  // Riccati S on the knots for the feedback, by the same RK4 backwards.
  const int N = tgrid.steps();
  std::vector<double> S_knot(N + 1);
  {
    const long per = 20000;
    double S = q.p;
    S_knot[N] = S;
    for (int k = N - 1; k >= 0; --k) {
      const double h = tgrid.dt(k) / per;
      auto f = [&](double s) { return 2.0 * q.a * s + q.q - q.b_u * q.b_u * s * s / q.r; };
      for (long i = 0; i < per; ++i) {
        const double k1 = f(S), k2 = f(S + h / 2 * k1), k3 = f(S + h / 2 * k2), k4 = f(S + h * k3);
        S += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
      }
      S_knot[k] = S;
    }
  }

  auto project = [&](double u) {
    double best = q.controls.front();
    for (double c : q.controls)
      if (std::abs(c - u) < std::abs(best - u)) best = c;
    return best;
  };

  // Physical-law simulation with a discretized Kalman-Bucy filter; the
  // control is fixed at each knot and the dynamics are sub-stepped.
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal;
  const int sub = 8;
  Eigen::VectorXd gains(paths);
  for (std::int64_t p = 0; p < paths; ++p) {
    double x = q.m0 + std::sqrt(q.p0) * normal(gen);
    double m = q.m0, P = q.p0, cost = 0.0;
    for (int k = 0; k < N; ++k) {
      const double u = project(-q.b_u * S_knot[k] * m / q.r);
      const double h = tgrid.dt(k) / sub, sq = std::sqrt(h);
      for (int s = 0; s < sub; ++s) {
        cost += (q.q * x * x + q.r * u * u) * h;
        const double dO = q.c * x * h + sq * normal(gen);
        const double xn = x + (q.a * x + q.b_u * u) * h + q.s * sq * normal(gen);
        m += (q.a * m + q.b_u * u) * h + P * q.c * (dO - q.c * m * h);
        P += (2.0 * q.a * P + q.s * q.s - q.c * q.c * P * P) * h;
        x = xn;
      }
    }
    cost += q.p * x * x;
    gains(p) = -cost;
  }
  out.projected.n = paths;
  out.projected.mean = gains.mean();
  out.projected.stderr =
      std::sqrt((gains.array() - out.projected.mean).square().sum() / (paths - 1) / paths);
  return out;
}

double lqg_uncontrolled_value(const LqgParams& q) {
  // Without control: E[X_T^2] = m0^2 e^{2aT} + (p0 e^{2aT} + s^2 (e^{2aT} - 1) / (2a)).
  const double T = q.horizon;
  const double e = std::exp(2.0 * q.a * T);
  const double noise = q.a == 0.0 ? q.s * q.s * T : q.s * q.s * (e - 1.0) / (2.0 * q.a);
  const double second = q.m0 * q.m0 * e + q.p0 * e + noise;
  // Running state cost int q E[X_t^2] dt, by Simpson on the closed form.
  auto ex2 = [&](double t) {
    const double et = std::exp(2.0 * q.a * t);
    const double nz = q.a == 0.0 ? q.s * q.s * t : q.s * q.s * (et - 1.0) / (2.0 * q.a);
    return (q.m0 * q.m0 + q.p0) * et + nz;
  };
  const int n = 2000;
  double integral = ex2(0.0) + ex2(T);
  for (int i = 1; i < n; ++i) integral += (i % 2 ? 4.0 : 2.0) * ex2(T * i / n);
  integral *= T / (3.0 * n);
  return -(q.q * integral + q.p * second);
}

}  // namespace rbsd
