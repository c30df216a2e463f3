#include <cmath>

#include "doctest.h"
#include "rbsd/benchmarks.hpp"
#include "rbsd/errors.hpp"
#include "rbsd/forward.hpp"
#include "rbsd/model.hpp"

using namespace rbsd;

TEST_CASE("uniform time grids") {
  const TimeGrid g = make_uniform_grid(1.0, 4);
  REQUIRE(g.knots.size() == 5);
  CHECK(g.knots[0] == 0.0);
  CHECK(g.knots[1] == doctest::Approx(0.25));
  CHECK(g.knots[2] == doctest::Approx(0.5));
  CHECK(g.knots[3] == doctest::Approx(0.75));
  CHECK(g.knots[4] == 1.0);

  const TimeGrid one = make_uniform_grid(1.0, 1);
  REQUIRE(one.knots.size() == 2);
  CHECK(one.knots[1] == 1.0);

  const TimeGrid two = make_uniform_grid(2.0, 8);
  CHECK(two.knots.size() == 9);
  for (int k = 0; k < two.steps(); ++k) CHECK(two.dt(k) == doctest::Approx(0.25));

  CHECK_THROWS_AS(make_uniform_grid(0.0, 4), ValidationError);
  CHECK_THROWS_AS(make_uniform_grid(1.0, 0), ValidationError);
  CHECK_THROWS_AS(make_time_grid({0.0, 0.5, 0.5, 1.0}), ValidationError);
}

TEST_CASE("interval lookup closes the last step") {
  const TimeGrid g = make_uniform_grid(1.0, 4);
  CHECK(g.interval(0.0) == 0);
  CHECK(g.interval(0.25) == 1);
  CHECK(g.interval(0.9) == 3);
  CHECK(g.interval(1.0) == 3);
}

TEST_CASE("control grids") {
  const ControlGrid g = make_scalar_grid({-1.0, 0.0, 1.0}, 3.0, 1);
  CHECK(g.size() == 3);
  CHECK(g.anchor_point()(0) == 0.0);
  for (double w : g.weights) CHECK(w == doctest::Approx(1.0));
  const ControlGrid h = with_total_mass(g, 6.0);
  CHECK(h.total_mass == doctest::Approx(6.0));
  CHECK(h.weights[2] == doctest::Approx(2.0));
  CHECK_THROWS_AS(make_scalar_grid({0.0, 1.0}, 1.0, 2), ValidationError);
  CHECK_THROWS_AS(make_control_grid({Control::Zero(1)}, {-1.0}, 0), ValidationError);
}

namespace {

// Scalar X_bar with dX_bar = drift dt, observation h = X_bar, k = 1.
RawClassicalSpec deterministic_raw(double drift, bool zero_h) {
  RawClassicalSpec raw;
  raw.dim_xbar = 1;
  raw.dim_v = 0;
  raw.dim_w = 1;
  raw.bbar = [drift](double, StateBlock y, const Control&, Eigen::MatrixXd& out) {
    out.setConstant(1, y.cols(), drift);
  };
  raw.h = [zero_h](double, StateBlock y, const Control&, Eigen::MatrixXd& out) {
    out = zero_h ? Eigen::MatrixXd::Zero(1, y.cols()) : Eigen::MatrixXd(y.row(0));
  };
  raw.sigma1 = [](double, StateBlock y, const Control&, Eigen::MatrixXd& out) {
    out.setZero(0, y.cols());
  };
  raw.sigma2 = [](double, StateBlock y, const Control&, Eigen::MatrixXd& out) {
    out.setZero(1, y.cols());
  };
  raw.k = [](double, StateBlock o, Eigen::MatrixXd& out) { out.setOnes(1, o.cols()); };
  raw.fbar = [](double, StateBlock y, const Control&, Eigen::VectorXd& out) {
    out.setZero(y.cols());
  };
  raw.gbar = [](StateBlock y, Eigen::VectorXd& out) { out.setOnes(y.cols()); };
  raw.init_xbar = [](CounterRng&, Eigen::Ref<Eigen::VectorXd> x) { x.setConstant(0.5); };
  raw.o0 = Eigen::VectorXd::Zero(1);
  raw.kinv_h_bound = 10.0;
  return raw;
}

}  // namespace

TEST_CASE("classical builder rejects a missing bound on k^-1 h") {
  RawClassicalSpec raw = deterministic_raw(1.0, false);
  raw.kinv_h_bound = 0.0;
  CHECK_THROWS_AS(build_classical_po_problem(raw), ValidationError);
  raw.kinv_h_bound = INFINITY;
  CHECK_THROWS_AS(build_classical_po_problem(raw), ValidationError);
}

TEST_CASE("zero observation drift keeps the density at one") {
  const ProblemSpec spec = build_classical_po_problem(deterministic_raw(1.0, true));
  const ControlGrid grid = make_scalar_grid({0.0}, 1.0, 0);
  const TimeGrid tg = make_uniform_grid(1.0, 16);
  const int zi = spec.likelihood->z_index;
  for (std::uint64_t p = 0; p < 20; ++p) {
    const MarkedPath path = simulate_randomized_path(spec, grid, tg, 3, p);
    for (int k = 0; k <= tg.steps(); ++k) CHECK(path.x(k, zi) == 1.0);
  }
}

TEST_CASE("density coordinate follows the discrete Doleans exponential") {
  // X_bar_t = 0.5 + t exactly, so Z_T = exp(sum x_k dW_k - sum x_k^2 dt / 2)
  // with x_k the left point of each step.
  const ProblemSpec spec = build_classical_po_problem(deterministic_raw(1.0, false));
  // A negligible intensity keeps every step in one piece.
  const ControlGrid grid = make_scalar_grid({0.0}, 1e-12, 0);
  const TimeGrid tg = make_uniform_grid(1.0, 32);
  const MarkedPath path = simulate_randomized_path(spec, grid, tg, 11, 4);
  REQUIRE(path.jumps.size() == 0);
  double log_z = 0.0;
  for (int k = 0; k < tg.steps(); ++k) {
    const double xk = 0.5 + tg.knots[k];
    log_z += xk * path.w_inc(k, 0) - 0.5 * xk * xk * tg.dt(k);
  }
  CHECK(path.x(tg.steps(), 0) == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(path.x(tg.steps(), spec.likelihood->z_index) ==
        doctest::Approx(std::exp(log_z)).epsilon(1e-10));
}

TEST_CASE("frozen latent factor reproduces the classical builder") {
  RawClassicalSpec c = deterministic_raw(0.3, false);
  c.sigma2 = [](double, StateBlock y, const Control&, Eigen::MatrixXd& out) {
    out = 0.2 * y.row(0);
  };
  RawLatentSpec l;
  l.dim_xbar = 1;
  l.dim_m = 1;
  l.dim_v = 0;
  l.dim_w = 1;
  // Latent blocks stack (X_bar, M, O); the classical ones stack (X_bar, O).
  l.bbar = [](double, StateBlock y, const Control&, Eigen::MatrixXd& out) {
    out.setConstant(1, y.cols(), 0.3);
  };
  l.sigma1 = [](double, StateBlock y, const Control&, Eigen::MatrixXd& out) {
    out.setZero(0, y.cols());
  };
  l.sigma2 = [](double, StateBlock y, const Control&, Eigen::MatrixXd& out) {
    out = 0.2 * y.row(0);
  };
  l.beta = [](double, StateBlock m, Eigen::MatrixXd& out) { out.setZero(1, m.cols()); };
  l.gamma1 = [](double, StateBlock m, Eigen::MatrixXd& out) { out.setZero(0, m.cols()); };
  l.gamma2 = [](double, StateBlock m, Eigen::MatrixXd& out) { out.setZero(1, m.cols()); };
  // h depends on the frozen factor only through its constant value 1.
  l.h = [](double, StateBlock mo, Eigen::MatrixXd& out) { out = mo.row(0); };
  c.h = [](double, StateBlock y, const Control&, Eigen::MatrixXd& out) {
    out.setOnes(1, y.cols());
  };
  l.k = [](double, StateBlock o, Eigen::MatrixXd& out) { out.setOnes(1, o.cols()); };
  l.fbar = [](double, StateBlock y, const Control&, Eigen::VectorXd& out) {
    out = y.row(0).transpose();
  };
  c.fbar = l.fbar;
  l.gbar = [](StateBlock y, Eigen::VectorXd& out) { out = y.row(0).transpose().array().square(); };
  c.gbar = l.gbar;
  l.init_xbar_m = [](CounterRng&, Eigen::Ref<Eigen::VectorXd> x) { x << 0.5, 1.0; };
  l.o0 = Eigen::VectorXd::Zero(1);
  l.kinv_h_bound = 10.0;

  const ProblemSpec sc = build_classical_po_problem(c);
  const ProblemSpec sl = build_latent_factor_problem(l);
  REQUIRE(sc.dim_x == 3);  // X_bar, O, Z
  REQUIRE(sl.dim_x == 4);  // X_bar, M, O, Z
  const Control a = Control::Zero(1);
  CounterRng rng(5, 0);
  for (int probe = 0; probe < 50; ++probe) {
    const double xb = rng.normal(), z = std::exp(rng.normal()), o = rng.normal();
    Eigen::VectorXd xc(3), xl(4);
    xc << xb, o, z;
    xl << xb, 1.0, o, z;
    const double t = rng.uniform();
    const Eigen::VectorXd bc = eval_drift(sc, t, xc, a), bl = eval_drift(sl, t, xl, a);
    CHECK(bl(0) == bc(0));
    CHECK(bl(1) == 0.0);
    CHECK(bl(2) == bc(1));
    CHECK(bl(3) == bc(2));
    const Eigen::MatrixXd wc = eval_diff_w(sc, t, xc, a), wl = eval_diff_w(sl, t, xl, a);
    CHECK(wl(0, 0) == wc(0, 0));
    CHECK(wl(2, 0) == wc(1, 0));
    CHECK(wl(3, 0) == wc(2, 0));
    CHECK(eval_running_gain(sl, t, xl, a) == eval_running_gain(sc, t, xc, a));
    CHECK(eval_terminal_gain(sl, xl) == eval_terminal_gain(sc, xc));
  }
}

TEST_CASE("validate_spec catches shape errors") {
  Benchmark b = make_benchmark("bangbang1d");
  CHECK_NOTHROW(validate_spec(b.spec, b.grid));
  b.spec.drift = [](double, StateBlock x, const Control&, Eigen::MatrixXd& out) {
    out.setZero(2, x.cols());
  };
  CHECK_THROWS_AS(validate_spec(b.spec, b.grid), ValidationError);
}

TEST_CASE("benchmarks validate and reject unknown names") {
  for (const auto& name : benchmark_names()) {
    const Benchmark b = make_benchmark(name);
    CHECK_NOTHROW(validate_spec(b.spec, b.grid));
  }
  CHECK_THROWS_AS(make_benchmark("nope"), ValidationError);
}

TEST_CASE("portfolio wealth follows the self-financing recursion") {
  // Under the reference law dO = vol dW, and the Euler wealth step must equal
  // X_k (1 + r dt + pi (dS/S - r dt)) with the price return dS/S = dO +
  // vol^2 dt / 2. A single control and a negligible intensity keep each
  // step in one piece.
  const PortfolioParams p;
  Benchmark b = make_latent_portfolio(p);
  b.grid = make_scalar_grid({0.5}, 1e-12, 0);
  const TimeGrid tg = make_uniform_grid(b.spec.horizon, 16);
  const MarkedPath path = simulate_randomized_path(b.spec, b.grid, tg, 9, 2);
  REQUIRE(path.valid);
  REQUIRE(path.jumps.size() == 0);
  for (int k = 0; k < tg.steps(); ++k) {
    const double dt = tg.dt(k);
    const double d_o = path.x(k + 1, 2) - path.x(k, 2);
    CHECK(d_o == doctest::Approx(p.vol * path.w_inc(k, 0)).epsilon(1e-12));
    const double ret = d_o + 0.5 * p.vol * p.vol * dt;
    const double expected = path.x(k, 0) * (1.0 + p.rate * dt + 0.5 * (ret - p.rate * dt));
    CHECK(path.x(k + 1, 0) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("sampled Lipschitz check is advisory") {
  const Benchmark b = make_benchmark("bangbang1d");
  const LipschitzReport r = sampled_lipschitz_check(b.spec, b.grid, 3);
  CHECK(r.probes == 100 * b.grid.size());
  CHECK(r.violations == 0);
}
