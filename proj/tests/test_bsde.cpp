#include <cmath>
#include <vector>

#include "doctest.h"
#include "rbsd/benchmarks.hpp"
#include "rbsd/bsde.hpp"
#include "rbsd/errors.hpp"
#include "rbsd/oracles.hpp"
#include "rbsd/regression.hpp"
#include "rbsd/scenario.hpp"
#include "test_util.hpp"

using namespace rbsd;

TEST_CASE("monomial basis") {
  CHECK(basis_size(1, 0) == 1);
  CHECK(basis_size(1, 3) == 4);
  CHECK(basis_size(2, 2) == 6);
  CHECK(basis_size(3, 2) == 10);
  CHECK(basis_size(4, 3) == 35);
  const auto e = monomial_exponents(2, 2);
  REQUIRE(e.size() == 6);
  CHECK(e[0] == std::vector<int>{0, 0});
  for (int c = 1; c < 6; ++c) CHECK(e[c][0] + e[c][1] == (c < 3 ? 1 : 2));
  CHECK(e[1] != e[2]);

  Eigen::MatrixXd z(2, 2);
  z << 2.0, 3.0,
       -1.0, 0.5;
  const Eigen::MatrixXd b = polynomial_basis(z, 2);
  REQUIRE(b.cols() == 6);
  for (int c = 0; c < 6; ++c)
    for (int r = 0; r < 2; ++r)
      CHECK(b(r, c) == doctest::Approx(std::pow(z(r, 0), e[c][0]) * std::pow(z(r, 1), e[c][1])));

  // Templated on the scalar type.
  const Eigen::MatrixXf bf = polynomial_basis(z.cast<float>(), 2);
  CHECK(bf(0, 5) == doctest::Approx(b(0, 5)));
}

TEST_CASE("truncated least squares") {
  CounterRng rng(1, 1);
  const int n = 200;
  Eigen::MatrixXd x(n, 1);
  for (int i = 0; i < n; ++i) x(i, 0) = rng.normal();
  const Eigen::MatrixXd a = polynomial_basis(x, 3);
  Eigen::VectorXd truth(4);
  truth << 0.5, -1.0, 2.0, 0.25;
  const auto fit = truncated_least_squares(a, a * truth);
  CHECK(fit.rank == 4);
  CHECK_FALSE(fit.truncated);
  CHECK((fit.coef.col(0) - truth).cwiseAbs().maxCoeff() < 1e-10);

  // A duplicated column is dropped by the SVD cut and the minimum-norm
  // solution splits its coefficient evenly.
  Eigen::MatrixXd dup(n, 3);
  dup << Eigen::VectorXd::Ones(n), x.col(0), x.col(0);
  const Eigen::VectorXd rhs = 1.0 + 4.0 * x.col(0).array();
  const auto d = truncated_least_squares(dup, rhs);
  CHECK(d.truncated);
  CHECK(d.rank == 2);
  CHECK(d.coef(0, 0) == doctest::Approx(1.0));
  CHECK(d.coef(1, 0) == doctest::Approx(2.0));
  CHECK(d.coef(2, 0) == doctest::Approx(2.0));
}

TEST_CASE("standardizer drops constant columns and clips") {
  Eigen::MatrixXd x(4, 2);
  x << 1.0, 7.0,
       2.0, 7.0,
       3.0, 7.0,
       10.0, 7.0;
  Standardizer s = Standardizer::fit(x);
  REQUIRE(s.output_dim() == 1);
  CHECK(s.keep[0] == 0);
  const Eigen::MatrixXd z = s.apply(x);
  CHECK(z.col(0).mean() == doctest::Approx(0.0).epsilon(1e-12));
  s.clip = 1.0;
  const Eigen::MatrixXd c = s.apply(x);
  CHECK(c.maxCoeff() == 1.0);
  CHECK(c(0, 0) == doctest::Approx(z(0, 0)));
}

TEST_CASE("penalized fixed point") {
  // y = v + c w (y1 - y)^+ has y = (v + c w y1) / (1 + c w) when y1 > v.
  CHECK(penalized_fixed_point(1.0, 2.0, {3.0}, {0.5}) == doctest::Approx((1.0 + 3.0) / 2.0));
  CHECK(penalized_fixed_point(1.0, 2.0, {0.5}, {0.5}) == doctest::Approx(1.0));
  CHECK(penalized_fixed_point(1.0, 0.0, {5.0, 9.0}, {1.0, 1.0}) == doctest::Approx(1.0));
  // Two active terms: y = (1 + 2 + 3) / 3.
  const double y = penalized_fixed_point(1.0, 1.0, {2.0, 3.0}, {1.0, 1.0});
  CHECK(y == doctest::Approx(2.0));
  CHECK(y == doctest::Approx(1.0 + (2.0 - y) + (3.0 - y)));
}

TEST_CASE("mc_estimate") {
  Eigen::VectorXd v(4);
  v << 1.0, 2.0, 3.0, 4.0;
  const McEstimate e = mc_estimate(v);
  CHECK(e.mean == 2.5);
  CHECK(e.stderr == doctest::Approx(std::sqrt(5.0 / 3.0 / 4.0)));
  CHECK(e.n == 4);
}

namespace {

ScenarioBatch make_batch(const Benchmark& b, std::int64_t paths, std::uint64_t seed, int steps,
                         int threads = 1) {
  ScenarioOptions o;
  o.paths = paths;
  o.seed = seed;
  o.threads = threads;
  o.filter.particles = b.particles;
  o.filter.features = parse_feature_map(b.features);
  o.resample_marks = resolve_mark_resampling(MarkResampling::kAuto, b.grid);
  return generate_scenarios(b.spec, b.grid, make_uniform_grid(b.spec.horizon, steps), o);
}

}  // namespace

TEST_CASE("constant terminal payoff gives a constant solution") {
  Benchmark b = make_benchmark("bangbang1d");
  b.spec.terminal_gain = [](StateBlock x, Eigen::VectorXd& out) { out.setOnes(x.cols()); };
  const ScenarioBatch batch = make_batch(b, 4000, 2, 8);
  BsdeOptions o;
  o.degree = 2;
  const BsdeSolution c = solve_constrained(batch, b.spec, b.grid, o);
  CHECK(c.y0 == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(c.stderr < 1e-6);
  const BsdeSolution p = solve_penalized(batch, b.spec, b.grid, 4, o);
  CHECK(p.y0 == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("uncontrolled problem matches plain Monte Carlo") {
  const Benchmark b = make_benchmark("uncontrolled2d");
  const int steps = 16;
  const ScenarioBatch batch = make_batch(b, 20000, 3, steps);
  BsdeOptions o;
  o.degree = b.degree;
  const BsdeSolution c = solve_constrained(batch, b.spec, b.grid, o);
  const McEstimate mc = plain_mc_value(b.spec, b.grid, make_uniform_grid(1.0, steps), 200000, 4);
  MESSAGE("constrained ", c.y0, " +- ", c.stderr, ", plain MC ", mc.mean, " +- ", mc.stderr);
  CHECK(test_util::z_score(c.y0, c.stderr, mc.mean, mc.stderr) < 3.0);

  // n = 0 reads the anchor bucket without any switching: the reference gain.
  const BsdeSolution p0 = solve_penalized(batch, b.spec, b.grid, 0, o);
  CHECK(test_util::z_score(p0.y0, p0.stderr, mc.mean, mc.stderr) < 3.0);
}

TEST_CASE("thin buckets raise a coverage error") {
  const Benchmark b = make_benchmark("bangbang1d");
  const ScenarioBatch batch = make_batch(b, 60, 5, 4);
  BsdeOptions o;
  o.degree = 2;
  o.stderr_groups = 0;
  CHECK_THROWS_AS(solve_constrained(batch, b.spec, b.grid, o), CoverageError);
}

TEST_CASE("constrained solve is thread-count independent") {
  const Benchmark b = make_benchmark("bangbang1d");
  const ScenarioBatch one = make_batch(b, 3000, 6, 8, 1);
  const ScenarioBatch two = make_batch(b, 3000, 6, 8, 2);
  BsdeOptions o;
  o.degree = 4;
  const BsdeSolution s1 = solve_constrained(one, b.spec, b.grid, o);
  const BsdeSolution s2 = solve_constrained(two, b.spec, b.grid, o);
  CHECK(s1.y0 == s2.y0);
  CHECK(s1.stderr == s2.stderr);
}

TEST_CASE("greedy policy is a lower bound") {
  const Benchmark b = make_benchmark("bangbang1d");
  const int steps = 16;
  const ScenarioBatch batch = make_batch(b, 30000, 7, steps);
  BsdeOptions o;
  o.degree = b.degree;
  const BsdeSolution sol = solve_constrained(batch, b.spec, b.grid, o);
  FilterOptions f;
  f.particles = 1;
  f.features = parse_feature_map(b.features);
  const McEstimate pol = evaluate_policy_from_solution(sol, b.spec, b.grid,
                                                       make_uniform_grid(1.0, steps), f, 20000, 8, 1);
  MESSAGE("y0 ", sol.y0, " +- ", sol.stderr, ", policy ", pol.mean, " +- ", pol.stderr);
  CHECK(pol.mean < sol.y0 + 3.0 * std::hypot(sol.stderr, pol.stderr));
  // Doing nothing gives -E[W_1^2] = -1; the greedy policy must beat it.
  CHECK(pol.mean > -1.0 + 3.0 * pol.stderr);
}
