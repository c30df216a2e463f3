#include <cmath>
#include <vector>

#include "doctest.h"
#include "rbsd/benchmarks.hpp"
#include "rbsd/errors.hpp"
#include "rbsd/filter.hpp"
#include "test_util.hpp"

using namespace rbsd;

namespace {

// dX = sv dV with X_0 = 0 and no observation feedback.
ProblemSpec hidden_walk(double sv) {
  ProblemSpec s;
  s.name = "hidden_walk";
  s.dim_x = 1;
  s.dim_v = 1;
  s.dim_w = 1;
  s.drift = [](double, StateBlock x, const Control&, Eigen::MatrixXd& out) {
    out.setZero(1, x.cols());
  };
  s.diff_v = [sv](double, StateBlock x, const Control&, Eigen::MatrixXd& out) {
    out.setConstant(1, x.cols(), sv);
  };
  s.diff_w = [](double, StateBlock x, const Control&, Eigen::MatrixXd& out) {
    out.setZero(1, x.cols());
  };
  s.running_gain = [](double, StateBlock x, const Control&, Eigen::VectorXd& out) {
    out.setZero(x.cols());
  };
  s.terminal_gain = [](StateBlock x, Eigen::VectorXd& out) { out.setZero(x.cols()); };
  s.init_sampler = [](CounterRng&, Eigen::Ref<Eigen::VectorXd> v) { v.setZero(); };
  return s;
}

FilterCloud make_cloud(const Eigen::MatrixXd& particles, const Eigen::VectorXd& weights) {
  FilterCloud c;
  c.particles = particles;
  c.weights = weights;
  return c;
}

}  // namespace

TEST_CASE("deterministic particles stay together") {
  const Benchmark b = make_benchmark("bangbang1d");
  FilterOptions o;
  o.particles = 10;
  CounterRng rng(1, 1);
  FilterCloud cloud = init_filter(b.spec, o, rng);
  CHECK_FALSE(cloud.weighted);
  Eigen::VectorXd dw(1);
  for (int k = 0; k < 8; ++k) {
    dw(0) = 0.1 * (k - 3);
    propagate_filter(b.spec, cloud, k * 0.125, 0.125, Control::Constant(1, 1.0), dw, o, rng);
  }
  const FilterFeatures f = extract_features(cloud, b.spec);
  // X_1 = int a dt + sum dw = 1 + 0.1 * (-3 - 2 - 1 + 0 + 1 + 2 + 3 + 4).
  CHECK(f.mean(0) == doctest::Approx(1.4));
  CHECK(f.cov_upper(0) < 1e-20);
}

TEST_CASE("unobserved noise spreads the cloud like a Brownian motion") {
  const ProblemSpec s = hidden_walk(1.0);
  FilterOptions o;
  o.particles = 10000;
  CounterRng rng(2, 1);
  FilterCloud cloud = init_filter(s, o, rng);
  const Eigen::VectorXd dw = Eigen::VectorXd::Zero(1);
  const int M = o.particles;
  for (int k = 0; k < 16; ++k) {
    propagate_filter(s, cloud, k / 16.0, 1.0 / 16.0, Control::Zero(1), dw, o, rng);
    const double t = (k + 1) / 16.0;
    const FilterFeatures f = extract_features(cloud, s);
    CHECK(std::abs(f.mean(0)) < 4.0 * std::sqrt(t / M));
    CHECK(std::abs(f.cov_upper(0) / t - 1.0) < 4.0 * std::sqrt(2.0 / M));
  }
}

TEST_CASE("weighted cloud tracks the Kalman-Bucy filter") {
  // Along one observation path of the uncontrolled LQG problem, compare the
  // weighted cloud with a time-discrete Kalman recursion driven by the same
  // increments. Layout (X_bar, O, Z).
  const LqgParams p;
  const Benchmark b = make_lqg_po(p);
  FilterOptions o;
  o.particles = 20000;
  CounterRng rng(3, 1), obs(3, 2);
  FilterCloud cloud = init_filter(b.spec, o, rng);
  REQUIRE(cloud.weighted);
  const int steps = 64;
  const double dt = p.horizon / steps;
  double m = p.m0, var = p.p0;
  Eigen::VectorXd dw(1);
  for (int k = 0; k < steps; ++k) {
    dw(0) = std::sqrt(dt) * obs.normal();
    propagate_filter(b.spec, cloud, k * dt, dt, Control::Zero(1), dw, o, rng);
    m += p.a * m * dt + var * p.c * (dw(0) - p.c * m * dt);
    var += (2.0 * p.a * var + p.s * p.s - p.c * p.c * var * var) * dt;
    CHECK(cloud.weights.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(cloud.particles.row(2).minCoeff() == cloud.mass);
    CHECK(cloud.particles.row(2).maxCoeff() == cloud.mass);
  }
  const FilterFeatures f = extract_features(cloud, b.spec);
  // Resampling keeps ESS above M / 2; the rest is O(dt) discretization.
  const double tol = 4.0 * std::sqrt(2.0 * var / o.particles) + 0.02;
  CHECK(std::abs(f.mean(0) - m) < tol);
  CHECK(std::abs(f.cov_upper(0) / var - 1.0) < 0.05);

  // The reformulated terminal gain is Z g(X_bar), so its filter is the mass
  // times the normalized expectation of -p x^2.
  const double ex2 = filter_expectation(cloud, [](const Eigen::VectorXd& x) { return x(0) * x(0); });
  CHECK(filter_terminal_gain(b.spec, cloud) ==
        doctest::Approx(-p.p * cloud.mass * ex2).epsilon(1e-12));
  CHECK(std::abs(ex2 - (m * m + var)) < 0.05 * (m * m + var) + tol);
  CHECK(filter_expectation(cloud, [](const Eigen::VectorXd&) { return 1.0; }) ==
        doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("filter expectation rejects non-finite values") {
  const FilterCloud c = make_cloud(Eigen::MatrixXd::Ones(1, 3), Eigen::VectorXd::Constant(3, 1.0 / 3));
  CHECK_THROWS_AS(filter_expectation(c, [](const Eigen::VectorXd&) { return NAN; }), NumericError);
  CHECK(filter_expectation(c, [](const Eigen::VectorXd& x) { return x(0); }) == doctest::Approx(1.0));
}

TEST_CASE("vanishing likelihood collapses the filter") {
  const Benchmark b = make_lqg_po();
  FilterOptions o;
  o.particles = 50;
  CounterRng rng(4, 1);
  FilterCloud cloud = init_filter(b.spec, o, rng);
  cloud.particles.row(b.spec.likelihood->z_index).setZero();
  CHECK_THROWS_AS(propagate_filter(b.spec, cloud, 0.0, 0.1, Control::Zero(1),
                                   Eigen::VectorXd::Constant(1, 0.1), o, rng),
                  FilterCollapseError);
}

TEST_CASE("feature extraction") {
  const ProblemSpec s = hidden_walk(1.0);
  {
    const FilterCloud c = make_cloud(Eigen::MatrixXd::Constant(1, 1, 0.7), Eigen::VectorXd::Ones(1));
    const FilterFeatures f = extract_features(c, s);
    CHECK(f.mean(0) == 0.7);
    CHECK(f.cov_upper(0) == 0.0);
  }
  {
    Eigen::MatrixXd x(1, 2);
    x << -1.0, 1.0;
    const FilterFeatures f = extract_features(make_cloud(x, Eigen::VectorXd::Constant(2, 0.5)), s);
    CHECK(f.mean(0) == 0.0);
    CHECK(f.cov_upper(0) == doctest::Approx(1.0));
  }
  {
    const int M = 10000;
    CounterRng rng(5, 1);
    Eigen::MatrixXd x(1, M);
    for (int i = 0; i < M; ++i) x(0, i) = rng.normal();
    const FilterFeatures f =
        extract_features(make_cloud(x, Eigen::VectorXd::Constant(M, 1.0 / M)), s);
    CHECK(std::abs(f.mean(0)) < 0.04);
    CHECK(std::abs(f.cov_upper(0) - 1.0) < 0.05);
  }
  {
    // Weighted mean and covariance, two coordinates.
    Eigen::MatrixXd x(2, 3);
    x << 0.0, 1.0, 2.0,
         1.0, 0.0, 1.0;
    Eigen::VectorXd w(3);
    w << 0.25, 0.5, 0.25;
    ProblemSpec s2 = s;
    s2.dim_x = 2;
    const FilterFeatures f = extract_features(make_cloud(x, w), s2);
    CHECK(f.mean(0) == doctest::Approx(1.0));
    CHECK(f.mean(1) == doctest::Approx(0.5));
    REQUIRE(f.cov_upper.size() == 3);
    CHECK(f.cov_upper(0) == doctest::Approx(0.5));
    CHECK(f.cov_upper(1) == doctest::Approx(0.0));
    CHECK(f.cov_upper(2) == doctest::Approx(0.25));
  }
}

TEST_CASE("effective sample size and resampling") {
  CHECK(effective_sample_size(Eigen::VectorXd::Constant(8, 0.125)) == doctest::Approx(8.0));
  Eigen::VectorXd one_hot = Eigen::VectorXd::Zero(8);
  one_hot(3) = 1.0;
  CHECK(effective_sample_size(one_hot) == 1.0);

  Eigen::MatrixXd x(1, 4);
  x << 10.0, 20.0, 30.0, 40.0;
  Eigen::VectorXd w(4);
  w << 0.5, 0.5, 0.0, 0.0;
  FilterCloud c = make_cloud(x, w);
  CounterRng rng(6, 1);
  resample(c, ResampleScheme::kSystematic, rng);
  CHECK(c.weights.isApproxToConstant(0.25));
  int tens = 0, twenties = 0;
  for (int i = 0; i < 4; ++i) {
    tens += c.particles(0, i) == 10.0;
    twenties += c.particles(0, i) == 20.0;
  }
  CHECK(tens == 2);
  CHECK(twenties == 2);

  FilterCloud d = make_cloud(x, one_hot.head(4));
  resample(d, ResampleScheme::kMultinomial, rng);
  CHECK(d.particles.isApproxToConstant(40.0));
}

TEST_CASE("quantized features find separated clusters") {
  CounterRng rng(7, 1);
  const int M = 400;
  Eigen::MatrixXd x(1, M);
  for (int i = 0; i < M; ++i) x(0, i) = (i % 2 ? 5.0 : -5.0) + 0.1 * rng.normal();
  const Eigen::MatrixXd c = kmeans(x, Eigen::VectorXd::Constant(M, 1.0 / M), 2);
  REQUIRE(c.cols() == 2);
  CHECK(c(0, 0) == doctest::Approx(-5.0).epsilon(0.02));
  CHECK(c(0, 1) == doctest::Approx(5.0).epsilon(0.02));
  CHECK_THROWS_AS(kmeans(x, Eigen::VectorXd::Constant(M, 1.0 / M), 0), ValidationError);
}

TEST_CASE("feature maps and dimensions") {
  const Benchmark b = make_benchmark("uncontrolled2d");
  FilterOptions o;
  o.particles = 64;
  CounterRng rng(8, 1);
  const FilterCloud cloud = init_filter(b.spec, o, rng);
  for (auto [name, map] : {std::pair{"mean", FeatureMap::kMean},
                           std::pair{"moments", FeatureMap::kMoments},
                           std::pair{"quantized", FeatureMap::kQuantized}}) {
    CHECK(parse_feature_map(name) == map);
    CHECK(to_string(map) == name);
    o.features = map;
    CHECK(flatten_features(cloud, b.spec, o).size() == feature_dimension(b.spec, o));
  }
  CHECK_THROWS_AS(parse_feature_map("bogus"), ValidationError);
}
