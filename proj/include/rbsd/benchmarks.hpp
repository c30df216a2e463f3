#pragma once

#include <string>
#include <vector>

#include "rbsd/model.hpp"

namespace rbsd {

/// Scalar linear-quadratic problem under the physical law:
///   dX = (a X + b_u u) dt + s dV,  dO = c X dt + dW_bar,
///   gain = -E[ int (q X^2 + r u^2) dt + p X_T^2 ],  X_0 ~ N(m0, p0).
struct LqgParams {
  double a = 0.0;
  double b_u = 1.0;
  double s = 1.0;
  double c = 0.5;
  double q = 0.0;
  double r = 0.25;
  double p = 1.0;
  double m0 = 0.0;
  double p0 = 1.0;
  double horizon = 1.0;
  std::vector<double> controls{-2.0, -1.0, 0.0, 1.0, 2.0};
  int anchor = 2;
};

/// Portfolio with an unobserved Ornstein-Uhlenbeck return factor and
/// log-price observation.
struct PortfolioParams {
  double rate = 0.02;
  double vol = 0.3;
  double drift_mid = 0.05;
  double drift_amp = 0.1;
  double factor_reversion = 1.0;
  double factor_vol = 0.5;
  double factor_sd0 = 0.5;
  double wealth0 = 1.0;
  double horizon = 1.0;
  std::vector<double> controls{0.0, 0.5, 1.0};
  int anchor = 0;
};

struct Benchmark {
  std::string name;
  ProblemSpec spec;
  ControlGrid grid;
  int steps = 32;
  int particles = 1;
  int degree = 2;
  std::string features = "moments";
};

/// dX = a dt + dW on A = {-1, 0, 1}, g = -x^2, T = 1, x0 = 0, fully observed.
Benchmark make_bangbang1d(double total_mass = 1.0);
Benchmark make_lqg_po(const LqgParams& p = {}, double total_mass = 1.0);
Benchmark make_latent_portfolio(const PortfolioParams& p = {}, double total_mass = 1.0);
/// Two coupled linear coordinates, one driven by unobserved noise; gains and
/// dynamics ignore the control.
Benchmark make_uncontrolled2d(double total_mass = 1.0);

RawClassicalSpec lqg_raw_spec(const LqgParams& p);
RawLatentSpec portfolio_raw_spec(const PortfolioParams& p);

std::vector<std::string> benchmark_names();
/// Throws ValidationError for unknown names.
Benchmark make_benchmark(const std::string& name, double total_mass = 1.0);

}  // namespace rbsd
