#include "rbsd/benchmarks.hpp"

#include <cmath>

#include "rbsd/errors.hpp"

namespace rbsd {

Benchmark make_bangbang1d(double total_mass) {
  ProblemSpec s;
  s.name = "bangbang1d";
  s.dim_x = 1;
  s.dim_v = 0;
  s.dim_w = 1;
  s.horizon = 1.0;
  s.drift = [](double, StateBlock x, const Control& a, Eigen::MatrixXd& out) {
    out.setConstant(1, x.cols(), a(0));
  };
  s.diff_v = [](double, StateBlock x, const Control&, Eigen::MatrixXd& out) {
    out.resize(0, x.cols());
  };
  s.diff_w = [](double, StateBlock x, const Control&, Eigen::MatrixXd& out) {
    out.setOnes(1, x.cols());
  };
  s.running_gain = [](double, StateBlock x, const Control&, Eigen::VectorXd& out) {
    out.setZero(x.cols());
  };
  s.terminal_gain = [](StateBlock x, Eigen::VectorXd& out) {
    out = -x.row(0).transpose().array().square();
  };
  s.init_sampler = [](CounterRng&, Eigen::Ref<Eigen::VectorXd> x0) { x0.setZero(); };
  s.init_deterministic = true;
  s.bounds = {0.0, 1.0, 2.0};

  Benchmark b;
  b.name = s.name;
  b.spec = std::move(s);
  b.grid = make_scalar_grid({-1.0, 0.0, 1.0}, total_mass, 1);
  b.steps = 32;
  b.particles = 1;
  // The value function bends sharply near the switching curve; degree 2 sits
  // about 15% above the lattice value, degree 8 (with clipped features)
  // within 3%.
  b.degree = 8;
  b.features = "mean";
  return b;
}

RawClassicalSpec lqg_raw_spec(const LqgParams& p) {
  RawClassicalSpec raw;
  raw.name = "lqg_po";
  raw.dim_xbar = 1;
  raw.dim_v = 1;
  raw.dim_w = 1;
  raw.horizon = p.horizon;
  raw.bbar = [p](double, StateBlock y, const Control& a, Eigen::MatrixXd& out) {
    out = (p.a * y.row(0).array() + p.b_u * a(0)).matrix();
  };
  raw.h = [p](double, StateBlock y, const Control&, Eigen::MatrixXd& out) {
    out = p.c * y.row(0);
  };
  raw.sigma1 = [p](double, StateBlock y, const Control&, Eigen::MatrixXd& out) {
    out.setConstant(1, y.cols(), p.s);
  };
  raw.sigma2 = [](double, StateBlock y, const Control&, Eigen::MatrixXd& out) {
    out.setZero(1, y.cols());
  };
  raw.k = [](double, StateBlock o, Eigen::MatrixXd& out) { out.setOnes(1, o.cols()); };
  raw.fbar = [p](double, StateBlock y, const Control& a, Eigen::VectorXd& out) {
    out = -(p.q * y.row(0).transpose().array().square() + p.r * a(0) * a(0));
  };
  raw.gbar = [p](StateBlock y, Eigen::VectorXd& out) {
    out = -p.p * y.row(0).transpose().array().square();
  };
  raw.init_xbar = [p](CounterRng& rng, Eigen::Ref<Eigen::VectorXd> x) {
    x(0) = p.m0 + std::sqrt(p.p0) * rng.normal();
  };
  raw.init_deterministic = p.p0 == 0.0;
  raw.o0 = Eigen::VectorXd::Zero(1);
  raw.kinv_h_bound = 10.0 * std::abs(p.c) + 1.0;
  raw.bounds = {std::abs(p.a) + std::abs(p.c) * std::abs(p.c) * 10.0, 1.0, 2.0};
  return raw;
}

Benchmark make_lqg_po(const LqgParams& p, double total_mass) {
  Benchmark b;
  b.name = "lqg_po";
  b.spec = build_classical_po_problem(lqg_raw_spec(p));
  b.spec.name = "lqg_po";
  b.grid = make_scalar_grid(p.controls, total_mass, p.anchor);
  b.steps = 32;
  b.particles = 2000;
  b.degree = 2;
  b.features = "mean";
  return b;
}

RawLatentSpec portfolio_raw_spec(const PortfolioParams& p) {
  RawLatentSpec raw;
  raw.name = "latent_portfolio";
  raw.dim_xbar = 1;
  raw.dim_m = 1;
  raw.dim_v = 1;
  raw.dim_w = 1;
  raw.horizon = p.horizon;
  auto ret = [p](const Eigen::ArrayXXd& m) -> Eigen::ArrayXXd {
    return p.drift_mid + p.drift_amp * m.tanh();
  };
  raw.bbar = [p, ret](double, StateBlock y, const Control& a, Eigen::MatrixXd& out) {
    const auto x = y.row(0).array();
    out = (x * (p.rate + a(0) * (ret(y.row(1).array()) - p.rate))).matrix();
  };
  raw.sigma1 = [](double, StateBlock y, const Control&, Eigen::MatrixXd& out) {
    out.setZero(1, y.cols());
  };
  raw.sigma2 = [p](double, StateBlock y, const Control& a, Eigen::MatrixXd& out) {
    out = a(0) * p.vol * y.row(0);
  };
  raw.beta = [p](double, StateBlock m, Eigen::MatrixXd& out) { out = -p.factor_reversion * m; };
  raw.gamma1 = [p](double, StateBlock m, Eigen::MatrixXd& out) {
    out.setConstant(1, m.cols(), p.factor_vol);
  };
  raw.gamma2 = [](double, StateBlock m, Eigen::MatrixXd& out) { out.setZero(1, m.cols()); };
  raw.h = [p, ret](double, StateBlock mo, Eigen::MatrixXd& out) {
    out = (ret(mo.row(0).array()) - 0.5 * p.vol * p.vol).matrix();
  };
  raw.k = [p](double, StateBlock o, Eigen::MatrixXd& out) { out.setConstant(1, o.cols(), p.vol); };
  raw.fbar = [](double, StateBlock y, const Control&, Eigen::VectorXd& out) {
    out.setZero(y.cols());
  };
  // Power utility with exponent 1/2, normalized so that U(1) = 0.
  raw.gbar = [](StateBlock y, Eigen::VectorXd& out) {
    out = 2.0 * (y.row(0).transpose().array().max(0.0).sqrt() - 1.0);
  };
  raw.init_xbar_m = [p](CounterRng& rng, Eigen::Ref<Eigen::VectorXd> x) {
    x(0) = p.wealth0;
    x(1) = p.factor_sd0 * rng.normal();
  };
  raw.init_deterministic = p.factor_sd0 == 0.0;
  raw.o0 = Eigen::VectorXd::Zero(1);
  raw.kinv_h_bound = (std::abs(p.drift_mid) + std::abs(p.drift_amp) + 0.5 * p.vol * p.vol) / p.vol;
  raw.bounds = {p.rate + 2.0 * (std::abs(p.drift_mid) + std::abs(p.drift_amp)) + p.vol * p.vol +
                    p.factor_reversion,
                1.0, 2.0};
  return raw;
}

Benchmark make_latent_portfolio(const PortfolioParams& p, double total_mass) {
  Benchmark b;
  b.name = "latent_portfolio";
  b.spec = build_latent_factor_problem(portfolio_raw_spec(p));
  b.grid = make_scalar_grid(p.controls, total_mass, p.anchor);
  b.steps = 32;
  b.particles = 256;
  b.degree = 2;
  b.features = "moments";
  return b;
}

Benchmark make_uncontrolled2d(double total_mass) {
  ProblemSpec s;
  s.name = "uncontrolled2d";
  s.dim_x = 2;
  s.dim_v = 1;
  s.dim_w = 1;
  s.horizon = 1.0;
  s.drift = [](double, StateBlock x, const Control&, Eigen::MatrixXd& out) {
    out.resize(2, x.cols());
    out.row(0) = -0.5 * x.row(0);
    out.row(1) = 0.5 * (x.row(0) - x.row(1));
  };
  s.diff_v = [](double, StateBlock x, const Control&, Eigen::MatrixXd& out) {
    out.resize(2, x.cols());
    out.row(0).setConstant(0.6);
    out.row(1).setZero();
  };
  s.diff_w = [](double, StateBlock x, const Control&, Eigen::MatrixXd& out) {
    out.resize(2, x.cols());
    out.row(0).setZero();
    out.row(1).setConstant(0.5);
  };
  s.running_gain = [](double, StateBlock x, const Control&, Eigen::VectorXd& out) {
    out = -0.25 * x.row(0).transpose().array().square();
  };
  s.terminal_gain = [](StateBlock x, Eigen::VectorXd& out) {
    out = x.row(1).transpose().array().sin() - 0.5 * x.row(0).transpose().array().square();
  };
  s.init_sampler = [](CounterRng& rng, Eigen::Ref<Eigen::VectorXd> x0) {
    x0(0) = 0.5 * rng.normal();
    x0(1) = 0.5 * rng.normal();
  };
  s.init_deterministic = false;
  s.bounds = {0.5, 1.0, 2.0};

  Benchmark b;
  b.name = s.name;
  b.spec = std::move(s);
  b.grid = make_scalar_grid({0.0, 1.0}, total_mass, 0);
  b.steps = 16;
  b.particles = 32;
  b.degree = 2;
  b.features = "moments";
  return b;
}

std::vector<std::string> benchmark_names() {
  return {"bangbang1d", "lqg_po", "latent_portfolio", "uncontrolled2d"};
}

Benchmark make_benchmark(const std::string& name, double total_mass) {
  if (name == "bangbang1d") return make_bangbang1d(total_mass);
  if (name == "lqg_po") return make_lqg_po({}, total_mass);
  if (name == "latent_portfolio") return make_latent_portfolio({}, total_mass);
  if (name == "uncontrolled2d") return make_uncontrolled2d(total_mass);
  throw ValidationError("unknown problem '" + name + "'");
}

}  // namespace rbsd
