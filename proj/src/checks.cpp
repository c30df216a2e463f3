#include "rbsd/checks.hpp"

#include <cmath>
#include <sstream>

#include "rbsd/benchmarks.hpp"
#include "rbsd/bsde.hpp"
#include "rbsd/filter.hpp"
#include "rbsd/forward.hpp"
#include "rbsd/randomizer.hpp"
#include "rbsd/scenario.hpp"

namespace rbsd {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

CheckResult z_constant_without_likelihood_drift(std::uint64_t seed) {
  LqgParams p;
  p.c = 0.0;
  const ProblemSpec spec = build_classical_po_problem(lqg_raw_spec(p));
  const ControlGrid grid = make_scalar_grid(p.controls, 1.0, p.anchor);
  const TimeGrid tg = make_uniform_grid(1.0, 16);
  const int zi = spec.likelihood->z_index;
  double worst = 0.0;
  for (std::uint64_t i = 0; i < 50; ++i) {
    const MarkedPath path = simulate_randomized_path(spec, grid, tg, seed, i);
    worst = std::max(worst, (path.x.col(zi).array() - 1.0).abs().maxCoeff());
  }
  return {"z-constant-when-h-zero", worst == 0.0, "max |Z - 1| = " + fmt(worst)};
}

CheckResult kappa_martingale(std::uint64_t seed) {
  const ControlGrid grid = make_scalar_grid({-1.0, 0.0, 1.0}, 2.0, 1);
  const TimeGrid tg = make_uniform_grid(1.0, 8);
  const IntensityControl nu = deterministic_intensity(
      [](double t, int j) { return 0.5 + j + std::sin(6.0 * t); }, 0.05, 20.0);
  const int P = 20000;
  Eigen::VectorXd k(P);
  const ProblemSpec spec = make_bangbang1d().spec;
  for (int i = 0; i < P; ++i) {
    PathOptions po;
    po.nu = &nu;
    po.simulate_state = false;
    po.keep_arrays = false;
    k(i) = simulate_randomized_path(spec, grid, tg, seed, i, po).kappa_T;
  }
  const McEstimate e = mc_estimate(k);
  return {"kappa-martingale", std::abs(e.mean - 1.0) <= 4.0 * e.stderr,
          "mean " + fmt(e.mean) + " +- " + fmt(e.stderr)};
}

CheckResult poisson_count(std::uint64_t seed) {
  const ControlGrid grid = make_scalar_grid({0.0, 1.0}, 2.0, 0);
  const int P = 20000;
  Eigen::VectorXd n(P);
  for (int i = 0; i < P; ++i) {
    CounterRng rng(seed, stream_id(i, Stream::kMarks));
    n(i) = static_cast<double>(simulate_marks_poisson(grid, 1.0, rng).size());
  }
  const McEstimate e = mc_estimate(n);
  return {"poisson-mean-count", std::abs(e.mean - 2.0) <= 4.0 * e.stderr,
          "mean " + fmt(e.mean) + " +- " + fmt(e.stderr)};
}

CheckResult cadlag_marks() {
  JumpRecord r;
  r.initial_mark = 2;
  r.push(0.3, 0);
  r.push(0.7, 1);
  const bool ok = r.mark_at(0.0) == 2 && r.mark_at(0.3) == 0 && r.mark_at(0.3 - 1e-9) == 2 &&
                  r.mark_at(0.7) == 1 && r.mark_before(0.7) == 0 && r.mark_at(1.0) == 1;
  return {"jump-record-cadlag", ok, ok ? "ok" : "mark evaluation mismatch"};
}

CheckResult filter_normalized(std::uint64_t seed) {
  const Benchmark b = make_lqg_po();
  FilterOptions fo;
  fo.particles = 200;
  const TimeGrid tg = make_uniform_grid(1.0, 32);
  FilterTracker tracker(b.spec, tg, fo, seed, 0);
  PathOptions po;
  po.observer = &tracker;
  simulate_randomized_path(b.spec, b.grid, tg, seed, 0, po);
  const double dev = std::abs(tracker.cloud().weights.sum() - 1.0);
  const bool ok = dev < 1e-12 && tracker.cloud().weights.minCoeff() >= 0.0;
  return {"filter-weights-normalized", ok, "|sum w - 1| = " + fmt(dev)};
}

CheckResult constant_gain_bsde(std::uint64_t seed, int threads) {
  Benchmark b = make_bangbang1d(3.0);
  b.spec.terminal_gain = [](StateBlock x, Eigen::VectorXd& out) { out.setOnes(x.cols()); };
  const TimeGrid tg = make_uniform_grid(1.0, 8);
  ScenarioOptions so;
  so.paths = 2000;
  so.seed = seed;
  so.threads = threads;
  so.resample_marks = true;
  const ScenarioBatch batch = generate_scenarios(b.spec, b.grid, tg, so);
  const BsdeSolution sol = solve_constrained(batch, b.spec, b.grid);
  return {"constant-terminal-bsde", std::abs(sol.y0 - 1.0) <= 1e-6, "y0 = " + fmt(sol.y0)};
}

CheckResult scenario_determinism(std::uint64_t seed) {
  const Benchmark b = make_uncontrolled2d();
  const TimeGrid tg = make_uniform_grid(1.0, 8);
  ScenarioOptions so;
  so.paths = 300;
  so.seed = seed;
  so.filter.particles = 16;
  so.threads = 1;
  const ScenarioBatch one = generate_scenarios(b.spec, b.grid, tg, so);
  so.threads = 3;
  const ScenarioBatch three = generate_scenarios(b.spec, b.grid, tg, so);
  bool same = one.terminal == three.terminal && one.running == three.running;
  for (std::size_t k = 0; k < one.features.size(); ++k)
    same = same && one.features[k] == three.features[k];
  return {"thread-count-independence", same, same ? "bit-identical" : "batches differ"};
}

CheckResult timechange_identity(std::uint64_t seed) {
  const ControlGrid grid = make_scalar_grid({-1.0, 0.0, 1.0}, 1.5, 1);
  const IntensityControl one = constant_intensity(1.0);
  const FeaturePath w;
  double worst = 0.0;
  for (std::uint64_t i = 0; i < 200; ++i) {
    CounterRng r1(seed, stream_id(i, Stream::kMarks)), r2(seed, stream_id(i, Stream::kAux));
    const JumpRecord skel = simulate_marks_poisson(grid, 1.0, r1);
    const JumpRecord out = construct_timechange_process(grid, 1.0, one, skel, w, r2);
    if (out.size() != skel.size()) return {"timechange-identity", false, "jump count differs"};
    for (std::size_t n = 0; n < out.size(); ++n)
      worst = std::max(worst, std::abs(out.times[n] - skel.times[n]));
  }
  return {"timechange-identity", worst < 1e-9, "max |T^nu - T| = " + fmt(worst)};
}

}  // namespace

std::vector<CheckResult> run_invariant_checks(std::uint64_t seed, int threads) {
  return {
      z_constant_without_likelihood_drift(seed),
      kappa_martingale(seed),
      poisson_count(seed),
      cadlag_marks(),
      filter_normalized(seed),
      constant_gain_bsde(seed, threads),
      scenario_determinism(seed),
      timechange_identity(seed),
  };
}

}  // namespace rbsd
