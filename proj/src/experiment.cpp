#include "rbsd/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <sstream>

#include "rbsd/benchmarks.hpp"
#include "rbsd/dual.hpp"
#include "rbsd/errors.hpp"
#include "rbsd/oracles.hpp"
#include "rbsd/scenario.hpp"

namespace rbsd {

using nlohmann::json;

Settings Settings::from_config(const Config& cfg) {
  auto key = [&](const std::string& k) { return cfg.has("run." + k) ? "run." + k : k; };
  Settings s;
  s.problem = cfg.get(key("problem"), s.problem);
  s.mode = cfg.get(key("mode"), s.mode);
  s.paths = cfg.get_int(key("paths"), s.paths);
  s.steps = static_cast<int>(cfg.get_int(key("steps"), s.steps));
  s.particles = static_cast<int>(cfg.get_int(key("particles"), s.particles));
  s.degree = static_cast<int>(cfg.get_int(key("degree"), s.degree));
  s.features = cfg.get(key("features"), s.features);
  s.lambda = cfg.get_double(key("lambda"), s.lambda);
  s.penalty_n = static_cast<int>(cfg.get_int(key("penalty-n"), s.penalty_n));
  s.penalty_scheme = cfg.get(key("penalty-scheme"), s.penalty_scheme);
  s.resampling = cfg.get(key("resampling"), s.resampling);
  s.seed = static_cast<std::uint64_t>(cfg.get_int(key("seed"), static_cast<std::int64_t>(s.seed)));
  s.threads = static_cast<int>(cfg.get_int(key("threads"), s.threads));
  s.budget = static_cast<int>(cfg.get_int(key("budget"), s.budget));
  s.cells = static_cast<int>(cfg.get_int(key("cells"), s.cells));
  s.link_slope = cfg.get_double(key("link-slope"), s.link_slope);
  s.dual_lambda = cfg.get_double(key("dual-lambda"), s.dual_lambda);
  s.policy_paths = cfg.get_int(key("policy-paths"), s.policy_paths);
  s.oracle_paths = cfg.get_int(key("oracle-paths"), s.oracle_paths);
  s.levels = static_cast<int>(cfg.get_int(key("levels"), s.levels));
  return s;
}

namespace {

struct Resolved {
  Settings s;
  Benchmark bench;
  TimeGrid tgrid;
  FilterOptions filter;
  BsdeOptions bsde;
  bool resample = false;
};

MarkResampling parse_resampling(const std::string& v) {
  if (v == "auto") return MarkResampling::kAuto;
  if (v == "on") return MarkResampling::kOn;
  if (v == "off") return MarkResampling::kOff;
  throw ValidationError("resampling must be auto, on or off");
}

Resolved resolve(const Settings& in) {
  Resolved r;
  r.s = in;
  if (!(in.lambda > 0.0)) throw ValidationError("lambda must be positive");
  if (in.paths < 2) throw ValidationError("paths must be at least 2");
  if (in.threads < 1) throw ValidationError("threads must be at least 1");
  r.bench = make_benchmark(in.problem, in.lambda);
  Settings& s = r.s;
  if (s.steps == 0) s.steps = r.bench.steps;
  if (s.particles == 0) s.particles = r.bench.particles;
  if (s.degree == 0) s.degree = r.bench.degree;
  if (s.features.empty()) s.features = r.bench.features;
  if (s.steps < 1 || s.particles < 1 || s.degree < 1)
    throw ValidationError("steps, particles and degree must be positive");
  r.tgrid = make_uniform_grid(r.bench.spec.horizon, s.steps);
  r.filter.particles = s.particles;
  r.filter.features = parse_feature_map(s.features);
  r.bsde.degree = s.degree;
  if (s.penalty_scheme == "implicit") r.bsde.penalty_scheme = PenaltyScheme::kImplicit;
  else if (s.penalty_scheme == "explicit") r.bsde.penalty_scheme = PenaltyScheme::kExplicit;
  else throw ValidationError("penalty-scheme must be implicit or explicit");
  r.resample = resolve_mark_resampling(parse_resampling(s.resampling), r.bench.grid);
  static const char* modes[] = {"constrained", "penalized", "dual", "primal", "oracle"};
  if (std::find(std::begin(modes), std::end(modes), s.mode) == std::end(modes))
    throw ValidationError("unknown mode '" + s.mode + "'");
  return r;
}

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << v;
  return os.str();
}

std::string timestamp(std::chrono::system_clock::time_point tp) {
  const std::time_t t = std::chrono::system_clock::to_time_t(tp);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json estimate_json(const McEstimate& e) {
  return {{"mean", e.mean}, {"stderr", e.stderr}, {"n", e.n}};
}

/// Oracle value for the benchmark, or null when none applies.
json oracle_json(const Resolved& r) {
  const Benchmark& b = r.bench;
  if (b.name == "bangbang1d") {
    const ValidatedHjb h = hjb_with_doubling(b.spec, b.grid, r.tgrid);
    return {{"kind", "hjb_lattice"},
            {"value", h.fine.value},
            {"coarse_value", h.coarse.value},
            {"relative_change", h.relative_change},
            {"validated", h.validated}};
  }
  if (b.name == "lqg_po") {
    const LqgOracle o = lqg_kalman_value(LqgParams{}, r.tgrid, r.s.oracle_paths, r.s.seed);
    return {{"kind", "kalman_riccati"},
            {"value", o.continuous_value},
            {"continuous_value", o.continuous_value},
            {"projected", estimate_json(o.projected)},
            {"warnings", o.warnings}};
  }
  if (b.name == "uncontrolled2d") {
    const McEstimate e = plain_mc_value(b.spec, b.grid, r.tgrid, r.s.oracle_paths, r.s.seed);
    return {{"kind", "plain_mc"}, {"value", e.mean}, {"stderr", e.stderr}};
  }
  return nullptr;
}

json base_report(const Resolved& r) {
  const Config cfg = r.s.resolved();
  json rep;
  rep["problem"] = r.s.problem;
  rep["mode"] = r.s.mode;
  rep["config_hash"] = hex(cfg.hash());
  rep["settings"] = cfg.entries();
  return rep;
}

}  // namespace

Config Settings::resolved() const {
  const Resolved r = resolve(*this);
  const Settings& s = r.s;
  Config c;
  c.set("problem", s.problem);
  c.set("mode", s.mode);
  c.set("paths", std::to_string(s.paths));
  c.set("steps", std::to_string(s.steps));
  c.set("particles", std::to_string(s.particles));
  c.set("degree", std::to_string(s.degree));
  c.set("features", s.features);
  std::ostringstream d;
  d.precision(17);
  d << s.lambda;
  c.set("lambda", d.str());
  c.set("penalty-n", std::to_string(s.penalty_n));
  c.set("penalty-scheme", s.penalty_scheme);
  c.set("resampling", s.resampling);
  c.set("seed", std::to_string(s.seed));
  c.set("threads", std::to_string(s.threads));
  c.set("budget", std::to_string(s.budget));
  c.set("cells", std::to_string(s.cells));
  d.str("");
  d << s.link_slope;
  c.set("link-slope", d.str());
  d.str("");
  d << s.dual_lambda;
  c.set("dual-lambda", d.str());
  c.set("policy-paths", std::to_string(s.policy_paths));
  c.set("oracle-paths", std::to_string(s.oracle_paths));
  c.set("levels", std::to_string(s.levels));
  return c;
}

json solution_json(const BsdeSolution& sol) {
  json j;
  j["y0"] = sol.y0;
  j["stderr"] = sol.stderr;
  j["mode"] = sol.mode;
  if (sol.mode == "penalized") j["n"] = sol.penalty_n;
  j["knots"] = sol.knots;
  json cov = json::array(), res = json::array();
  for (Eigen::Index k = 0; k < sol.coverage.rows(); ++k) {
    std::vector<int> c(sol.coverage.cols());
    std::vector<double> e(sol.residuals.cols());
    for (Eigen::Index a = 0; a < sol.coverage.cols(); ++a) {
      c[a] = sol.coverage(k, a);
      e[a] = sol.residuals(k, a);
    }
    cov.push_back(c);
    res.push_back(e);
  }
  j["bucket_coverage"] = cov;
  j["residuals"] = res;
  j["time0_values"] = std::vector<double>(sol.time0_values.data(),
                                          sol.time0_values.data() + sol.time0_values.size());
  j["warnings"] = sol.warnings;
  j["scenarios"] = sol.scenarios;
  j["config_hash"] = hex(sol.config_hash);
  return j;
}

std::string knot_table_csv(const BsdeSolution& sol) {
  std::ostringstream os;
  os.precision(17);
  const Eigen::Index J = sol.coverage.cols();
  os << "k,t";
  for (Eigen::Index a = 0; a < J; ++a) os << ",coverage_" << a;
  for (Eigen::Index a = 0; a < J; ++a) os << ",residual_" << a;
  os << '\n';
  for (Eigen::Index k = 0; k < sol.coverage.rows(); ++k) {
    os << k << ',' << sol.knots[k];
    for (Eigen::Index a = 0; a < J; ++a) os << ',' << sol.coverage(k, a);
    for (Eigen::Index a = 0; a < J; ++a) os << ',' << sol.residuals(k, a);
    os << '\n';
  }
  return os.str();
}

RunOutput run_solve(const Settings& settings) {
  const auto started = std::chrono::system_clock::now();
  const Resolved r = resolve(settings);
  const Settings& s = r.s;
  const Benchmark& b = r.bench;
  RunOutput out;
  json rep = base_report(r);
  const std::uint64_t hash = s.resolved().hash();

  if (s.mode == "constrained" || s.mode == "penalized" || s.mode == "primal") {
    ScenarioOptions so;
    so.paths = s.paths;
    so.seed = s.seed;
    so.threads = s.threads;
    so.filter = r.filter;
    so.resample_marks = r.resample;
    const ScenarioBatch batch = generate_scenarios(b.spec, b.grid, r.tgrid, so);
    BsdeSolution sol = s.mode == "penalized"
                           ? solve_penalized(batch, b.spec, b.grid, s.penalty_n, r.bsde)
                           : solve_constrained(batch, b.spec, b.grid, r.bsde);
    sol.config_hash = hash;
    rep["solution"] = solution_json(sol);
    rep["y0"] = sol.y0;
    rep["stderr"] = sol.stderr;
    rep["mark_resampling"] = r.resample;
    rep["dropped_scenarios"] = batch.dropped;
    if (s.mode == "primal" || s.policy_paths > 0) {
      const std::int64_t np = s.policy_paths > 0 ? s.policy_paths : s.paths;
      const McEstimate pol = evaluate_policy_from_solution(sol, b.spec, b.grid, r.tgrid, r.filter,
                                                           np, s.seed + 1, s.threads);
      rep["policy_gain"] = estimate_json(pol);
    }
    out.table_csv = knot_table_csv(sol);
  } else if (s.mode == "dual") {
    const double dl = s.dual_lambda > 0.0 ? s.dual_lambda : s.lambda;
    const ControlGrid grid = with_total_mass(b.grid, dl);
    IntensityFamily fam = make_intensity_family(grid, b.spec.horizon, s.cells);
    if (s.link_slope != 0.0) set_feedback_link(fam, grid, s.link_slope);
    GainOptions go;
    go.mode = GainMode::kDirect;
    go.paths = s.paths;
    go.seed = s.seed;
    go.threads = s.threads;
    go.filter = r.filter;
    const SearchResult res = search_intensity(b.spec, grid, r.tgrid, fam, s.budget, go);
    rep["best_gain"] = estimate_json(res.best_gain);
    rep["fresh_gain"] = estimate_json(res.fresh_gain);
    rep["max_gain"] = res.max_gain;
    rep["evaluations"] = res.rows.size();
    rep["y0"] = res.fresh_gain.mean;
    rep["stderr"] = res.fresh_gain.stderr;
    std::ostringstream os;
    os.precision(17);
    os << "evaluation,cell,control,multiplier,gain,stderr\n";
    for (const auto& row : res.rows)
      os << row.evaluation << ',' << row.cell << ',' << row.control << ',' << row.multiplier
         << ',' << row.gain.mean << ',' << row.gain.stderr << '\n';
    out.table_csv = os.str();
  }

  const json oracle = oracle_json(r);
  rep["oracle"] = oracle;
  if (!oracle.is_null() && rep.contains("y0")) {
    const double v = oracle["value"].get<double>();
    rep["relative_error"] = (rep["y0"].get<double>() - v) / std::max(std::abs(v), 1e-300);
  }
  if (s.mode == "oracle" && !oracle.is_null()) rep["y0"] = oracle["value"];

  const auto finished = std::chrono::system_clock::now();
  rep["metadata"] = {
      {"started", timestamp(started)},
      {"finished", timestamp(finished)},
      {"elapsed_seconds", std::chrono::duration<double>(finished - started).count()}};
  out.report = std::move(rep);
  return out;
}

RunOutput run_sweep(const Settings& settings) {
  const auto started = std::chrono::system_clock::now();
  const Resolved base = resolve(settings);
  if (base.s.levels < 1) throw ValidationError("levels must be at least 1");
  RunOutput out;
  json rep = base_report(base);
  rep["mode"] = "sweep";
  json rows = json::array();
  std::ostringstream csv;
  csv.precision(17);
  csv << "level,dt,paths,particles,y0,stderr\n";
  for (int l = 0; l < base.s.levels; ++l) {
    Settings s = base.s;
    s.mode = "constrained";
    s.steps = base.s.steps << l;
    s.paths = base.s.paths << (2 * l);
    s.particles = base.s.particles == 1 ? 1 : base.s.particles << (2 * l);
    const Resolved r = resolve(s);
    ScenarioOptions so;
    so.paths = s.paths;
    so.seed = s.seed;
    so.threads = s.threads;
    so.filter = r.filter;
    so.resample_marks = r.resample;
    const ScenarioBatch batch = generate_scenarios(r.bench.spec, r.bench.grid, r.tgrid, so);
    const BsdeSolution sol = solve_constrained(batch, r.bench.spec, r.bench.grid, r.bsde);
    const double dt = r.tgrid.dt(0);
    rows.push_back({{"level", l}, {"dt", dt}, {"paths", s.paths}, {"particles", s.particles},
                    {"y0", sol.y0}, {"stderr", sol.stderr}});
    csv << l << ',' << dt << ',' << s.paths << ',' << s.particles << ',' << sol.y0 << ','
        << sol.stderr << '\n';
  }
  rep["levels"] = rows;
  const auto finished = std::chrono::system_clock::now();
  rep["metadata"] = {
      {"started", timestamp(started)},
      {"finished", timestamp(finished)},
      {"elapsed_seconds", std::chrono::duration<double>(finished - started).count()}};
  out.report = std::move(rep);
  out.table_csv = csv.str();
  return out;
}

}  // namespace rbsd
