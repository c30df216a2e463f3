#include "rbsd/dual.hpp"

#include <algorithm>
#include <fstream>
#include <memory>

#include "rbsd/errors.hpp"
#include "rbsd/forward.hpp"
#include "rbsd/parallel.hpp"

namespace rbsd {

int IntensityFamily::cell(double t) const {
  // Left-continuous cells (breaks[b], breaks[b+1]]; t = 0 belongs to cell 0.
  const auto it = std::lower_bound(breaks.begin() + 1, breaks.end() - 1, t);
  return static_cast<int>(it - (breaks.begin() + 1));
}

IntensityControl IntensityFamily::control() const {
  IntensityControl nu;
  nu.lower = lower;
  nu.upper = upper;
  // Copies keep the control valid after the family goes away.
  nu.eval = [fam = *this](double t, const HistoryView&, const Eigen::VectorXd& features,
                          int j) {
    double v = fam.theta(fam.cell(t), j);
    if (fam.eta.size() > 0 && features.size() > 0) v += fam.eta(j) * features(0);
    return std::clamp(v, fam.lower, fam.upper);
  };
  return nu;
}

IntensityFamily make_intensity_family(const ControlGrid& grid, double horizon, int cells,
                                      double lower, double upper) {
  if (cells < 1) throw ValidationError("intensity family needs at least one cell");
  if (!(lower > 0.0) || !(upper >= lower)) throw ValidationError("bad intensity bounds");
  IntensityFamily f;
  for (int b = 0; b <= cells; ++b) f.breaks.push_back(horizon * b / cells);
  f.theta = Eigen::MatrixXd::Ones(cells, grid.size()).cwiseMax(lower).cwiseMin(upper);
  f.lower = lower;
  f.upper = upper;
  return f;
}

void set_feedback_link(IntensityFamily& family, const ControlGrid& grid, double slope) {
  family.eta.resize(grid.size());
  for (int j = 0; j < grid.size(); ++j) family.eta(j) = -slope * grid.points[j](0);
}

McEstimate estimate_randomized_gain(const ProblemSpec& spec, const ControlGrid& grid,
                                    const TimeGrid& tgrid, const IntensityControl& nu,
                                    const GainOptions& options) {
  if (options.paths < 100) throw ValidationError("estimate_randomized_gain needs P >= 100");
  const std::size_t P = static_cast<std::size_t>(options.paths);
  Eigen::VectorXd samples(P);
  std::vector<char> ok(P, 0);
  parallel_for(P, options.threads, [&](std::size_t p) {
    std::unique_ptr<FilterTracker> tracker;
    if (options.track_features)
      tracker = std::make_unique<FilterTracker>(spec, tgrid, options.filter, options.seed, p);
    PathOptions po;
    po.law = options.mode == GainMode::kDirect ? MarkLaw::kControlled : MarkLaw::kReference;
    po.nu = &nu;
    po.keep_arrays = false;
    po.observer = tracker.get();
    const MarkedPath path = simulate_randomized_path(spec, grid, tgrid, options.seed, p, po);
    ok[p] = path.valid;
    samples(p) = !path.valid ? 0.0
                 : options.mode == GainMode::kDirect ? path.gain
                                                     : path.kappa_T * path.gain;
  });
  std::vector<double> kept;
  kept.reserve(P);
  for (std::size_t p = 0; p < P; ++p)
    if (ok[p]) kept.push_back(samples(p));
  if (static_cast<double>(P - kept.size()) > 1e-3 * static_cast<double>(P))
    throw NumericError("too many randomized paths blew up");
  return mc_estimate(Eigen::Map<Eigen::VectorXd>(kept.data(), kept.size()));
}

SearchResult search_intensity(const ProblemSpec& spec, const ControlGrid& grid,
                              const TimeGrid& tgrid, const IntensityFamily& start, int budget,
                              const GainOptions& options) {
  if (budget < 1) throw ValidationError("search budget must be >= 1");
  GainOptions opts = options;
  opts.track_features = options.track_features || start.uses_features();

  SearchResult res;
  res.best = start;
  int evals = 0;
  auto evaluate = [&](const IntensityFamily& fam, int cell, int control, double mult) {
    const McEstimate e = estimate_randomized_gain(spec, grid, tgrid, fam.control(), opts);
    res.rows.push_back({evals++, cell, control, mult, fam.theta, e});
    res.max_gain = res.rows.size() == 1 ? e.mean : std::max(res.max_gain, e.mean);
    return e;
  };
  res.best_gain = evaluate(res.best, -1, -1, 1.0);

  static constexpr double kMultipliers[] = {0.25, 0.5, 2.0, 4.0};
  const int coords = start.cells() * grid.size();
  bool improved_in_sweep = false;
  for (int c = 0, sweep = 0; evals < budget; c = (c + 1) % coords) {
    if (c == 0 && sweep++ > 0) {
      if (!improved_in_sweep) break;
      improved_in_sweep = false;
    }
    const int cell = c / grid.size(), j = c % grid.size();
    IntensityFamily best_here = res.best;
    McEstimate best_est = res.best_gain;
    for (double m : kMultipliers) {
      if (evals >= budget) break;
      IntensityFamily cand = res.best;
      const double v = std::clamp(cand.theta(cell, j) * m, cand.lower, cand.upper);
      if (v == cand.theta(cell, j)) continue;
      cand.theta(cell, j) = v;
      const McEstimate e = evaluate(cand, cell, j, m);
      if (e.mean > best_est.mean) {
        best_est = e;
        best_here = cand;
      }
    }
    if (best_est.mean > res.best_gain.mean) {
      res.best = best_here;
      res.best_gain = best_est;
      improved_in_sweep = true;
    }
  }

  GainOptions fresh = opts;
  fresh.seed = options.seed ^ 0x9e3779b97f4a7c15ULL;
  res.fresh_gain = estimate_randomized_gain(spec, grid, tgrid, res.best.control(), fresh);
  return res;
}

void write_search_csv(const std::string& file, const SearchResult& result) {
  std::ofstream out(file);
  if (!out) throw ValidationError("cannot open " + file);
  out << "evaluation,cell,control,multiplier,theta,gain,stderr\n";
  out.precision(17);
  for (const auto& r : result.rows) {
    out << r.evaluation << ',' << r.cell << ',' << r.control << ',' << r.multiplier << ',';
    for (Eigen::Index i = 0; i < r.theta.size(); ++i)
      out << (i ? ";" : "") << r.theta(i / r.theta.cols(), i % r.theta.cols());
    out << ',' << r.gain.mean << ',' << r.gain.stderr << '\n';
  }
}

}  // namespace rbsd
