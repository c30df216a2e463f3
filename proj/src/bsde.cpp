#include "rbsd/bsde.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "rbsd/errors.hpp"
#include "rbsd/forward.hpp"
#include "rbsd/parallel.hpp"

namespace rbsd {

bool resolve_mark_resampling(MarkResampling mode, const ControlGrid& grid) {
  switch (mode) {
    case MarkResampling::kOn: return true;
    case MarkResampling::kOff: return false;
    case MarkResampling::kAuto: return grid.size() > 1;
  }
  return false;
}

McEstimate mc_estimate(const Eigen::VectorXd& samples) {
  McEstimate e;
  e.n = samples.size();
  if (e.n == 0) return e;
  e.mean = samples.mean();
  if (e.n > 1) {
    const double var = (samples.array() - e.mean).square().sum() / static_cast<double>(e.n - 1);
    e.stderr = std::sqrt(var / static_cast<double>(e.n));
  }
  return e;
}

Eigen::MatrixXd KnotModel::basis(const Eigen::MatrixXd& features) const {
  if (intercept_only) return Eigen::MatrixXd::Ones(features.rows(), 1);
  return polynomial_basis(standardizer.apply(features), degree);
}

Eigen::MatrixXd KnotModel::predict(const Eigen::MatrixXd& features) const {
  return basis(features) * coeffs;
}

int KnotModel::argmax(const Eigen::VectorXd& features) const {
  const Eigen::RowVectorXd v = predict(features.transpose()).row(0);
  int best = 0;
  for (int j = 1; j < v.size(); ++j)
    if (v(j) > v(best)) best = j;
  return best;
}

namespace {

std::string coverage_report(int k, const std::vector<int>& sizes, int need) {
  std::ostringstream os;
  os << "bucket coverage below " << need << " at knot " << k << ": sizes [";
  for (std::size_t j = 0; j < sizes.size(); ++j) os << (j ? ", " : "") << sizes[j];
  os << "]; raise Lambda or the path count, or enable mark resampling";
  return os.str();
}

/// Fits one regression per bucket {marks == j}. Column 0 of `targets` fills
/// coeffs, column 1 (if present) fills continuation.
KnotModel fit_knot(int k, const Eigen::MatrixXd& features, const Eigen::MatrixXd& targets,
                   const Eigen::Ref<const Eigen::RowVectorXi>& marks, int J,
                   const BsdeOptions& options, std::vector<std::string>& warnings) {
  KnotModel m;
  m.degree = options.degree;
  // F_0 is trivial: time-0 features are the prior summary, identical on every
  // scenario, so only the intercept carries information.
  m.intercept_only = k == 0 || features.cols() == 0;
  if (!m.intercept_only) {
    m.standardizer = Standardizer::fit(features);
    m.standardizer.clip = options.feature_clip;
    if (m.standardizer.output_dim() == 0) m.intercept_only = true;
  }
  const Eigen::MatrixXd B = m.basis(features);
  const Eigen::Index L = B.cols();
  const int need = std::max(options.min_bucket, 5 * static_cast<int>(L));

  std::vector<std::vector<Eigen::Index>> rows(J);
  for (Eigen::Index i = 0; i < marks.size(); ++i) rows[marks(i)].push_back(i);
  m.bucket_sizes.resize(J);
  for (int j = 0; j < J; ++j) m.bucket_sizes[j] = static_cast<int>(rows[j].size());
  for (int j = 0; j < J; ++j)
    if (m.bucket_sizes[j] < need) throw CoverageError(coverage_report(k, m.bucket_sizes, need));

  m.coeffs.resize(L, J);
  if (targets.cols() > 1) m.continuation.resize(L, J);
  m.residual_rms.resize(J);
  for (int j = 0; j < J; ++j) {
    const auto& r = rows[j];
    const Eigen::MatrixXd Bj = B(r, Eigen::all), Yj = targets(r, Eigen::all);
    const auto fit = truncated_least_squares(Bj, Yj, options.svd_threshold);
    if (fit.truncated) {
      m.truncated = true;
      warnings.push_back("knot " + std::to_string(k) + " bucket " + std::to_string(j) +
                         ": rank " + std::to_string(fit.rank) + " < " + std::to_string(L));
    }
    m.coeffs.col(j) = fit.coef.col(0);
    if (targets.cols() > 1) m.continuation.col(j) = fit.coef.col(1);
    m.residual_rms(j) = std::sqrt((Bj * fit.coef.col(0) - Yj.col(0)).squaredNorm() /
                                  static_cast<double>(r.size()));
  }
  return m;
}

Eigen::VectorXd numeraire_row(const ScenarioBatch& batch, int k, bool normalize) {
  if (!normalize) return Eigen::VectorXd::Ones(batch.size());
  return batch.numeraire.row(k).transpose();
}

void check_batch(const ScenarioBatch& batch, const ControlGrid& grid) {
  if (batch.controls != grid.size()) throw ValidationError("batch and grid disagree on J");
  if (batch.size() < 2) throw ValidationError("need at least two scenarios");
}

void fill_common(BsdeSolution& sol, const ScenarioBatch& batch, int J) {
  const int N = batch.steps();
  sol.knots = batch.tgrid.knots;
  sol.coverage.resize(N, J);
  sol.residuals.resize(N, J);
  sol.models.resize(N);
  sol.scenarios = batch.size();
}

void record(BsdeSolution& sol, int k, KnotModel model) {
  for (std::size_t j = 0; j < model.bucket_sizes.size(); ++j) {
    sol.coverage(k, j) = model.bucket_sizes[j];
    sol.residuals(k, j) = model.residual_rms(j);
  }
  sol.models[k] = std::move(model);
}

/// Standard error of the time-0 bucket mean for control j.
double bucket_stderr(const Eigen::MatrixXd& targets, const Eigen::RowVectorXi& marks, int j) {
  std::vector<double> v;
  for (Eigen::Index i = 0; i < marks.size(); ++i)
    if (marks(i) == j) v.push_back(targets(i, 0));
  return mc_estimate(Eigen::Map<Eigen::VectorXd>(v.data(), v.size())).stderr;
}

/// Bucket coefficients (L x J) fitted on the scenarios with i % 2 == half.
Eigen::MatrixXd fit_half(const Eigen::MatrixXd& B, const Eigen::VectorXd& targets,
                         const Eigen::Ref<const Eigen::RowVectorXi>& marks, int J, int half,
                         double svd_threshold) {
  std::vector<std::vector<Eigen::Index>> rows(J);
  for (Eigen::Index i = half; i < marks.size(); i += 2) rows[marks(i)].push_back(i);
  Eigen::MatrixXd coef(B.cols(), J);
  for (int j = 0; j < J; ++j) {
    const Eigen::MatrixXd Bj = B(rows[j], Eigen::all);
    const Eigen::VectorXd Yj = targets(rows[j]);
    coef.col(j) = truncated_least_squares(Bj, Yj, svd_threshold).coef.col(0);
  }
  return coef;
}

/// Lowest index among the maximizers of row i.
int row_argmax(const Eigen::MatrixXd& v, Eigen::Index i) {
  int best = 0;
  for (int j = 1; j < v.cols(); ++j)
    if (v(i, j) > v(i, best)) best = j;
  return best;
}

BsdeSolution constrained_once(const ScenarioBatch& batch, const ControlGrid& grid,
                              const BsdeOptions& options) {
  const int N = batch.steps(), J = grid.size();
  BsdeSolution sol;
  sol.mode = "constrained";
  fill_common(sol, batch, J);

  Eigen::VectorXd y = batch.terminal;
  Eigen::MatrixXd targets;
  for (int k = N - 1; k >= 0; --k) {
    const Eigen::VectorXd num = numeraire_row(batch, k, options.normalize);
    targets = ((y + batch.running.row(k).transpose()).array() / num.array()).matrix();
    KnotModel model =
        fit_knot(k, batch.features[k], targets, batch.marks.row(k), J, options, sol.warnings);
    const Eigen::MatrixXd B = model.basis(batch.features[k]);
    if (options.cross_fit) {
      // Each half picks the control, the other half prices it. The noise of
      // the pricing fit is independent of the choice, so the maximum over
      // identical buckets is no longer biased upward.
      const Eigen::MatrixXd pa =
          B * fit_half(B, targets, batch.marks.row(k), J, 0, options.svd_threshold);
      const Eigen::MatrixXd pb =
          B * fit_half(B, targets, batch.marks.row(k), J, 1, options.svd_threshold);
      for (Eigen::Index i = 0; i < B.rows(); ++i)
        y(i) = num(i) * 0.5 * (pb(i, row_argmax(pa, i)) + pa(i, row_argmax(pb, i)));
    } else {
      const Eigen::MatrixXd pred = B * model.coeffs;
      for (Eigen::Index i = 0; i < pred.rows(); ++i) y(i) = num(i) * pred(i, row_argmax(pred, i));
    }
    record(sol, k, std::move(model));
  }

  const KnotModel& m0 = sol.models.front();
  sol.time0_values = m0.coeffs.row(0).transpose() * batch.numeraire.row(0).mean();
  int win = 0;
  for (int j = 1; j < J; ++j)
    if (sol.time0_values(j) > sol.time0_values(win)) win = j;
  sol.y0 = y.mean();
  sol.stderr = bucket_stderr(targets, batch.marks.row(0), win);
  if (!std::isfinite(sol.y0)) throw NumericError("non-finite y0");
  return sol;
}

}  // namespace

double penalized_fixed_point(double v, double c, const std::vector<double>& ys,
                             const std::vector<double>& ws) {
  std::vector<std::size_t> order(ys.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ys[a] > ys[b]; });
  // F(y) = y - v - c sum w (y_j - y)^+ is increasing; walk the breakpoints
  // from the top until the active set {y_j > y} is consistent.
  double num = v, den = 1.0;
  for (std::size_t r = 0; r <= order.size(); ++r) {
    const double y = num / den;
    if (r == order.size() || y >= ys[order[r]]) return y;
    num += c * ws[order[r]] * ys[order[r]];
    den += c * ws[order[r]];
  }
  return num / den;
}

namespace {

BsdeSolution penalized_once(const ScenarioBatch& batch, const ControlGrid& grid, int n,
                            const BsdeOptions& options) {
  const int N = batch.steps(), J = grid.size();
  const Eigen::Index P = batch.size();
  const bool explicit_scheme = options.penalty_scheme == PenaltyScheme::kExplicit;
  BsdeSolution sol;
  sol.mode = "penalized";
  sol.penalty_n = n;
  fill_common(sol, batch, J);

  // ymat(i, j): value at scenario i if the current mark is a_j.
  Eigen::MatrixXd ymat = batch.terminal.replicate(1, J);
  Eigen::MatrixXd targets(P, explicit_scheme ? 2 : 1);
  std::vector<int> order(J);
  std::vector<double> ys, ws;
  Eigen::VectorXd yrow(J);
  for (int k = N - 1; k >= 0; --k) {
    const Eigen::VectorXd num = numeraire_row(batch, k, options.normalize);
    for (Eigen::Index i = 0; i < P; ++i) {
      const double cont = ymat(i, batch.arrival(k + 1, i));
      targets(i, 0) = (cont + batch.running(k, i)) / num(i);
      if (explicit_scheme) targets(i, 1) = cont / num(i);
    }
    KnotModel model =
        fit_knot(k, batch.features[k], targets, batch.marks.row(k), J, options, sol.warnings);
    const Eigen::MatrixXd B = model.basis(batch.features[k]);
    const Eigen::MatrixXd V = B * model.coeffs;
    Eigen::MatrixXd C;
    if (explicit_scheme) C = B * model.continuation;
    const double c = n * batch.tgrid.dt(k);

    for (Eigen::Index i = 0; i < P; ++i) {
      if (explicit_scheme) {
        for (int a = 0; a < J; ++a) {
          double pen = 0.0;
          for (int j = 0; j < J; ++j) pen += grid.weights[j] * std::max(0.0, C(i, j) - C(i, a));
          yrow(a) = V(i, a) + c * pen;
        }
      } else {
        // Controls with larger V never sit below controls with smaller V, so
        // each solve only sees the already-fixed larger values.
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return V(i, a) > V(i, b); });
        ys.clear();
        ws.clear();
        for (int a : order) {
          yrow(a) = penalized_fixed_point(V(i, a), c, ys, ws);
          ys.push_back(yrow(a));
          ws.push_back(grid.weights[a]);
        }
      }
      ymat.row(i) = num(i) * yrow.transpose();
    }
    record(sol, k, std::move(model));
  }

  sol.time0_values = ymat.colwise().mean().transpose();
  sol.y0 = sol.time0_values(grid.anchor);
  double se = 0.0;
  for (int j = 0; j < J; ++j) se = std::max(se, bucket_stderr(targets, batch.marks.row(0), j));
  sol.stderr = se;
  if (!std::isfinite(sol.y0)) throw NumericError("non-finite y0");
  return sol;
}

/// Replaces sol.stderr by sd(group y0) / sqrt(G) over G disjoint groups
/// (scenario i goes to group i mod G). Each group solve repeats every
/// regression, so the spread reflects the whole backward pass, which the
/// time-0 sample spread alone does not.
template <typename Solve>
void sectioned_stderr(BsdeSolution& sol, const ScenarioBatch& batch, const BsdeOptions& options,
                      Solve solve) {
  const int G = options.stderr_groups;
  if (G < 2) return;
  const Eigen::Index P = batch.size();
  std::vector<std::vector<Eigen::Index>> cols(G);
  for (Eigen::Index i = 0; i < P; ++i) cols[i % G].push_back(i);
  Eigen::VectorXd y(G);
  try {
    for (int g = 0; g < G; ++g) y(g) = solve(select_scenarios(batch, cols[g])).y0;
  } catch (const CoverageError&) {
    sol.warnings.push_back("groups too thin for a sectioned stderr; reporting the time-0 spread");
    return;
  }
  sol.stderr = mc_estimate(y).stderr;
}

}  // namespace

BsdeSolution solve_constrained(const ScenarioBatch& batch, const ProblemSpec&,
                               const ControlGrid& grid, const BsdeOptions& options) {
  check_batch(batch, grid);
  BsdeSolution sol = constrained_once(batch, grid, options);
  sectioned_stderr(sol, batch, options,
                   [&](const ScenarioBatch& b) { return constrained_once(b, grid, options); });
  return sol;
}

BsdeSolution solve_penalized(const ScenarioBatch& batch, const ProblemSpec&,
                             const ControlGrid& grid, int n, const BsdeOptions& options) {
  check_batch(batch, grid);
  if (n < 0) throw ValidationError("penalty must be nonnegative");
  BsdeSolution sol = penalized_once(batch, grid, n, options);
  sectioned_stderr(sol, batch, options,
                   [&](const ScenarioBatch& b) { return penalized_once(b, grid, n, options); });
  return sol;
}

namespace {

class GreedyPolicy : public FeedbackPolicy {
 public:
  GreedyPolicy(const BsdeSolution& sol, const ControlGrid& grid) : sol_(sol), grid_(grid) {}

  Control act(const Observation& obs) override {
    const KnotModel& m = sol_.models.at(obs.step);
    if (m.intercept_only || obs.features == nullptr) {
      int best = 0;
      for (int j = 1; j < m.coeffs.cols(); ++j)
        if (m.coeffs(0, j) > m.coeffs(0, best)) best = j;
      return grid_.points[best];
    }
    return grid_.points[m.argmax(*obs.features)];
  }

  std::unique_ptr<FeedbackPolicy> clone() const override {
    return std::make_unique<GreedyPolicy>(sol_, grid_);
  }

 private:
  const BsdeSolution& sol_;
  const ControlGrid& grid_;
};

}  // namespace

McEstimate evaluate_policy_from_solution(const BsdeSolution& sol, const ProblemSpec& spec,
                                         const ControlGrid& grid, const TimeGrid& tgrid,
                                         const FilterOptions& filter, std::int64_t paths,
                                         std::uint64_t seed, int threads) {
  if (static_cast<int>(sol.models.size()) != tgrid.steps())
    throw ValidationError("solution and time grid disagree on N");
  if (paths < 1) throw ValidationError("need at least one path");
  Eigen::VectorXd gains(paths);
  std::vector<char> ok(paths, 0);
  parallel_for(static_cast<std::size_t>(paths), threads, [&](std::size_t p) {
    GreedyPolicy policy(sol, grid);
    FilterTracker tracker(spec, tgrid, filter, seed, p);
    const PrimalPath path = simulate_primal_path(spec, policy, tgrid, seed, p, &tracker);
    ok[p] = path.valid;
    gains(p) = path.valid ? path.gain : 0.0;
  });
  std::vector<double> kept;
  kept.reserve(paths);
  for (std::int64_t p = 0; p < paths; ++p)
    if (ok[p]) kept.push_back(gains(p));
  if (static_cast<double>(paths - static_cast<std::int64_t>(kept.size())) > 1e-3 * paths)
    throw NumericError("too many primal paths blew up");
  return mc_estimate(Eigen::Map<Eigen::VectorXd>(kept.data(), kept.size()));
}

}  // namespace rbsd
