#include "rbsd/forward.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "rbsd/errors.hpp"

namespace rbsd {

void euler_step(const ProblemSpec& spec, double t, double dt, const Control& a,
                Eigen::MatrixXd& x, const Eigen::VectorXd& dw, const Eigen::MatrixXd& dv,
                EulerWorkspace& ws) {
  const Eigen::Index n = spec.dim_x, m = spec.dim_v, d = spec.dim_w;
  spec.drift(t, x, a, ws.drift);
  if (m > 0) spec.diff_v(t, x, a, ws.dv);
  if (d > 0) spec.diff_w(t, x, a, ws.dw);
  const int zi = spec.likelihood ? spec.likelihood->z_index : -1;
  if (zi >= 0) {
    spec.likelihood->rate(t, x, a, ws.rate);
    ws.z = x.row(zi);
  }

  x += ws.drift * dt;
  for (Eigen::Index l = 0; l < m; ++l)
    x.array() += ws.dv.middleRows(l * n, n).array() * dv.row(l).replicate(n, 1).array();
  for (Eigen::Index l = 0; l < d; ++l) x += ws.dw.middleRows(l * n, n) * dw(l);

  if (zi >= 0) {
    Eigen::RowVectorXd expo = Eigen::RowVectorXd::Zero(x.cols());
    for (Eigen::Index l = 0; l < d; ++l)
      expo.array() += ws.rate.row(l).array() * dw(l) - 0.5 * dt * ws.rate.row(l).array().square();
    x.row(zi) = ws.z.array() * expo.array().exp();
  }
}

namespace {

bool blown_up(const Eigen::MatrixXd& x) {
  return !x.allFinite() || x.cwiseAbs().maxCoeff() > kBlowUp;
}

void draw_normals(CounterRng& rng, double scale, Eigen::Ref<Eigen::VectorXd> out) {
  for (Eigen::Index i = 0; i < out.size(); ++i) out(i) = scale * rng.normal();
}

int uniform_index(CounterRng& rng, int count) {
  return std::min(count - 1, static_cast<int>(rng.uniform() * count));
}

}  // namespace

MarkedPath simulate_randomized_path(const ProblemSpec& spec, const ControlGrid& grid,
                                    const TimeGrid& tgrid, std::uint64_t seed,
                                    std::uint64_t index, const PathOptions& options) {
  const int N = tgrid.steps();
  const int n = spec.dim_x, m = spec.dim_v, d = spec.dim_w;
  if (options.law == MarkLaw::kControlled && options.nu == nullptr)
    throw ValidationError("controlled law needs an intensity");
  if (options.resample_marks && options.nu != nullptr)
    throw ValidationError("mark resampling is incompatible with intensity reweighting");

  CounterRng rng_marks(seed, stream_id(index, Stream::kMarks));
  CounterRng rng_bm(seed, stream_id(index, Stream::kBrownian));
  CounterRng rng_init(seed, stream_id(index, Stream::kInit));
  CounterRng rng_reset(seed, stream_id(index, Stream::kAux));
  CounterRng rng_bridge(seed, stream_id(index, Stream::kBridge));

  MarkedPath path;
  path.grid = tgrid;
  if (options.keep_arrays) {
    path.x.setZero(N + 1, n);
    path.w_inc.setZero(N, d);
    path.v_inc.setZero(N, m);
  }
  path.i_idx.assign(N + 1, 0);
  path.i_arrival.assign(N + 1, 0);

  JumpRecord& rec = path.jumps;
  rec.initial_mark = options.resample_marks ? uniform_index(rng_reset, grid.size()) : grid.anchor;

  JumpRecord poisson;
  std::size_t poisson_next = 0;
  std::unique_ptr<MarkThinner> thinner;
  if (options.law == MarkLaw::kReference)
    poisson = simulate_marks_poisson(grid, tgrid.horizon(), rng_marks);
  else
    thinner = std::make_unique<MarkThinner>(grid, *options.nu, rng_marks);
  const bool reweight = options.law == MarkLaw::kReference && options.nu != nullptr;

  Eigen::MatrixXd x(n, 1);
  if (options.simulate_state) x.col(0) = sample_initial(spec, rng_init);
  if (options.keep_arrays) path.x.row(0) = x.col(0).transpose();

  EulerWorkspace ws;
  Eigen::VectorXd dw(d), dv_vec(m), g(1), rest_w(d), rest_v(m);
  Eigen::MatrixXd dv(m, 1);
  const Eigen::VectorXd no_features;
  Eigen::VectorXd f(1);

  path.i_idx[0] = path.i_arrival[0] = rec.initial_mark;
  if (options.observer) options.observer->knot(0, 0.0, grid.points[rec.initial_mark]);

  double log_kappa = 0.0;
  auto rate_sum = [&](double t, const HistoryView& h, const Eigen::VectorXd& feat) {
    double s = 0.0;
    for (int j = 0; j < grid.size(); ++j) s += (*options.nu)(t, h, feat, j) * grid.weights[j];
    return s;
  };

  for (int k = 0; k < N; ++k) {
    const double t0 = tgrid.knots[k], t1 = tgrid.knots[k + 1];
    const Eigen::VectorXd* fp = options.observer ? options.observer->features() : nullptr;
    const Eigen::VectorXd& feat = fp ? *fp : no_features;

    const std::size_t first = rec.size();
    if (thinner) {
      thinner->advance(t1, feat, rec);
    } else {
      while (poisson_next < poisson.size() && poisson.times[poisson_next] <= t1) {
        rec.push(poisson.times[poisson_next], poisson.marks[poisson_next]);
        ++poisson_next;
      }
    }

    // The knot increments come first, so they do not depend on the marks;
    // jumps inside the step split them by a sequential Brownian bridge.
    draw_normals(rng_bm, std::sqrt(t1 - t0), rest_w);
    draw_normals(rng_bm, std::sqrt(t1 - t0), rest_v);
    double s = t0;
    int cur = first == 0 ? rec.initial_mark : rec.marks[first - 1];
    for (std::size_t piece = first; piece <= rec.size(); ++piece) {
      const double e = piece < rec.size() ? rec.times[piece] : t1;
      const double len = e - s;
      const Control& a = grid.points[cur];
      if (len > 0.0) {
        if (e < t1) {
          const double left = t1 - s, frac = len / left;
          const double sd = std::sqrt(len * (t1 - e) / left);
          for (Eigen::Index i = 0; i < d; ++i) dw(i) = frac * rest_w(i) + sd * rng_bridge.normal();
          for (Eigen::Index i = 0; i < m; ++i) dv_vec(i) = frac * rest_v(i) + sd * rng_bridge.normal();
          rest_w -= dw;
          rest_v -= dv_vec;
        } else {
          dw = rest_w;
          dv_vec = rest_v;
        }
        if (options.simulate_state && path.valid) {
          spec.running_gain(s, x, a, f);
          path.gain += f(0) * len;
          dv.col(0) = dv_vec;
          euler_step(spec, s, len, a, x, dw, dv, ws);
          if (blown_up(x)) {
            path.valid = false;
            path.bad_time = e;
          }
        }
        if (options.observer) options.observer->segment(s, e, a, dw);
        if (reweight) {
          // Interior two-point Gauss nodes, see log_doleans_kappa.
          constexpr double kNode = 0.2113248654051871;
          const HistoryView h{&rec, piece};
          log_kappa += 0.5 * len *
                       ((grid.total_mass - rate_sum(s + kNode * len, h, feat)) +
                        (grid.total_mass - rate_sum(e - kNode * len, h, feat)));
        }
        if (options.keep_arrays) {
          path.w_inc.row(k) += dw.transpose();
          path.v_inc.row(k) += dv_vec.transpose();
        }
      }
      if (piece < rec.size()) {
        if (reweight) {
          const HistoryView h{&rec, piece};
          log_kappa += std::log((*options.nu)(e, h, feat, rec.marks[piece]));
        }
        cur = rec.marks[piece];
        s = e;
      }
    }
    path.i_arrival[k + 1] = cur;
    if (options.resample_marks && k + 1 < N) {
      cur = uniform_index(rng_reset, grid.size());
      rec.push(t1, cur);
    }
    path.i_idx[k + 1] = cur;
    if (options.keep_arrays) path.x.row(k + 1) = x.col(0).transpose();
    if (options.observer) options.observer->knot(k + 1, t1, grid.points[cur]);
  }

  if (options.simulate_state && path.valid) {
    spec.terminal_gain(x, g);
    path.gain += g(0);
  }
  path.log_kappa_T = log_kappa;
  path.kappa_T = std::exp(log_kappa);
  return path;
}

PrimalPath simulate_primal_path(const ProblemSpec& spec, FeedbackPolicy& policy,
                                const TimeGrid& tgrid, std::uint64_t seed, std::uint64_t index,
                                PathObserver* observer) {
  const int N = tgrid.steps();
  const int n = spec.dim_x, m = spec.dim_v, d = spec.dim_w;
  CounterRng rng_bm(seed, stream_id(index, Stream::kBrownian));
  CounterRng rng_init(seed, stream_id(index, Stream::kInit));

  PrimalPath path;
  path.x.setZero(N + 1, n);
  path.w_inc.setZero(N, d);
  path.controls.reserve(N);

  Eigen::MatrixXd x(n, 1);
  x.col(0) = sample_initial(spec, rng_init);
  path.x.row(0) = x.col(0).transpose();

  EulerWorkspace ws;
  Eigen::VectorXd dw(d), dv_vec(m), f(1);
  Eigen::MatrixXd dv(m, 1);

  Control a;
  for (int k = 0; k < N; ++k) {
    const double t = tgrid.knots[k], dt = tgrid.dt(k);
    Observation obs;
    obs.step = k;
    obs.t = t;
    obs.w_increments = &path.w_inc;
    obs.features = observer ? observer->features() : nullptr;
    if (k == 0 && observer) {
      // The observer needs the first control before it can report features;
      // time-0 features come from the prior and do not depend on it.
      a = policy.act(obs);
      observer->knot(0, t, a);
      obs.features = observer->features();
    }
    a = policy.act(obs);
    path.controls.push_back(a);

    const double sq = std::sqrt(dt);
    draw_normals(rng_bm, sq, dw);
    draw_normals(rng_bm, sq, dv_vec);
    if (path.valid) {
      spec.running_gain(t, x, a, f);
      path.gain += f(0) * dt;
      dv.col(0) = dv_vec;
      euler_step(spec, t, dt, a, x, dw, dv, ws);
      if (blown_up(x)) {
        path.valid = false;
        path.bad_time = tgrid.knots[k + 1];
      }
    }
    path.w_inc.row(k) = dw.transpose();
    path.x.row(k + 1) = x.col(0).transpose();
    if (observer) {
      observer->segment(t, tgrid.knots[k + 1], a, dw);
      observer->knot(k + 1, tgrid.knots[k + 1], a);
    }
  }
  if (path.valid) {
    Eigen::VectorXd g(1);
    spec.terminal_gain(x, g);
    path.gain += g(0);
  }
  return path;
}

void write_path_dump(const std::string& file, const std::vector<MarkedPath>& paths) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw ValidationError("cannot open " + file);
  const std::uint32_t version = 1;
  std::uint32_t N = 0, n = 0, d = 0, m = 0;
  if (!paths.empty()) {
    N = static_cast<std::uint32_t>(paths.front().grid.steps());
    n = static_cast<std::uint32_t>(paths.front().x.cols());
    d = static_cast<std::uint32_t>(paths.front().w_inc.cols());
    m = static_cast<std::uint32_t>(paths.front().v_inc.cols());
  }
  const std::uint64_t count = paths.size();
  out.write("RBSD", 4);
  for (std::uint32_t v : {version, N, n, d, m}) out.write(reinterpret_cast<const char*>(&v), 4);
  out.write(reinterpret_cast<const char*>(&count), 8);
  auto put_rowmajor = [&out](const Eigen::MatrixXd& a) {
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> r = a;
    out.write(reinterpret_cast<const char*>(r.data()),
              static_cast<std::streamsize>(sizeof(double) * r.size()));
  };
  for (const auto& p : paths) {
    put_rowmajor(p.x);
    put_rowmajor(p.w_inc);
    put_rowmajor(p.v_inc);
    for (int i : p.i_idx) {
      const double v = i;
      out.write(reinterpret_cast<const char*>(&v), 8);
    }
  }
}

}  // namespace rbsd
