#include "rbsd/filter.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rbsd/errors.hpp"
#include "rbsd/randomizer.hpp"

namespace rbsd {

FeatureMap parse_feature_map(const std::string& name) {
  if (name == "mean") return FeatureMap::kMean;
  if (name == "moments") return FeatureMap::kMoments;
  if (name == "quantized") return FeatureMap::kQuantized;
  throw ValidationError("unknown feature map '" + name + "'");
}

std::string to_string(FeatureMap map) {
  switch (map) {
    case FeatureMap::kMean: return "mean";
    case FeatureMap::kMoments: return "moments";
    case FeatureMap::kQuantized: return "quantized";
  }
  return "?";
}

bool use_weighted_mode(const ProblemSpec& spec, FilterMode mode) {
  if (mode == FilterMode::kWeighted && !spec.likelihood)
    throw ValidationError("weighted filter needs a likelihood coordinate");
  return mode == FilterMode::kWeighted || (mode == FilterMode::kAuto && spec.likelihood);
}

FilterCloud init_filter(const ProblemSpec& spec, const FilterOptions& options, CounterRng& rng) {
  if (options.particles < 1) throw ValidationError("filter needs at least one particle");
  FilterCloud cloud;
  const int M = options.particles;
  cloud.particles.resize(spec.dim_x, M);
  for (int i = 0; i < M; ++i) cloud.particles.col(i) = sample_initial(spec, rng);
  cloud.weights.setConstant(M, 1.0 / M);
  cloud.weighted = use_weighted_mode(spec, options.mode);
  if (spec.likelihood) cloud.mass = cloud.particles.row(spec.likelihood->z_index).mean();
  return cloud;
}

void propagate_filter(const ProblemSpec& spec, FilterCloud& cloud, double t, double dt,
                      const Control& a, const Eigen::VectorXd& dw,
                      const FilterOptions& options, CounterRng& rng) {
  thread_local EulerWorkspace ws;
  thread_local Eigen::MatrixXd dv;
  const int M = cloud.size();
  const double sq = std::sqrt(dt);
  dv.resize(spec.dim_v, M);
  for (int i = 0; i < M; ++i)
    for (int l = 0; l < spec.dim_v; ++l) dv(l, i) = sq * rng.normal();
  euler_step(spec, t, dt, a, cloud.particles, dw, dv, ws);
  ++cloud.time_index;

  if (!spec.likelihood) return;
  const int zi = spec.likelihood->z_index;
  if (!cloud.weighted) {
    cloud.mass = cloud.particles.row(zi).mean();
    return;
  }
  Eigen::VectorXd w = cloud.weights.cwiseProduct(cloud.particles.row(zi).transpose());
  const double mass = w.sum();
  if (!(mass > 0.0) || !std::isfinite(mass))
    throw FilterCollapseError("filter weights vanished at step " +
                              std::to_string(cloud.time_index));
  cloud.weights = w / mass;
  cloud.mass = mass;
  cloud.particles.row(zi).setConstant(mass);
  if (effective_sample_size(cloud.weights) < options.ess_threshold * M)
    resample(cloud, options.resample, rng);
}

double filter_expectation(const FilterCloud& cloud,
                          const std::function<double(const Eigen::VectorXd&)>& phi) {
  double s = 0.0;
  for (int i = 0; i < cloud.size(); ++i) {
    const double v = phi(cloud.particles.col(i));
    if (!std::isfinite(v)) throw NumericError("non-finite test function value");
    s += cloud.weights(i) * v;
  }
  return s;
}

double filter_running_gain(const ProblemSpec& spec, const FilterCloud& cloud, double t,
                           const Control& a) {
  thread_local Eigen::VectorXd f;
  spec.running_gain(t, cloud.particles, a, f);
  return cloud.weights.dot(f);
}

double filter_terminal_gain(const ProblemSpec& spec, const FilterCloud& cloud) {
  Eigen::VectorXd g;
  spec.terminal_gain(cloud.particles, g);
  return cloud.weights.dot(g);
}

namespace {

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& x, const std::vector<int>& rows) {
  Eigen::MatrixXd out(rows.size(), x.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(r) = x.row(rows[r]);
  return out;
}

}  // namespace

FilterFeatures extract_features(const FilterCloud& cloud, const ProblemSpec& spec) {
  const Eigen::MatrixXd p = gather_rows(cloud.particles, feature_coordinates(spec));
  const Eigen::Index q = p.rows();
  FilterFeatures out;
  out.mean = p * cloud.weights;
  const Eigen::MatrixXd c = p.colwise() - out.mean;
  const Eigen::MatrixXd cov = c * cloud.weights.asDiagonal() * c.transpose();
  out.cov_upper.resize(q * (q + 1) / 2);
  Eigen::Index pos = 0;
  for (Eigen::Index r = 0; r < q; ++r)
    for (Eigen::Index s = r; s < q; ++s) out.cov_upper(pos++) = r == s ? std::max(0.0, cov(r, s)) : cov(r, s);
  return out;
}

int feature_dimension(const ProblemSpec& spec, const FilterOptions& options) {
  const int q = static_cast<int>(feature_coordinates(spec).size());
  switch (options.features) {
    case FeatureMap::kMean: return q;
    case FeatureMap::kMoments: return q + q * (q + 1) / 2;
    case FeatureMap::kQuantized: return q * options.quant_points;
  }
  return q;
}

Eigen::VectorXd flatten_features(const FilterCloud& cloud, const ProblemSpec& spec,
                                 const FilterOptions& options) {
  if (options.features == FeatureMap::kQuantized) {
    const Eigen::MatrixXd centers = kmeans(gather_rows(cloud.particles, feature_coordinates(spec)),
                                           cloud.weights, options.quant_points);
    return Eigen::Map<const Eigen::VectorXd>(centers.data(), centers.size());
  }
  const FilterFeatures f = extract_features(cloud, spec);
  if (options.features == FeatureMap::kMean) return f.mean;
  Eigen::VectorXd out(f.mean.size() + f.cov_upper.size());
  out << f.mean, f.cov_upper;
  return out;
}

double effective_sample_size(const Eigen::VectorXd& weights) {
  const double s2 = weights.squaredNorm();
  return s2 > 0.0 ? 1.0 / s2 : 0.0;
}

void resample(FilterCloud& cloud, ResampleScheme scheme, CounterRng& rng) {
  const int M = cloud.size();
  std::vector<double> cumulative(M);
  std::partial_sum(cloud.weights.data(), cloud.weights.data() + M, cumulative.begin());
  std::vector<int> pick(M);
  if (scheme == ResampleScheme::kMultinomial) {
    for (int i = 0; i < M; ++i) pick[i] = sample_categorical(cumulative, rng.uniform());
  } else {
    const double u0 = rng.uniform();
    for (int i = 0; i < M; ++i) pick[i] = sample_categorical(cumulative, (u0 + i) / M);
  }
  Eigen::MatrixXd next(cloud.particles.rows(), M);
  for (int i = 0; i < M; ++i) next.col(i) = cloud.particles.col(pick[i]);
  cloud.particles.swap(next);
  cloud.weights.setConstant(M, 1.0 / M);
}

Eigen::MatrixXd kmeans(const Eigen::MatrixXd& points, const Eigen::VectorXd& weights, int k,
                       int iterations) {
  if (k < 1) throw ValidationError("kmeans needs k >= 1");
  const Eigen::Index q = points.rows(), M = points.cols();
  std::vector<Eigen::Index> order(M);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return points(0, a) < points(0, b); });

  // Seeds at weighted quantiles (c + 1/2) / k of the first coordinate.
  Eigen::MatrixXd centers(q, k);
  double acc = 0.0;
  Eigen::Index pos = 0;
  for (int c = 0; c < k; ++c) {
    const double target = (c + 0.5) / k * weights.sum();
    while (pos + 1 < M && acc + weights(order[pos]) < target) acc += weights(order[pos++]);
    centers.col(c) = points.col(order[pos]);
  }

  std::vector<int> label(M, 0);
  for (int it = 0; it < iterations; ++it) {
    for (Eigen::Index i = 0; i < M; ++i) {
      Eigen::Index best;
      (centers.colwise() - points.col(i)).colwise().squaredNorm().minCoeff(&best);
      label[i] = static_cast<int>(best);
    }
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(q, k);
    Eigen::VectorXd mass = Eigen::VectorXd::Zero(k);
    for (Eigen::Index i = 0; i < M; ++i) {
      sum.col(label[i]) += weights(i) * points.col(i);
      mass(label[i]) += weights(i);
    }
    for (int c = 0; c < k; ++c)
      if (mass(c) > 0.0) centers.col(c) = sum.col(c) / mass(c);
  }

  std::vector<int> idx(k);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](int a, int b) { return centers(0, a) < centers(0, b); });
  Eigen::MatrixXd sorted(q, k);
  for (int c = 0; c < k; ++c) sorted.col(c) = centers.col(idx[c]);
  return sorted;
}

FilterTracker::FilterTracker(const ProblemSpec& spec, const TimeGrid& tgrid,
                             const FilterOptions& options, std::uint64_t seed,
                             std::uint64_t index)
    : spec_(spec),
      tgrid_(tgrid),
      options_(options),
      rng_(seed, stream_id(index, Stream::kParticles)),
      cloud_(init_filter(spec, options, rng_)),
      features_(tgrid.steps() + 1),
      running_(Eigen::VectorXd::Zero(tgrid.steps())),
      mass_(Eigen::VectorXd::Ones(tgrid.steps() + 1)) {}

void FilterTracker::segment(double t0, double t1, const Control& a, const Eigen::VectorXd& dw) {
  running_(step_) += filter_running_gain(spec_, cloud_, t0, a) * (t1 - t0);
  propagate_filter(spec_, cloud_, t0, t1 - t0, a, dw, options_, rng_);
}

void FilterTracker::knot(int k, double, const Control&) {
  step_ = std::min(k, tgrid_.steps() - 1);
  cloud_.time_index = k;
  current_ = flatten_features(cloud_, spec_, options_);
  features_[k] = current_;
  mass_(k) = cloud_.mass;
  if (k == tgrid_.steps()) terminal_ = filter_terminal_gain(spec_, cloud_);
}

}  // namespace rbsd
