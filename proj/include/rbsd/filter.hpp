#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rbsd/forward.hpp"
#include "rbsd/model.hpp"
#include "rbsd/rng.hpp"

namespace rbsd {

enum class FilterMode {
  kAuto,         // weighted iff the spec carries a likelihood coordinate
  kConditional,  // equal weights, shared W, independent V per particle
  kWeighted,     // weights proportional to the likelihood coordinate
};

enum class ResampleScheme { kMultinomial, kSystematic };

enum class FeatureMap {
  kMean,       // weighted mean of the feature coordinates
  kMoments,    // mean and upper-triangular covariance
  kQuantized,  // K k-means centers sorted by their first coordinate
};

FeatureMap parse_feature_map(const std::string& name);
std::string to_string(FeatureMap map);

struct FilterOptions {
  int particles = 1;
  FilterMode mode = FilterMode::kAuto;
  ResampleScheme resample = ResampleScheme::kMultinomial;
  /// Resample when ESS < ess_threshold * M (weighted mode only).
  double ess_threshold = 0.5;
  FeatureMap features = FeatureMap::kMoments;
  int quant_points = 4;
};

/// Particle approximation of the randomized filter.
///
/// In weighted mode the cloud stores the normalized filter in `weights` and
/// the normalizing mass (the filter of the likelihood coordinate) in `mass`.
/// After every step the likelihood coordinate of each particle is reset to
/// `mass`, so sum_i w_i phi(p_i) is exact for every phi that is linear in
/// that coordinate, which covers all reformulated gains.
struct FilterCloud {
  Eigen::MatrixXd particles;  // n x M
  Eigen::VectorXd weights;    // M, sums to 1
  double mass = 1.0;
  int time_index = 0;
  bool weighted = false;

  int size() const { return static_cast<int>(particles.cols()); }
};

bool use_weighted_mode(const ProblemSpec& spec, FilterMode mode);

/// M independent draws from the initial law on the kParticles stream.
FilterCloud init_filter(const ProblemSpec& spec, const FilterOptions& options, CounterRng& rng);

/// Advances every particle over [t, t + dt] with the shared increment dw and
/// its own V increment. Throws FilterCollapseError when the weights vanish.
void propagate_filter(const ProblemSpec& spec, FilterCloud& cloud, double t, double dt,
                      const Control& a, const Eigen::VectorXd& dw,
                      const FilterOptions& options, CounterRng& rng);

double filter_expectation(const FilterCloud& cloud,
                          const std::function<double(const Eigen::VectorXd&)>& phi);
/// sum_i w_i f(t, p_i, a)
double filter_running_gain(const ProblemSpec& spec, const FilterCloud& cloud, double t,
                           const Control& a);
/// sum_i w_i g(p_i)
double filter_terminal_gain(const ProblemSpec& spec, const FilterCloud& cloud);

struct FilterFeatures {
  Eigen::VectorXd mean;
  Eigen::VectorXd cov_upper;  // row-major upper triangle, diagonal included
  Eigen::VectorXd extra;
};

/// Weighted mean and covariance over feature_coordinates(spec).
FilterFeatures extract_features(const FilterCloud& cloud, const ProblemSpec& spec);

/// Regression input for a feature map. Quantized features need the cloud
/// itself, so this takes both.
Eigen::VectorXd flatten_features(const FilterCloud& cloud, const ProblemSpec& spec,
                                 const FilterOptions& options);
int feature_dimension(const ProblemSpec& spec, const FilterOptions& options);

double effective_sample_size(const Eigen::VectorXd& weights);
/// Resamples in place and resets weights to 1/M.
void resample(FilterCloud& cloud, ResampleScheme scheme, CounterRng& rng);

/// Weighted Lloyd iterations from quantile seeds along the first coordinate.
/// Returns K centers (q x K) sorted by first coordinate.
Eigen::MatrixXd kmeans(const Eigen::MatrixXd& points, const Eigen::VectorXd& weights, int k,
                       int iterations = 10);

/// Runs a filter alongside a simulated path and records, per knot, the
/// regression features and the filter mass, and per step the filtered running
/// gain integrated over the Euler pieces.
class FilterTracker : public PathObserver {
 public:
  FilterTracker(const ProblemSpec& spec, const TimeGrid& tgrid, const FilterOptions& options,
                std::uint64_t seed, std::uint64_t index);

  void segment(double t0, double t1, const Control& a, const Eigen::VectorXd& dw) override;
  void knot(int k, double t, const Control& a) override;
  const Eigen::VectorXd* features() const override { return &current_; }

  const FilterCloud& cloud() const { return cloud_; }
  const std::vector<Eigen::VectorXd>& knot_features() const { return features_; }
  const Eigen::VectorXd& running() const { return running_; }  // N
  const Eigen::VectorXd& mass() const { return mass_; }        // N + 1
  double terminal() const { return terminal_; }

 private:
  const ProblemSpec& spec_;
  const TimeGrid& tgrid_;
  FilterOptions options_;
  CounterRng rng_;
  FilterCloud cloud_;
  int step_ = 0;
  Eigen::VectorXd current_;
  std::vector<Eigen::VectorXd> features_;
  Eigen::VectorXd running_;
  Eigen::VectorXd mass_;
  double terminal_ = 0.0;
};

}  // namespace rbsd
