#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

// Small statistics helpers shared by the unit and acceptance tests. They are
// written against the textbook definitions and share no code with the
// library.
namespace test_util {

/// sup_x |F_n(x) - F(x)| over finite x; +inf marks a censored sample.
inline double ks_one_sample(std::vector<double> x, const std::function<double(double)>& cdf) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    // Censored samples sort last; the empirical CDF is compared only on finite points.
    if (std::isinf(x[i])) break;
    const double f = cdf(x[i]);
    d = std::max({d, std::abs(f - i / n), std::abs((i + 1) / n - f)});
  }
  return d;
}

/// sup_x |F_a(x) - F_b(x)| over the pooled sample.
inline double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
  }
  return d;
}

struct Moments {
  double mean = 0.0;
  double var = 0.0;  // unbiased
  double stderr = 0.0;
};

inline Moments moments(const std::vector<double>& v) {
  Moments m;
  const double n = static_cast<double>(v.size());
  for (double x : v) m.mean += x;
  m.mean /= n;
  double ss = 0.0;
  for (double x : v) ss += (x - m.mean) * (x - m.mean);
  m.var = ss / (n - 1.0);
  m.stderr = std::sqrt(m.var / n);
  return m;
}

/// |a - b| / sqrt(se_a^2 + se_b^2), with 0/0 read as 0.
inline double z_score(double a, double se_a, double b, double se_b) {
  const double s = std::sqrt(se_a * se_a + se_b * se_b);
  if (s == 0.0) return a == b ? 0.0 : INFINITY;
  return std::abs(a - b) / s;
}

}  // namespace test_util
