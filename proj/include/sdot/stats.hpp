#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

namespace sdot::stats {

inline double mean(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v;
  return x.empty() ? 0.0 : s / double(x.size());
}

/// Unbiased sample variance.
inline double variance(const std::vector<double>& x) {
  if (x.size() < 2) return 0.0;
  const double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / double(x.size() - 1);
}

inline double standard_error(const std::vector<double>& x) {
  return x.empty() ? 0.0 : std::sqrt(variance(x) / double(x.size()));
}

inline double skewness(const std::vector<double>& x) {
  const double m = mean(x);
  double m2 = 0.0, m3 = 0.0;
  for (double v : x) {
    const double d = v - m;
    m2 += d * d;
    m3 += d * d * d;
  }
  m2 /= double(x.size());
  m3 /= double(x.size());
  return m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0;
}

inline double excess_kurtosis(const std::vector<double>& x) {
  const double m = mean(x);
  double m2 = 0.0, m4 = 0.0;
  for (double v : x) {
    const double d = v - m;
    m2 += d * d;
    m4 += d * d * d * d;
  }
  m2 /= double(x.size());
  m4 /= double(x.size());
  return m2 > 0.0 ? m4 / (m2 * m2) - 3.0 : 0.0;
}

/// Jarque-Bera statistic; asymptotically chi-square with 2 degrees of freedom under normality.
inline double jarque_bera(const std::vector<double>& x) {
  const double n = double(x.size());
  const double s = skewness(x);
  const double k = excess_kurtosis(x);
  return n / 6.0 * (s * s + 0.25 * k * k);
}

/// 1% upper critical value of chi-square(2): -2 ln(0.01).
inline double jarque_bera_critical_1pct() { return -2.0 * std::log(0.01); }

inline double normal_cdf(double x, double sigma = 1.0) {
  return 0.5 * std::erfc(-x / (sigma * std::numbers::sqrt2));
}

/// CDF of |N(0, sigma²)|.
inline double half_normal_cdf(double x, double sigma) {
  return x <= 0.0 ? 0.0 : std::erf(x / (sigma * std::numbers::sqrt2));
}

/// sup_x |F_n(x) - F(x)| for a continuous reference CDF.
inline double ks_one_sample(std::vector<double> x, const std::function<double(double)>& cdf) {
  std::sort(x.begin(), x.end());
  const double n = double(x.size());
  double d = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double f = cdf(x[k]);
    d = std::max({d, double(k + 1) / n - f, f - double(k) / n});
  }
  return d;
}

/// sup_x |F_a(x) - F_b(x)| between two empirical distributions (ties handled jointly).
inline double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    d = std::max(d, std::abs(double(i) / double(a.size()) - double(j) / double(b.size())));
  }
  return d;
}

}  // namespace sdot::stats
