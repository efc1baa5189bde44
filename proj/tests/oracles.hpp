#pragma once

// Test-side reference computations, written independently of the library.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <span>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/hypergeometric.hpp>

namespace oracle {

/// Upper-tail p-value of Pearson's statistic for observed counts against
/// expected counts.
inline double chi_square_p(std::span<const double> observed, std::span<const double> expected) {
  double stat = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const double d = observed[i] - expected[i];
    stat += d * d / expected[i];
  }
  const boost::math::chi_squared dist(static_cast<double>(observed.size() - 1));
  return boost::math::cdf(boost::math::complement(dist, stat));
}

/// Homogeneity test of two count vectors over the same categories.
inline double chi_square_two_sample_p(std::span<const double> a, std::span<const double> b) {
  const double na = std::accumulate(a.begin(), a.end(), 0.0);
  const double nb = std::accumulate(b.begin(), b.end(), 0.0);
  double stat = 0.0;
  int dof = -1;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double col = a[i] + b[i];
    if (col == 0.0) continue;
    const double ea = col * na / (na + nb);
    const double eb = col * nb / (na + nb);
    stat += (a[i] - ea) * (a[i] - ea) / ea + (b[i] - eb) * (b[i] - eb) / eb;
    ++dof;
  }
  const boost::math::chi_squared dist(static_cast<double>(dof));
  return boost::math::cdf(boost::math::complement(dist, stat));
}

/// All k-subsets of {0..n-1} as bitmasks, in lexicographic order.
inline std::vector<std::uint64_t> enumerate_subsets(int n, int k) {
  std::vector<std::uint64_t> out;
  for (std::uint64_t m = 0; m < (std::uint64_t{1} << n); ++m) {
    if (std::popcount(m) == k) out.push_back(m);
  }
  return out;
}

/// P(X = j) when drawing `draws` cells without replacement from `total`
/// cells of which `marked` are marked.
inline double hypergeometric_pmf(unsigned j, unsigned marked, unsigned draws, unsigned total) {
  const boost::math::hypergeometric_distribution<double> dist(marked, draws, total);
  return boost::math::pdf(dist, j);
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Kolmogorov-Smirnov statistic of `sample` against `cdf`.
inline double ks_statistic(std::vector<double> sample, const std::function<double(double)>& cdf) {
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  return d;
}

/// Asymptotic p-value of the one-sample KS statistic (Kolmogorov series with
/// Stephens' small-sample correction).
inline double ks_p_value(double d, std::size_t n) {
  const double sn = std::sqrt(static_cast<double>(n));
  const double lambda = (sn + 0.12 + 0.11 / sn) * d;
  double sum = 0.0;
  for (int j = 1; j <= 100; ++j) {
    const double term = 2.0 * ((j % 2) ? 1.0 : -1.0) * std::exp(-2.0 * j * j * lambda * lambda);
    sum += term;
    if (std::fabs(term) < 1e-16) break;
  }
  return std::clamp(sum, 0.0, 1.0);
}

/// Central difference of f along coordinate `value`, restoring it afterwards.
inline double central_difference(double& value, double step, const std::function<double()>& f) {
  const double saved = value;
  value = saved + step;
  const double up = f();
  value = saved - step;
  const double down = f();
  value = saved;
  return (up - down) / (2.0 * step);
}

/// |a - b| relative to the larger magnitude, with an absolute floor so that
/// entries that are zero in both count as agreeing.
inline double rel_error(double a, double b, double floor = 1e-8) {
  return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), floor});
}

}  // namespace oracle
