#pragma once

// Small-sample statistics: Kolmogorov-Smirnov against a continuous cdf,
// Pearson and Spearman correlation, mean / standard deviation.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <numeric>
#include <span>
#include <vector>

#include "prlab/error.hpp"

namespace prlab {

inline double mean(std::span<const double> v) {
  if (v.empty()) throw InvalidParameter("mean of an empty sample");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Sample standard deviation (n - 1 denominator); 0 for a single value.
inline double stddev(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

/// P(K > lambda) for the Kolmogorov distribution, 100 series terms. Below
/// lambda = 1.18 the alternating tail series converges slowly, so the dual
/// theta-function form is summed instead.
inline double kolmogorov_survival(double lambda) {
  if (!(lambda > 0.0)) return 1.0;
  constexpr int kTerms = 100;
  double q = 0.0;
  if (lambda < 1.18) {
    const double c = std::numbers::pi * std::numbers::pi / (8.0 * lambda * lambda);
    double s = 0.0;
    for (int k = 1; k <= kTerms; ++k) {
      const double odd = 2.0 * k - 1.0;
      s += std::exp(-odd * odd * c);
    }
    q = 1.0 - std::sqrt(2.0 * std::numbers::pi) / lambda * s;
  } else {
    for (int k = 1; k <= kTerms; ++k) {
      const double term = std::exp(-2.0 * k * k * lambda * lambda);
      q += (k % 2 == 1 ? 2.0 : -2.0) * term;
    }
  }
  return std::clamp(q, 0.0, 1.0);
}

struct KsResult {
  double statistic = 0.0;
  double pvalue = 1.0;
};

/// One-sample KS test: sup |F_n - F| and the asymptotic p-value Q(sqrt(n) D).
inline KsResult ks_statistic(std::span<const double> sample, const std::function<double(double)>& cdf) {
  if (sample.empty()) throw InvalidParameter("ks_statistic: empty sample");
  std::vector<double> s(sample.begin(), sample.end());
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  double d = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double F = cdf(s[i]);
    // Ties: the empirical cdf jumps once per distinct value.
    std::size_t lo = i;
    while (lo > 0 && s[lo - 1] == s[i]) --lo;
    std::size_t hi = i;
    while (hi + 1 < s.size() && s[hi + 1] == s[i]) ++hi;
    d = std::max({d, static_cast<double>(hi + 1) / n - F, F - static_cast<double>(lo) / n});
  }
  d = std::clamp(d, 0.0, 1.0);
  return {d, kolmogorov_survival(std::sqrt(n) * d)};
}

inline double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw InvalidParameter("pearson: need two equal-length samples of size >= 2");
  const double ma = mean(a);
  const double mb = mean(b);
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) throw InvalidParameter("pearson: constant sample");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

/// Ranks starting at 1; tied values share their average rank.
inline std::vector<double> ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

inline double spearman(std::span<const double> a, std::span<const double> b) {
  const auto ra = ranks(a);
  const auto rb = ranks(b);
  return pearson(ra, rb);
}

}  // namespace prlab
