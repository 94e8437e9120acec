#pragma once

// Brute-force reference implementations written straight from the textbook
// definitions. Nothing here calls into the library: ranks come from linear
// search, counts from full scans, quantiles from the sorted copy.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

namespace oracle {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kSlack = 1e-9;

/// Smallest integer s with s >= x (up to the shared rounding slack).
inline long long ceil_rank(double x) {
  long long s = static_cast<long long>(x) - 2;
  while (static_cast<double>(s) + kSlack < x) ++s;
  return s;
}

/// Largest integer s with s <= x (up to the shared rounding slack).
inline long long floor_rank(double x) {
  long long s = static_cast<long long>(x) + 2;
  while (static_cast<double>(s) - kSlack > x) --s;
  return s;
}

inline std::vector<double> sorted_copy(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v;
}

/// Conformal quantile of raw scores: the s-th smallest, s = ceil((n+1)c).
inline std::optional<double> quantile(std::vector<double> scores, double confidence) {
  const auto n = static_cast<long long>(scores.size());
  const long long s = ceil_rank(static_cast<double>(n + 1) * confidence);
  if (s > n) return std::nullopt;
  auto v = sorted_copy(std::move(scores));
  return v[static_cast<std::size_t>(std::max(s, 1LL) - 1)];
}

struct Interval {
  double lower;
  double upper;
};

/// Symmetric interval yhat -/+ q * sigma from raw residuals / sigmas.
inline Interval cr_interval(const std::vector<double>& abs_residuals, const std::vector<double>& cal_sigmas,
                            double yhat, double sigma, double confidence) {
  std::vector<double> scores;
  for (std::size_t i = 0; i < abs_residuals.size(); ++i) {
    scores.push_back(cal_sigmas.empty() ? abs_residuals[i] : abs_residuals[i] / cal_sigmas[i]);
  }
  const auto q = quantile(scores, confidence);
  if (!q) return {-kInf, kInf};
  return {yhat - *q * sigma, yhat + *q * sigma};
}

/// Predictive CDF by a full scan over knots yhat + sigma * C_i.
inline double cps_cdf(const std::vector<double>& signed_scores, double yhat, double sigma, double y, double tau) {
  double below = 0.0, equal = 0.0;
  for (double c : signed_scores) {
    const double t = yhat + sigma * c;
    if (t < y) below += 1.0;
    else if (t == y) equal += 1.0;
  }
  return (below + tau * (equal + 1.0)) / static_cast<double>(signed_scores.size() + 1);
}

inline Interval cps_interval(const std::vector<double>& signed_scores, double yhat, double sigma,
                             double confidence) {
  const auto c = sorted_copy(signed_scores);
  const auto n = static_cast<long long>(c.size());
  const double eps = 1.0 - confidence;
  const long long l = floor_rank(static_cast<double>(n + 1) * eps / 2.0);
  const long long u = ceil_rank(static_cast<double>(n + 1) * (1.0 - eps / 2.0));
  Interval out{-kInf, kInf};
  if (l >= 1) out.lower = yhat + sigma * c[static_cast<std::size_t>(l - 1)];
  if (u <= n) out.upper = yhat + sigma * c[static_cast<std::size_t>(u - 1)];
  return out;
}

/// Equal-frequency boundaries by linear interpolation between order
/// statistics, duplicates and boundaries at the maximum removed.
inline std::vector<double> mondrian_boundaries(std::vector<double> values, std::size_t n_bins) {
  const auto v = sorted_copy(std::move(values));
  const std::size_t n = v.size();
  std::vector<double> raw;
  for (std::size_t j = 1; j < n_bins; ++j) {
    const double h = static_cast<double>((n - 1) * j) / static_cast<double>(n_bins);
    const double lo_f = std::floor(h);
    const auto lo = static_cast<std::size_t>(lo_f);
    const double next = lo + 1 < n ? v[lo + 1] : v[lo];
    raw.push_back(v[lo] + (h - lo_f) * (next - v[lo]));
  }
  std::vector<double> out;
  for (double b : raw) {
    if (b == v.back()) continue;
    bool dup = false;
    for (double kept : out) dup = dup || kept >= b;
    if (!dup) out.push_back(b);
  }
  return out;
}

/// Right-closed bin position by scanning boundaries.
inline std::size_t bin_of(const std::vector<double>& boundaries, double value) {
  std::size_t bin = 0;
  for (double b : boundaries) {
    if (value > b) ++bin;
  }
  return bin;
}

}  // namespace oracle
