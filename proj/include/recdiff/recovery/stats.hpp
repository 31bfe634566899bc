#pragma once

#include <cmath>
#include <vector>

#include "recdiff/core/errors.hpp"

namespace recdiff {

inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) throw ParameterError("mean of an empty sample");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Sample standard deviation (n - 1 denominator); zero for a single point.
inline double stddev_of(const std::vector<double>& v) {
  const size_t n = v.size();
  if (n < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(n - 1));
}

// Normal-approximation 95% confidence half-width for the mean.
inline double ci95_halfwidth(const std::vector<double>& v) {
  if (v.empty()) throw ParameterError("confidence width of an empty sample");
  return 1.96 * stddev_of(v) / std::sqrt(static_cast<double>(v.size()));
}

// One-sided exact sign test: P(X >= wins) for X ~ Binomial(n, 1/2).
inline double binomial_sign_test_p(int wins, int n) {
  if (n < 1) throw ParameterError("sign test needs n >= 1");
  if (wins < 0 || wins > n) throw ParameterError("wins must lie in [0, n]");
  if (wins == 0) return 1.0;  // the full sum, exactly
  double p = 0.0;
  for (int i = wins; i <= n; ++i) {
    const double lc = std::lgamma(n + 1.0) - std::lgamma(i + 1.0) -
                      std::lgamma(n - i + 1.0);
    p += std::exp(lc - n * std::log(2.0));
  }
  return std::min(p, 1.0);
}

// Area under the ROC curve by the Mann-Whitney statistic: the probability
// that a positive scores above a negative, with ties counted half.
inline double mann_whitney_auc(const std::vector<double>& pos,
                               const std::vector<double>& neg) {
  if (pos.empty() || neg.empty())
    throw ParameterError("AUC needs both populations nonempty");
  double s = 0.0;
  for (double a : pos)
    for (double b : neg) s += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
  return s / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

}  // namespace recdiff
