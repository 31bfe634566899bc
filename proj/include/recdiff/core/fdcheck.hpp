#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "recdiff/core/errors.hpp"
#include "recdiff/core/params.hpp"

namespace recdiff {

// Central-difference gradient audit. Evaluations run at float64 so that the
// difference quotient is not drowned by evaluation rounding; the analytic
// gradient under audit must come from the float64 instantiation of the same
// graph. The relative error is taken per parameter array in the 2-norm:
//   err = max over arrays of ||g - d||2 / max(1e-8, ||d||2)
// which keeps near-zero individual derivatives from inflating the score.

// Flat-vector form: f maps x to a scalar; g is the analytic gradient at x0.
inline double finite_diff_check_vec(const std::function<double(const std::vector<double>&)>& f,
                                    std::vector<double> x0, const std::vector<double>& g,
                                    double h) {
  if (h <= 0.0) throw ParameterError("finite_diff_check h must be positive");
  if (g.size() != x0.size()) throw DimensionError("gradient length mismatch");
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < x0.size(); ++i) {
    const double save = x0[i];
    x0[i] = save + h;
    const double fp = f(x0);
    x0[i] = save - h;
    const double fm = f(x0);
    x0[i] = save;
    const double d = (fp - fm) / (2.0 * h);
    num += (g[i] - d) * (g[i] - d);
    den += d * d;
  }
  return std::sqrt(num) / std::max(1e-8, std::sqrt(den));
}

// ParamStore form: loss() evaluates the objective from the store's current
// values; the store's grad buffers hold the analytic gradient under audit.
inline double finite_diff_check(ParamStore<double>& params,
                                const std::function<double()>& loss, double h) {
  if (h <= 0.0) throw ParameterError("finite_diff_check h must be positive");
  double worst = 0.0;
  for (size_t e = 0; e < params.count(); ++e) {
    auto& entry = params.entry_at(e);
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < entry.value.data.size(); ++i) {
      const double save = entry.value.data[i];
      entry.value.data[i] = save + h;
      const double fp = loss();
      entry.value.data[i] = save - h;
      const double fm = loss();
      entry.value.data[i] = save;
      const double d = (fp - fm) / (2.0 * h);
      const double g = entry.grad.data[i];
      num += (g - d) * (g - d);
      den += d * d;
    }
    const double err = std::sqrt(num) / std::max(1e-8, std::sqrt(den));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace recdiff
