#pragma once

#include <cmath>
#include <vector>

#include "recdiff/core/errors.hpp"

namespace recdiff {

// Variance schedule for the forward corruption chain and the fixed-variance
// reverse kernel. sigma2[k] = beta[k] * (1 - alpha_bar[k-1]) / (1 - alpha_bar[k])
// is the forward-posterior variance, reused untrained by the reverse kernel so
// the per-step KL has matched covariances.
struct NoiseSchedule {
  int T_D = 0;
  std::vector<double> beta, alpha, alpha_bar, sigma2;

  static NoiseSchedule linear(int T_D, double beta_start, double beta_end) {
    if (T_D < 2) throw ParameterError("schedule needs T_D >= 2");
    if (beta_start <= 0.0 || beta_end >= 1.0 || beta_end < beta_start)
      throw ParameterError("schedule betas must satisfy 0 < start <= end < 1");
    NoiseSchedule s;
    s.T_D = T_D;
    s.beta.resize(T_D);
    s.alpha.resize(T_D);
    s.alpha_bar.resize(T_D);
    s.sigma2.resize(T_D);
    double prod = 1.0;
    for (int k = 0; k < T_D; ++k) {
      s.beta[k] = beta_start + (beta_end - beta_start) * static_cast<double>(k) / (T_D - 1);
      s.alpha[k] = 1.0 - s.beta[k];
      prod *= s.alpha[k];
      s.alpha_bar[k] = prod;
    }
    s.sigma2[0] = 0.0;
    for (int k = 1; k < T_D; ++k)
      s.sigma2[k] = s.beta[k] * (1.0 - s.alpha_bar[k - 1]) / (1.0 - s.alpha_bar[k]);
    s.validate();
    return s;
  }

  // Rebuild the derived arrays from a beta sequence (e.g. one read back from
  // a checkpoint). Same arithmetic as linear(), so identical betas give
  // identical schedules.
  static NoiseSchedule from_betas(std::vector<double> beta) {
    NoiseSchedule s;
    s.T_D = static_cast<int>(beta.size());
    if (s.T_D < 2) throw ParameterError("schedule needs T_D >= 2");
    s.beta = std::move(beta);
    s.alpha.resize(s.T_D);
    s.alpha_bar.resize(s.T_D);
    s.sigma2.resize(s.T_D);
    double prod = 1.0;
    for (int k = 0; k < s.T_D; ++k) {
      s.alpha[k] = 1.0 - s.beta[k];
      prod *= s.alpha[k];
      s.alpha_bar[k] = prod;
    }
    s.sigma2[0] = 0.0;
    for (int k = 1; k < s.T_D; ++k)
      s.sigma2[k] = s.beta[k] * (1.0 - s.alpha_bar[k - 1]) / (1.0 - s.alpha_bar[k]);
    s.validate();
    return s;
  }

  void validate() const {
    if (static_cast<int>(beta.size()) != T_D || static_cast<int>(alpha_bar.size()) != T_D)
      throw ParameterError("schedule array lengths");
    for (int k = 0; k < T_D; ++k) {
      if (!(beta[k] > 0.0 && beta[k] < 1.0)) throw ParameterError("beta out of (0,1)");
      if (k > 0 && beta[k] < beta[k - 1]) throw ParameterError("beta must be nondecreasing");
      if (k > 0 && !(alpha_bar[k] < alpha_bar[k - 1]))
        throw ParameterError("alpha_bar must be strictly decreasing");
    }
  }

  void check_step(int k) const {
    if (k < 0 || k >= T_D) throw StepError("diffusion step out of range");
  }
};

// Library default. The pair (T_D, beta_end) balances two requirements that a
// shorter chain cannot meet at once: sqrt(alpha_bar[T_D-1]) < 0.05 (the final
// forward state is effectively pure noise, so initializing the reverse chain
// from N(0, I) is sound) and small per-step beta (the fixed posterior reverse
// variances undershoot the true reverse variance by O(beta^2) per step, so
// large steps visibly shrink sample spread; at these settings the shrinkage
// stays within a few percent).
inline NoiseSchedule default_schedule() { return NoiseSchedule::linear(100, 1e-4, 0.2); }

}  // namespace recdiff
