#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "recdiff/core/errors.hpp"
#include "recdiff/core/rng.hpp"
#include "recdiff/diffusion/schedule.hpp"
#include "recdiff/diffusion/trajectory.hpp"

namespace recdiff {

// Model concept used here (duck-typed):
//   const NoiseSchedule& schedule() const
//   int flat_len() const
//   std::vector<float> eps(const std::vector<float>& x_k, int k,
//                          const Conditioning& cond) const
// eps receives the conditioning so joint models can run guidance internally;
// trajectory-only models ignore it.

// x_k = sqrt(alpha_bar[k]) * x0 + sqrt(1 - alpha_bar[k]) * z
inline std::vector<float> forward_noise(const std::vector<float>& x0, int k,
                                        const std::vector<float>& z,
                                        const NoiseSchedule& sched) {
  sched.check_step(k);
  if (z.size() != x0.size()) throw DimensionError("noise length mismatch");
  const float a = static_cast<float>(std::sqrt(sched.alpha_bar[k]));
  const float b = static_cast<float>(std::sqrt(1.0 - sched.alpha_bar[k]));
  std::vector<float> out(x0.size());
  for (size_t i = 0; i < x0.size(); ++i) out[i] = a * x0[i] + b * z[i];
  return out;
}

// Ancestral update; in-paints conditioned entries after the update.
// z = 0 at k = 1 (the final reverse step is deterministic).
template <class M>
std::vector<float> reverse_step(const M& model, const std::vector<float>& x_k, int k,
                                const Conditioning& cond, Rng& rng) {
  const NoiseSchedule& s = model.schedule();
  if (k < 1 || k >= s.T_D) throw StepError("reverse step index out of [1, T_D)");
  const std::vector<float> eps = model.eps(x_k, k, cond);
  if (eps.size() != x_k.size()) throw DimensionError("eps length mismatch");
  const float inv = static_cast<float>(1.0 / std::sqrt(s.alpha[k]));
  const float coef = static_cast<float>(s.beta[k] / std::sqrt(1.0 - s.alpha_bar[k]));
  const float sig = static_cast<float>(std::sqrt(s.sigma2[k]));
  std::vector<float> out(x_k.size());
  for (size_t i = 0; i < x_k.size(); ++i) {
    const float mu = inv * (x_k[i] - coef * eps[i]);
    out[i] = (k == 1) ? mu : mu + sig * rng.gaussian_f();
  }
  cond.apply_normalized(out);
  return out;
}

// Full reverse chain from pure noise, in normalized units. Conditioning is
// applied at initialization and after each of the first cond_steps reverse
// steps (counted from k = T_D - 1 downward), then released; cond_steps >= T_D
// conditions the whole chain.
template <class M>
std::vector<float> sample_chain(const M& model, const Conditioning& cond, int cond_steps,
                                Rng& rng) {
  const NoiseSchedule& s = model.schedule();
  cond.check_bounds(model.flat_len());
  std::vector<float> x(static_cast<size_t>(model.flat_len()));
  for (auto& v : x) v = rng.gaussian_f();
  static const Conditioning kNone{};
  if (cond_steps > 0) cond.apply_normalized(x);
  for (int k = s.T_D - 1; k >= 1; --k) {
    const bool active = (s.T_D - 1 - k) < cond_steps;
    x = reverse_step(model, x, k, active ? cond : kNone, rng);
  }
  return x;
}

// n independent conditioned chains, normalized outputs.
template <class M>
std::vector<std::vector<float>> sample_flats(const M& model, const Conditioning& cond, int n,
                                             Rng& rng) {
  if (n < 1) throw ParameterError("sample needs n >= 1");
  std::vector<std::vector<float>> out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) out.push_back(sample_chain(model, cond, model.schedule().T_D, rng));
  return out;
}

// Denoising likelihood: mean over k in K and N_noise corruption draws of
// KL(q(tau^{k-1} | tau^k, tau) || p_model(tau^{k-1} | tau^k)). With matched
// variances this is ||mu_q - mu_model||^2 / (2 sigma_k^2). Lower = more
// in-distribution. tau must be normalized. The estimate is invariant to the
// ordering of K: each (k, draw) pair gets its own derived stream.
template <class M>
double kl_likelihood(const M& model, const std::vector<float>& tau, const std::vector<int>& K,
                     int N_noise, Rng& rng) {
  if (K.empty()) throw ParameterError("kl_likelihood needs a nonempty step set");
  if (N_noise < 1) throw ParameterError("kl_likelihood needs N_noise >= 1");
  const NoiseSchedule& s = model.schedule();
  for (int k : K)
    if (k < 1 || k >= s.T_D) throw StepError("kl_likelihood step outside [1, T_D)");
  static const Conditioning kNone{};
  const uint64_t base = rng.next_u64();
  double total = 0.0;
  for (int k : K) {
    const double ab = s.alpha_bar[k], abp = s.alpha_bar[k - 1];
    const double cq_x0 = std::sqrt(abp) * s.beta[k] / (1.0 - ab);
    const double cq_xk = std::sqrt(s.alpha[k]) * (1.0 - abp) / (1.0 - ab);
    const double cp = s.beta[k] / std::sqrt(1.0 - ab);
    const double inv_sa = 1.0 / std::sqrt(s.alpha[k]);
    for (int j = 0; j < N_noise; ++j) {
      Rng sub = Rng(base).split(static_cast<uint64_t>(k) * 1000003ull + static_cast<uint64_t>(j));
      std::vector<float> z(tau.size());
      for (auto& v : z) v = sub.gaussian_f();
      const std::vector<float> xk = forward_noise(tau, k, z, s);
      const std::vector<float> eps = model.eps(xk, k, kNone);
      double sq = 0.0;
      for (size_t i = 0; i < tau.size(); ++i) {
        const double mq = cq_x0 * tau[i] + cq_xk * xk[i];
        const double mp = inv_sa * (xk[i] - cp * eps[i]);
        sq += (mq - mp) * (mq - mp);
      }
      total += sq / (2.0 * s.sigma2[k]);
    }
  }
  return total / (static_cast<double>(K.size()) * N_noise);
}

}  // namespace recdiff
