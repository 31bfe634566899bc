#pragma once

#include <cmath>
#include <vector>

#include "recdiff/core/array.hpp"
#include "recdiff/core/errors.hpp"

namespace recdiff {

// [sin(k w_0)..sin(k w_{d/2-1}), cos(k w_0)..cos(k w_{d/2-1})] with w_i
// geometrically spaced from 1 down to 1e-4. ||embed||^2 = dim/2 for every k.
template <class T = float>
Arr<T> sinusoidal_embed(int k, int dim) {
  if (dim <= 0 || dim % 2 != 0) throw ParameterError("embedding dim must be positive and even");
  const int half = dim / 2;
  Arr<T> e = Arr<T>::zeros({dim});
  for (int i = 0; i < half; ++i) {
    const double w =
        half > 1 ? std::exp(-std::log(10000.0) * static_cast<double>(i) / (half - 1)) : 1.0;
    e(i) = static_cast<T>(std::sin(k * w));
    e(half + i) = static_cast<T>(std::cos(k * w));
  }
  return e;
}

// Classifier-free guidance blend: (1 + w) * eps_cond - w * eps_uncond,
// evaluated as eps_cond + w * (eps_cond - eps_uncond) so that equal branches
// return eps_cond bit-exactly for every w.
template <class T>
Arr<T> cfg_combine(const Arr<T>& eps_cond, const Arr<T>& eps_uncond, double w) {
  if (!eps_cond.same_shape(eps_uncond)) throw DimensionError("cfg_combine shape mismatch");
  Arr<T> out = eps_cond;
  for (size_t i = 0; i < out.data.size(); ++i) {
    const double ec = eps_cond.data[i], eu = eps_uncond.data[i];
    out.data[i] = static_cast<T>(ec + w * (ec - eu));
  }
  return out;
}

inline std::vector<float> cfg_combine(const std::vector<float>& eps_cond,
                                      const std::vector<float>& eps_uncond, double w) {
  if (eps_cond.size() != eps_uncond.size()) throw DimensionError("cfg_combine length mismatch");
  std::vector<float> out(eps_cond.size());
  for (size_t i = 0; i < out.size(); ++i) {
    const double ec = eps_cond[i], eu = eps_uncond[i];
    out[i] = static_cast<float>(ec + w * (ec - eu));
  }
  return out;
}

// Contact modes diffuse in a +-1 encoding; threshold at 0, ties round to 1.
inline std::vector<int> mode_round(const std::vector<float>& c_continuous) {
  std::vector<int> out(c_continuous.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = c_continuous[i] >= 0.0f ? 1 : 0;
  return out;
}

inline float mode_encode(int flag) { return flag ? 1.0f : -1.0f; }

}  // namespace recdiff
