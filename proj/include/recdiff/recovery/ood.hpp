#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "recdiff/core/errors.hpp"
#include "recdiff/core/rng.hpp"
#include "recdiff/diffusion/process.hpp"
#include "recdiff/diffusion/trajectory.hpp"
#include "recdiff/env/world.hpp"

namespace recdiff {

// Out-of-distribution detection via denoising likelihood. A state is scored
// by sampling a handful of trajectories conditioned on it and averaging
// their divergence from the model's denoising posterior; the negated mean is
// the state likelihood p~. Higher means more in-distribution, and a state is
// flagged OOD when p~ drops strictly below a calibrated floor p_min.
struct OODConfig {
  double p_min = 0.0;            // calibrated detection floor
  int N_L = 4;                   // trajectories sampled per state estimate
  std::vector<int> K = {5, 10, 15};  // diffusion steps probed per trajectory
  int N_noise = 4;               // forward-noise draws per probed step

  void validate() const {
    if (N_L < 1) throw ParameterError("OOD estimate needs N_L >= 1");
    if (K.empty()) throw ParameterError("OOD estimate needs a nonempty step set");
    if (N_noise < 1) throw ParameterError("OOD estimate needs N_noise >= 1");
  }
};

// p~(s): sample N_L trajectories from the model fully conditioned on s (the
// initial state stays pinned through every reverse step), score each with the
// denoising divergence, and return the negated mean.
template <class M>
double state_likelihood(const M& model, const std::vector<float>& s_raw,
                        const OODConfig& cfg, Rng& rng) {
  cfg.validate();
  const Conditioning cond = Conditioning::initial_state(model.lay, model.nz, s_raw);
  double sum = 0.0;
  for (int i = 0; i < cfg.N_L; ++i) {
    const std::vector<float> tau = sample_chain(model, cond, model.schedule().T_D, rng);
    sum += kl_likelihood(model, tau, cfg.K, cfg.N_noise, rng);
  }
  return -(sum / cfg.N_L);
}

template <class M>
double state_likelihood(const M& model, const State& s, const OODConfig& cfg, Rng& rng) {
  return state_likelihood(model, s.to_flat(), cfg, rng);
}

// Strictly-below comparison: a state scoring exactly p_min is still
// in-distribution.
template <class M>
bool is_ood(const M& model, const State& s, const OODConfig& cfg, Rng& rng) {
  return state_likelihood(model, s, cfg, rng) < cfg.p_min;
}

// Detection floor from held-out nominal states: the nearest-rank percentile
// of their p~ scores (ascending). The caller stores the result in
// OODConfig::p_min. When scores is non-null the per-state values are written
// there in input order.
template <class M>
double calibrate_pmin(const M& model, const std::vector<State>& states,
                      const OODConfig& cfg, Rng& rng, double percentile = 5.0,
                      std::vector<double>* scores = nullptr) {
  if (states.empty()) throw ParameterError("calibration needs at least one state");
  if (!(percentile > 0.0 && percentile <= 100.0))
    throw ParameterError("percentile must be in (0, 100]");
  std::vector<double> p;
  p.reserve(states.size());
  for (const State& s : states) p.push_back(state_likelihood(model, s, cfg, rng));
  if (scores) *scores = p;
  std::sort(p.begin(), p.end());
  const auto n = static_cast<double>(p.size());
  const auto rank = static_cast<size_t>(std::ceil(percentile / 100.0 * n));
  return p[std::max<size_t>(rank, 1) - 1];
}

}  // namespace recdiff
