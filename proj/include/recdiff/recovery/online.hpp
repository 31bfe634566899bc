#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <vector>

#include "recdiff/core/errors.hpp"
#include "recdiff/core/rng.hpp"
#include "recdiff/diffusion/process.hpp"
#include "recdiff/recovery/ood.hpp"

namespace recdiff {

struct ScoredSample {
  std::vector<int> mode;
  Trajectory traj;
  double score = 0.0;  // negated divergence under the trajectory model
};

// Pick the recovery mode with the highest score sum over its supporting
// samples, then the best-scoring trajectory within that mode. Deterministic
// tie-breaking: equal sums go to the mode holding the single best score,
// then to the lexicographically smaller mode; equal scores within a mode go
// to the earlier sample. Scaling every score by a positive constant changes
// neither choice.
inline size_t select_sample(const std::vector<ScoredSample>& samples) {
  if (samples.empty()) throw ParameterError("mode selection needs samples");
  std::map<std::vector<int>, std::pair<double, size_t>> groups;  // sum, best idx
  for (size_t i = 0; i < samples.size(); ++i) {
    auto [it, fresh] = groups.try_emplace(samples[i].mode, 0.0, i);
    it->second.first += samples[i].score;
    if (!fresh && samples[i].score > samples[it->second.second].score)
      it->second.second = i;
  }
  const std::pair<double, size_t>* win = nullptr;
  for (const auto& [mode, g] : groups) {
    const bool better =
        !win || g.first > win->first ||
        (g.first == win->first &&
         samples[g.second].score > samples[win->second].score);
    if (better) win = &g;
  }
  return win->second;
}

struct OnlinePlan {
  std::vector<int> mode;
  std::vector<float> s_g;  // final state of the chosen trajectory (raw)
  Trajectory traj;         // warm-start trajectory for the refining solve
  double score_sum = 0.0;  // winning mode's summed score
  int n_support = 0;       // samples that rounded to the winning mode
  bool resampled = false;  // first batch rounded all-invalid
};

// Distilled recovery: draw N_R joint (trajectory, mode) samples conditioned
// on s_R, score each trajectory under the task model, and pick by summed
// mode score. Samples whose mode rounds all-zero are unusable (no finger
// would grip); if an entire batch is unusable one more batch is drawn, and
// failing again signals the caller to fall back to the greedy search.
template <class MT, class MJ>
std::optional<OnlinePlan> online_recover(const MT& model, const MJ& joint,
                                         const State& s_R, int N_R,
                                         const OODConfig& oc, Rng& rng) {
  if (N_R < 1) throw ParameterError("online recovery needs N_R >= 1");
  oc.validate();
  const Conditioning cond =
      Conditioning::initial_state(joint.lay, joint.nz, s_R.to_flat());

  std::vector<ScoredSample> scored;
  bool resampled = false;
  for (int round = 0; round < 2 && scored.empty(); ++round) {
    resampled = round > 0;
    const auto flats = sample_flats(joint, cond, N_R, rng);
    for (const auto& flat : flats) {
      auto js = joint.to_joint_sample(flat, cond);
      const bool usable =
          std::any_of(js.mode.begin(), js.mode.end(), [](int v) { return v == 1; });
      if (!usable) continue;
      const double L =
          kl_likelihood(model, model.normalized_flat(js.traj), oc.K, oc.N_noise, rng);
      scored.push_back({std::move(js.mode), std::move(js.traj), -L});
    }
  }
  if (scored.empty()) return std::nullopt;

  const size_t pick = select_sample(scored);
  OnlinePlan out;
  out.mode = scored[pick].mode;
  out.resampled = resampled;
  for (const ScoredSample& s : scored) {
    if (s.mode == out.mode) {
      out.score_sum += s.score;
      ++out.n_support;
    }
  }
  out.traj = std::move(scored[pick].traj);
  out.s_g.assign(out.traj.state(out.traj.H),
                 out.traj.state(out.traj.H) + out.traj.d_s);
  return out;
}

}  // namespace recdiff
