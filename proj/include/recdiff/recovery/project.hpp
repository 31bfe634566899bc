#pragma once

#include <limits>
#include <vector>

#include "recdiff/core/errors.hpp"
#include "recdiff/core/rng.hpp"
#include "recdiff/diffusion/process.hpp"
#include "recdiff/diffusion/trajectory.hpp"
#include "recdiff/recovery/ood.hpp"

namespace recdiff {

// In-distribution projection. An OOD state s_R is pinned into the reverse
// chain for only the first T_s of T_D steps; once released, the trajectory's
// initial state relaxes toward the data manifold while staying anchored near
// s_R. Several candidates are drawn and the one the model finds most likely
// wins; its initial state is the projection target s_g.
struct ProjectionConfig {
  int T_s = -1;  // conditioned reverse steps; negative means T_D / 2
  int N_g = 8;   // candidate chains drawn per projection

  int steps(int T_D) const { return T_s < 0 ? T_D / 2 : T_s; }

  void validate(int T_D) const {
    const int ts = steps(T_D);
    if (ts < 0 || ts > T_D)
      throw ParameterError("conditioned steps must lie in [0, T_D]");
    if (N_g < 1) throw ParameterError("projection needs N_g >= 1");
  }
};

struct Projection {
  std::vector<float> s_g;  // initial state of the winner (raw units)
  Trajectory traj;         // winning trajectory, denormalized
  int winner = -1;         // index into L
  double score = 0.0;      // negated divergence of the winner
  std::vector<double> L;   // per-candidate divergence
};

template <class M>
Projection project_id(const M& model, const std::vector<float>& s_R_raw,
                      const ProjectionConfig& pc, const OODConfig& oc, Rng& rng) {
  const int T_D = model.schedule().T_D;
  pc.validate(T_D);
  oc.validate();
  const int ts = pc.steps(T_D);
  const Conditioning cond =
      Conditioning::initial_state(model.lay, model.nz, s_R_raw);

  Projection out;
  std::vector<float> best_flat;
  double best = std::numeric_limits<double>::infinity();
  for (int g = 0; g < pc.N_g; ++g) {
    const std::vector<float> flat = sample_chain(model, cond, ts, rng);
    const double L = kl_likelihood(model, flat, oc.K, oc.N_noise, rng);
    out.L.push_back(L);
    if (L < best) {
      best = L;
      best_flat = flat;
      out.winner = g;
    }
  }

  // Only a never-released chain may re-apply the raw pins: with ts >= T_D the
  // winner's initial state is s_R bit-exactly. A partially conditioned chain
  // owns its initial state, so it is denormalized as-is.
  out.traj = model.to_trajectory(best_flat, ts >= T_D ? cond : Conditioning{});
  out.s_g.assign(out.traj.state(0), out.traj.state(0) + model.lay.d_s);
  out.score = -best;
  return out;
}

template <class M>
Projection project_id(const M& model, const State& s_R, const ProjectionConfig& pc,
                      const OODConfig& oc, Rng& rng) {
  return project_id(model, s_R.to_flat(), pc, oc, rng);
}

}  // namespace recdiff
