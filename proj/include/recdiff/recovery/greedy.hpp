#pragma once

#include <limits>
#include <optional>
#include <vector>

#include "recdiff/core/errors.hpp"
#include "recdiff/core/rng.hpp"
#include "recdiff/recovery/ood.hpp"
#include "recdiff/trajopt/problem.hpp"
#include "recdiff/trajopt/solver.hpp"

namespace recdiff {

// The recovery mode set: every assignment that lifts exactly one finger while
// the others keep gripping.
inline std::vector<ContactMode> one_finger_reset_modes(int n_f) {
  if (n_f < 2)
    throw ParameterError("one-finger resets need at least two fingers");
  std::vector<ContactMode> modes;
  for (int i = 0; i < n_f; ++i) {
    ContactMode m{std::vector<int>(static_cast<size_t>(n_f), 1)};
    m.c[static_cast<size_t>(i)] = 0;
    modes.push_back(std::move(m));
  }
  return modes;
}

struct GreedyCandidate {
  ContactMode mode;
  bool converged = false;
  double p_end = -std::numeric_limits<double>::infinity();
  double cost = 0.0;
};

struct GreedyPlan {
  ContactMode mode;
  Solution sol;
  double p_end = 0.0;  // state likelihood at the plan's final state
  std::vector<GreedyCandidate> candidates;
  int solves = 0;
};

// Greedy search over recovery modes: solve one trajectory optimization per
// candidate mode from s_R to the projection target s_g, score each feasible
// plan by the state likelihood of its final state, and keep the best. Ties
// break toward the cheaper plan. Returns nothing when every candidate solve
// fails, in which case the caller retries with a fresh projection.
template <class M>
std::optional<GreedyPlan> greedy_mode_search(const M& model, const WorldConfig& world,
                                             const State& s_R, const State& s_g,
                                             const std::vector<ContactMode>& C_R,
                                             int H, const OODConfig& oc, int budget,
                                             const SolverConfig& scfg, Rng& rng) {
  if (C_R.empty()) throw ParameterError("greedy search needs a nonempty mode set");
  std::optional<GreedyPlan> best;
  std::vector<GreedyCandidate> cands;
  int solves = 0;
  for (const ContactMode& c : C_R) {
    const TrajOptProblem p = build_problem(c, s_R, s_g, H, world);
    Solution sol = solve(p, rolling_init(p), budget, scfg);
    ++solves;
    GreedyCandidate cand{c, sol.converged,
                         -std::numeric_limits<double>::infinity(),
                         sol.costs.total()};
    if (sol.converged) {
      cand.p_end = state_likelihood(model, sol.states.back(), oc, rng);
      const bool wins =
          !best || cand.p_end > best->p_end ||
          (cand.p_end == best->p_end && cand.cost < best->sol.costs.total());
      if (wins) {
        GreedyPlan g;
        g.mode = c;
        g.sol = std::move(sol);
        g.p_end = cand.p_end;
        best = std::move(g);
      }
    }
    cands.push_back(std::move(cand));
  }
  if (best) {
    best->candidates = std::move(cands);
    best->solves = solves;
  }
  return best;
}

}  // namespace recdiff
