#pragma once

#include <chrono>
#include <vector>

#include "recdiff/core/errors.hpp"
#include "recdiff/core/rng.hpp"
#include "recdiff/diffusion/trajectory.hpp"
#include "recdiff/env/sim.hpp"
#include "recdiff/trajopt/problem.hpp"
#include "recdiff/trajopt/solver.hpp"

namespace recdiff {

// Solver settings used by the planning pipeline. The library defaults favor
// cheap inner loops; recovery-scale problems (H = 8, mixed modes, displaced
// starts) need a heavier inner budget and a stiffer initial penalty to reach
// the step-stagnation criterion reliably.
inline SolverConfig pipeline_solver() {
  SolverConfig cfg;
  cfg.inner_iters = 400;
  cfg.rho0 = 100.0;
  return cfg;
}

// Pack a start state plus solver output into the trajectory layout used by
// the diffusion models: states s_0..s_H followed by actions u_0..u_{H-1}.
inline Trajectory plan_to_trajectory(const WorldConfig& w, const State& s0,
                                     const std::vector<State>& states,
                                     const std::vector<Action>& actions) {
  const int H = static_cast<int>(actions.size());
  if (static_cast<int>(states.size()) != H)
    throw DimensionError("plan needs one state per action");
  const int d_s = 2 * w.n_f + 1;
  const int d_u = 4 * w.n_f;
  Trajectory tr = Trajectory::zeros(H, d_s, d_u);
  const std::vector<float> f0 = s0.to_flat();
  std::copy(f0.begin(), f0.end(), tr.state(0));
  for (int t = 0; t < H; ++t) {
    const std::vector<float> fs = states[static_cast<size_t>(t)].to_flat();
    std::copy(fs.begin(), fs.end(), tr.state(t + 1));
    const std::vector<float> fu = actions[static_cast<size_t>(t)].to_flat();
    std::copy(fu.begin(), fu.end(), tr.action(t));
  }
  return tr;
}

// Unpack a trajectory into the solver's decision vector for warm starts.
// The trajectory's own initial state is ignored; the problem pins s_0.
inline std::vector<double> trajectory_to_x(const TrajOptProblem& p,
                                           const Trajectory& tr) {
  if (tr.H != p.H || tr.d_s != 2 * p.world.n_f + 1 || tr.d_u != 4 * p.world.n_f)
    throw DimensionError("trajectory layout does not fit the problem");
  std::vector<State> states;
  std::vector<Action> actions;
  states.reserve(static_cast<size_t>(p.H));
  actions.reserve(static_cast<size_t>(p.H));
  for (int t = 1; t <= p.H; ++t)
    states.push_back(State::from_flat(p.world, tr.state(t)));
  for (int t = 0; t < p.H; ++t)
    actions.push_back(Action::from_flat(p.world, tr.action(t)));
  return pack_decision(p, states, actions);
}

// One executed step: the commanded action, the action stored for datasets
// (see execute_actions), what the simulator reported, and both end states.
struct StoredStep {
  State pre;
  Action commanded;
  Action stored;
  StepEvents ev;
  State post;
};

// Run a command sequence through the environment. With a contact mode given,
// each stored action is rewritten to the realized quasi-static equivalent so
// that an executed prefix satisfies the mode's constraint rows exactly:
//  - gripping fingers keep the commanded force and store the compliant step
//    dq = J^T(q_pre) f / k_c evaluated at the realized pre-step joints;
//  - resetting fingers store the realized joint step and zero force.
// Without a mode the commanded action is stored unchanged.
inline std::vector<StoredStep> execute_actions(const Env& env, const State& s0,
                                               const std::vector<Action>& actions,
                                               const ContactMode* mode, Rng& rng) {
  if (mode && mode->n_fingers() != env.w.n_f)
    throw DimensionError("contact mode does not match the finger count");
  std::vector<StoredStep> steps;
  steps.reserve(actions.size());
  State s = s0;
  for (const Action& u : actions) {
    const auto res = env.step(s, u, rng);
    StoredStep st{s, u, u, res.ev, res.s};
    if (mode) {
      for (int i = 0; i < env.w.n_f; ++i) {
        const auto ii = static_cast<size_t>(i);
        if (mode->is_contact(i)) {
          const Jac2 J = jacobian_finger(env.w, i, s.q[2 * ii], s.q[2 * ii + 1]);
          const Vec2& f = st.commanded.f[ii];
          st.stored.dq[2 * ii] = (J.m[0][0] * f[0] + J.m[1][0] * f[1]) / env.w.k_c;
          st.stored.dq[2 * ii + 1] = (J.m[0][1] * f[0] + J.m[1][1] * f[1]) / env.w.k_c;
        } else {
          st.stored.dq[2 * ii] = res.ev.finger[ii].dq_realized[0];
          st.stored.dq[2 * ii + 1] = res.ev.finger[ii].dq_realized[1];
          st.stored.f[ii] = {0.0, 0.0};
        }
      }
    }
    steps.push_back(std::move(st));
    s = res.s;
  }
  return steps;
}

struct PrimitiveResult {
  std::vector<StoredStep> steps;
  Solution sol;
  bool warm = false;        // the model-initialized solve was kept
  double plan_seconds = 0;  // sampling plus solving
};

// One task primitive: an all-contact turn toward theta_target planned by a
// model-sampled trajectory refined through the solver (falling back to the
// rolling initializer when the warm solve fails to converge), then executed
// for up to max_exec steps.
template <class M>
PrimitiveResult run_task_primitive(const Env& env, const M& model, const State& s,
                                   double theta_target, int H, int budget,
                                   const SolverConfig& scfg, int max_exec,
                                   Rng& alg_rng, Rng& env_rng) {
  State goal = s;
  goal.theta = theta_target;
  const ContactMode all{std::vector<int>(static_cast<size_t>(env.w.n_f), 1)};
  const TrajOptProblem p = build_problem(all, s, goal, H, env.w);

  PrimitiveResult out;
  const auto t0 = std::chrono::steady_clock::now();
  const Conditioning cond =
      Conditioning::initial_state(model.lay, model.nz, s.to_flat());
  bool have_warm = false;
  try {
    const std::vector<Trajectory> trs = model.sample(cond, 1, alg_rng);
    out.sol = solve(p, trajectory_to_x(p, trs.front()), budget, scfg);
    have_warm = true;
  } catch (const InitializationError&) {
    // fall through to the rolling initializer
  }
  if (!have_warm || !out.sol.converged) {
    const Solution cold = solve(p, rolling_init(p), budget, scfg);
    const bool take_cold =
        !have_warm || cold.converged ||
        (!out.sol.converged &&
         std::max(cold.h_inf, cold.g_plus) < std::max(out.sol.h_inf, out.sol.g_plus));
    if (take_cold) {
      out.sol = cold;
    } else {
      out.warm = true;
    }
  } else {
    out.warm = true;
  }
  out.plan_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::vector<Action> acts = out.sol.actions;
  if (max_exec < static_cast<int>(acts.size()))
    acts.resize(static_cast<size_t>(std::max(max_exec, 0)));
  out.steps = execute_actions(env, s, acts, nullptr, env_rng);
  return out;
}

}  // namespace recdiff
