#pragma once

#include <chrono>
#include <cstdint>
#include <vector>

#include "recdiff/core/errors.hpp"
#include "recdiff/core/rng.hpp"
#include "recdiff/recovery/greedy.hpp"
#include "recdiff/recovery/ood.hpp"
#include "recdiff/recovery/plan.hpp"
#include "recdiff/recovery/project.hpp"

namespace recdiff {

// One training example for the joint recovery model: a full-horizon
// trajectory paired with the contact mode that produced it, plus provenance.
struct RecoveryPair {
  Trajectory traj;
  std::vector<int> mode;
  int episode = 0;
  int attempt = 0;
  int offset = 0;  // executed steps folded into the trajectory, 0..H-1
};

struct RecoveryDataset {
  std::vector<RecoveryPair> pairs;
  int episodes = 0;
  int ood_events = 0;
  int attempts = 0;         // recovery attempts executed
  int gated_attempts = 0;   // attempts whose pairs passed the storage gate
  double plan_time_s = 0.0;
};

struct DataGenConfig {
  int episodes = 100;
  int max_steps = 50;        // environment steps per episode
  int H = 8;                 // plan horizon
  int retry_cap = 3;         // recovery attempts per OOD event
  int greedy_budget = 60;    // outer iterations for the per-mode cold solves
  int reopt_budget = 10;     // outer iterations for the per-step re-solves
  int primitive_budget = 15; // outer iterations for task primitives
  double delta_margin = 0.008;  // extra reset clearance planned in (m)
  double gate_h = 1e-3;      // write-time equality tolerance for stored pairs
  double gate_g = 1e-6;      // write-time inequality tolerance
  double goal_tol = 0.05;    // |theta - theta_goal| that ends the episode
  double primitive_turn = 0.7853981633974483;  // pi/4 per primitive
  double total_turn = 1.0471975511965976;      // pi/3 per episode
  double grip_jitter = 0.2;  // rim-angle randomization at episode start
  double theta_jitter = 0.2; // valve-angle randomization at episode start
  SolverConfig solver = pipeline_solver();

  void validate() const {
    if (episodes < 1) throw ParameterError("data generation needs episodes >= 1");
    if (max_steps < 1) throw ParameterError("episodes need max_steps >= 1");
    if (H < 1) throw ParameterError("plans need H >= 1");
    if (retry_cap < 1) throw ParameterError("recovery needs retry_cap >= 1");
    if (!(delta_margin >= 0.0)) throw ParameterError("delta margin must be >= 0");
  }
};

namespace detail {

// Augmented trajectory at offset t: the realized prefix r_0..r_t with its
// stored actions, then the current plan (solved from r_t over horizon H - t)
// for the remaining slots.
inline Trajectory augmented_pair(const std::vector<State>& realized,
                                 const std::vector<Action>& stored_actions,
                                 const Solution& cur, int t, int H, int d_s,
                                 int d_u) {
  if (static_cast<int>(realized.size()) <= t ||
      static_cast<int>(stored_actions.size()) < t)
    throw DimensionError("realized prefix shorter than the offset");
  if (static_cast<int>(cur.states.size()) != H - t ||
      static_cast<int>(cur.actions.size()) != H - t)
    throw DimensionError("plan tail does not cover the remaining horizon");
  Trajectory pair = Trajectory::zeros(H, d_s, d_u);
  for (int i = 0; i <= t; ++i) {
    const auto fs = realized[static_cast<size_t>(i)].to_flat();
    std::copy(fs.begin(), fs.end(), pair.state(i));
  }
  for (int j = 0; j < t; ++j) {
    const auto fu = stored_actions[static_cast<size_t>(j)].to_flat();
    std::copy(fu.begin(), fu.end(), pair.action(j));
  }
  for (int slot = t; slot < H; ++slot) {
    const auto fu = cur.actions[static_cast<size_t>(slot - t)].to_flat();
    std::copy(fu.begin(), fu.end(), pair.action(slot));
    const auto fs = cur.states[static_cast<size_t>(slot - t)].to_flat();
    std::copy(fs.begin(), fs.end(), pair.state(slot + 1));
  }
  return pair;
}

// Outcome of one recovery attempt inside data generation.
struct AttemptOut {
  int steps = 0;            // environment steps consumed
  State final_state;
  bool planned = false;     // a feasible greedy plan existed
  bool stored = false;      // the pairs passed the storage gate
  std::vector<Trajectory> pairs;  // offsets 0..H-1 when complete
  std::vector<int> mode;
  double p_end = 0.0;       // likelihood at the final state (valid when have_p)
  bool have_p = false;
  double plan_seconds = 0.0;
};

// Execute one recovery attempt with per-step re-optimization and assemble
// the H augmented (executed-prefix ++ remaining-plan) trajectories. Planning
// happens in a world with padded reset clearance; the storage gate re-checks
// every pair against the true world.
template <class M>
AttemptOut recovery_attempt(const M& model, const Env& quiet_env,
                            const WorldConfig& margin_w, const WorldConfig& true_w,
                            const State& s_R, double p_start,
                            const std::vector<ContactMode>& C_R,
                            const OODConfig& oc, const ProjectionConfig& pc,
                            const DataGenConfig& gc, int steps_left, Rng& alg_rng,
                            Rng& env_rng) {
  using Clock = std::chrono::steady_clock;
  AttemptOut out;
  out.final_state = s_R;

  const auto t0 = Clock::now();
  const Projection proj = project_id(model, s_R, pc, oc, alg_rng);
  const State s_g = State::from_flat(true_w, proj.s_g.data());
  auto plan = greedy_mode_search(model, margin_w, s_R, s_g, C_R, gc.H, oc,
                                 gc.greedy_budget, gc.solver, alg_rng);
  out.plan_seconds += std::chrono::duration<double>(Clock::now() - t0).count();
  if (!plan) return out;
  out.planned = true;
  out.mode = plan->mode.c;

  const int H = gc.H;
  const int d_s = 2 * true_w.n_f + 1;
  const int d_u = 4 * true_w.n_f;
  std::vector<State> realized{s_R};
  std::vector<Action> stored_actions;
  std::vector<Trajectory> pairs;
  Solution cur = plan->sol;
  State r = s_R;

  int t = 0;
  for (; t < H && t < steps_left; ++t) {
    if (t > 0) {
      // Non-receding re-solve of the remaining horizon from the realized
      // state, warm-started with the previous plan's tail.
      const TrajOptProblem rp =
          build_problem(plan->mode, r, s_g, H - t, margin_w);
      const std::vector<State> warm_s(cur.states.begin() + 1, cur.states.end());
      const std::vector<Action> warm_u(cur.actions.begin() + 1, cur.actions.end());
      const auto r0 = Clock::now();
      cur = solve(rp, pack_decision(rp, warm_s, warm_u), gc.reopt_budget, gc.solver);
      out.plan_seconds += std::chrono::duration<double>(Clock::now() - r0).count();
    }

    pairs.push_back(
        augmented_pair(realized, stored_actions, cur, t, H, d_s, d_u));

    const auto exec = execute_actions(quiet_env, r, {cur.actions.front()},
                                      &plan->mode, env_rng);
    stored_actions.push_back(exec.front().stored);
    realized.push_back(exec.front().post);
    r = exec.front().post;
  }

  out.steps = t;
  out.final_state = r;
  if (t < H) return out;  // episode budget cut the attempt short: nothing stored

  out.p_end = state_likelihood(model, r, oc, alg_rng);
  out.have_p = true;

  // Storage gate: the attempt must have raised the likelihood, and every
  // augmented trajectory must satisfy the mode's constraint structure in the
  // true world at write-time tolerance.
  bool ok = out.p_end > p_start;
  if (ok) {
    const TrajOptProblem gate_p =
        build_problem(plan->mode, s_R, s_g, H, true_w);
    for (const Trajectory& pr : pairs) {
      const ConstraintEval ce = eval_constraints(gate_p, trajectory_to_x(gate_p, pr));
      if (ce.h_inf() > gc.gate_h || ce.g_plus_max() > gc.gate_g) {
        ok = false;
        break;
      }
    }
  }
  if (ok) {
    out.stored = true;
    out.pairs = std::move(pairs);
  }
  return out;
}

}  // namespace detail

// Offline recovery-data generation: run perturbed task episodes; whenever the
// state goes OOD, project it back to the manifold, plan a one-finger reset
// with the greedy mode search, execute it with shrinking-horizon re-solves,
// and keep the H augmented trajectories when the attempt raised the state
// likelihood and every pair verifies. Task primitives run with perturbations
// on (they are what drives states off-distribution); recovery executes with
// the external kicks suppressed.
template <class M>
RecoveryDataset gen_recovery_data(const M& model, const WorldConfig& world,
                                  const OODConfig& oc, const ProjectionConfig& pc,
                                  const DataGenConfig& gc, std::uint64_t seed) {
  gc.validate();
  oc.validate();
  world.validate();
  const Env task_env(world);
  // Recovery demonstrations execute noise-free: stored pairs must re-verify
  // the mode's constraints exactly, which actuation noise would destroy.
  WorldConfig quiet_w = world;
  quiet_w.p_kick = 0.0;
  quiet_w.sigma_act = 0.0;
  const Env quiet_env(quiet_w);
  WorldConfig margin_w = world;
  margin_w.delta += gc.delta_margin;
  const std::vector<ContactMode> C_R = one_finger_reset_modes(world.n_f);

  RecoveryDataset ds;
  ds.episodes = gc.episodes;
  Rng root(seed);

  for (int ep = 0; ep < gc.episodes; ++ep) {
    Rng setup = root.split(3 * static_cast<std::uint64_t>(ep));
    Rng env_rng = root.split(3 * static_cast<std::uint64_t>(ep) + 1);
    Rng alg_rng = root.split(3 * static_cast<std::uint64_t>(ep) + 2);

    const double a0 = 3.14159265358979323846 +
                      setup.uniform(-gc.grip_jitter, gc.grip_jitter);
    const double a1 = setup.uniform(-gc.grip_jitter, gc.grip_jitter);
    State s = task_env.grip_state({a0, a1});
    s.theta = setup.uniform(-gc.theta_jitter, gc.theta_jitter);
    const double theta_goal = s.theta - gc.total_turn;

    int steps = 0;
    int attempt_idx = 0;
    bool have_p = false;
    double p_now = 0.0;
    while (steps < gc.max_steps &&
           std::abs(s.theta - theta_goal) > gc.goal_tol) {
      if (!have_p) p_now = state_likelihood(model, s, oc, alg_rng);
      have_p = false;

      if (p_now < oc.p_min) {
        ++ds.ood_events;
        bool recovered = false;
        for (int a = 0; a < gc.retry_cap && steps < gc.max_steps; ++a) {
          auto att = detail::recovery_attempt(model, quiet_env, margin_w, world,
                                              s, p_now, C_R, oc, pc, gc,
                                              gc.max_steps - steps, alg_rng,
                                              env_rng);
          ++ds.attempts;
          ds.plan_time_s += att.plan_seconds;
          steps += att.steps;
          s = att.final_state;
          if (att.stored) {
            ++ds.gated_attempts;
            for (int off = 0; off < static_cast<int>(att.pairs.size()); ++off)
              ds.pairs.push_back({std::move(att.pairs[static_cast<size_t>(off)]),
                                  att.mode, ep, attempt_idx, off});
          }
          ++attempt_idx;
          if (att.have_p)
            p_now = att.p_end;
          else if (steps < gc.max_steps)
            p_now = state_likelihood(model, s, oc, alg_rng);
          else
            break;
          if (p_now >= oc.p_min) {
            recovered = true;
            have_p = true;
            break;
          }
        }
        if (!recovered && steps < gc.max_steps) {
          // Retry cap exhausted: push on with one primitive before rechecking.
          const double target =
              std::max(theta_goal, s.theta - gc.primitive_turn);
          auto prim = run_task_primitive(task_env, model, s, target, gc.H,
                                         gc.primitive_budget, gc.solver,
                                         gc.max_steps - steps, alg_rng, env_rng);
          ds.plan_time_s += prim.plan_seconds;
          steps += static_cast<int>(prim.steps.size());
          if (!prim.steps.empty()) s = prim.steps.back().post;
        }
      } else {
        const double target = std::max(theta_goal, s.theta - gc.primitive_turn);
        auto prim = run_task_primitive(task_env, model, s, target, gc.H,
                                       gc.primitive_budget, gc.solver,
                                       gc.max_steps - steps, alg_rng, env_rng);
        ds.plan_time_s += prim.plan_seconds;
        steps += static_cast<int>(prim.steps.size());
        if (!prim.steps.empty()) s = prim.steps.back().post;
      }
    }
  }
  return ds;
}

}  // namespace recdiff
