#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "recdiff/core/rng.hpp"
#include "recdiff/env/sim.hpp"
#include "recdiff/trajopt/problem.hpp"
#include "recdiff/trajopt/solver.hpp"

namespace recdiff {

// Exhaustive reference optimum for small problem instances. Actions are
// enumerated on an axis-aligned grid and rolled out through the noiseless
// simulator (action noise and kicks disabled), so every candidate trajectory
// is dynamically realizable by construction; the problem's constraint stack
// then filters candidates at a widened tolerance (tol_scale times the solver
// tolerances) and the cheapest survivor wins.
//
// Per gripping finger, the grid covers the commanded force components and the
// joint command is the compliant response J^T f / k_c; per resetting finger,
// the grid covers the joint command with zero force. The search fails (not an
// error) when no grid candidate passes the constraint check.
struct OracleResult {
  bool feasible = false;
  double cost = std::numeric_limits<double>::infinity();
  std::vector<State> states;    // s_1 .. s_H of the best candidate
  std::vector<Action> actions;  // u_0 .. u_{H-1}
  std::vector<double> x;        // packed decision vector of the best candidate
  long leaves = 0;              // fully rolled-out candidates
  long expanded = 0;            // step expansions survived local pruning
};

namespace detail {

inline std::vector<double> grid_axis(double mag, int levels) {
  std::vector<double> out;
  if (levels == 1) {
    out.push_back(0.0);
    return out;
  }
  for (int j = 0; j < levels; ++j)
    out.push_back(-mag + 2.0 * mag * j / (levels - 1));
  return out;
}

}  // namespace detail

inline OracleResult brute_force_oracle(const TrajOptProblem& p, int grid_levels,
                                       double tol_scale = 10.0,
                                       const SolverConfig& tols = {}) {
  p.validate();
  if (p.H > 3) throw ParameterError("oracle horizon cap is 3");
  if (p.world.n_f > 2) throw ParameterError("oracle finger cap is 2");
  if (grid_levels < 1 || grid_levels > 5)
    throw ParameterError("oracle grid levels must be in [1, 5]");
  double bound = 1.0;
  for (int t = 0; t < p.H; ++t)
    for (int i = 0; i < 2 * p.world.n_f; ++i) bound *= grid_levels;
  if (bound > 5e6)
    throw ParameterError("oracle grid too large for exhaustive rollout");

  WorldConfig wq = p.world;
  wq.sigma_act = 0.0;  // candidate rollouts are noiseless
  wq.p_kick = 0.0;
  const Env env(wq);
  Rng rng(0);  // consumed draws all multiply by zero noise scales

  const std::vector<double> f_axis = detail::grid_axis(p.world.f_max, grid_levels);
  const std::vector<double> dq_axis = detail::grid_axis(p.world.dq_max, grid_levels);
  const double tol_h = tols.tol_h * tol_scale;
  const double tol_g = tols.tol_g * tol_scale;

  OracleResult best;

  // Per-finger candidate actions given the current configuration. Locally
  // infeasible cells (friction cone, force floor, command bounds) are pruned
  // with the same widened tolerance the leaf check uses, so pruning never
  // removes a candidate the leaf check would accept.
  auto finger_candidates = [&](const State& s, int i) {
    std::vector<std::array<double, 4>> out;  // dq_a, dq_b, f_x, f_y
    const auto ii = static_cast<size_t>(i);
    if (p.mode.is_contact(i)) {
      const Vec2 tip = fk_finger(p.world, i, s.q[2 * ii], s.q[2 * ii + 1]);
      const Vec2 d = tip - p.world.valve_center;
      const double r = norm(d);
      const Vec2 n = (1.0 / r) * d;
      const Jac2 J = jacobian_finger(p.world, i, s.q[2 * ii], s.q[2 * ii + 1]);
      for (double fx : f_axis) {
        for (double fy : f_axis) {
          const double fn = -(fx * n[0] + fy * n[1]);
          const double ft = fy * n[0] - fx * n[1];
          if (p.world.f_min - fn > tol_g) continue;
          if (ft - p.world.mu * fn > tol_g) continue;
          if (-ft - p.world.mu * fn > tol_g) continue;
          const double dqa = (J.m[0][0] * fx + J.m[1][0] * fy) / p.world.k_c;
          const double dqb = (J.m[0][1] * fx + J.m[1][1] * fy) / p.world.k_c;
          if (std::abs(dqa) - p.world.dq_max > tol_g) continue;
          if (std::abs(dqb) - p.world.dq_max > tol_g) continue;
          out.push_back({dqa, dqb, fx, fy});
        }
      }
    } else {
      for (double da : dq_axis)
        for (double db : dq_axis) out.push_back({da, db, 0.0, 0.0});
    }
    return out;
  };

  std::vector<State> states;
  std::vector<Action> actions;
  states.reserve(static_cast<size_t>(p.H));
  actions.reserve(static_cast<size_t>(p.H));

  // Depth-first enumeration over steps; combination across fingers is the
  // cartesian product of their per-finger candidate lists.
  auto search = [&](auto&& self, const State& s, int t) -> void {
    if (t == p.H) {
      ++best.leaves;
      const std::vector<double> x = pack_decision(p, states, actions);
      const ConstraintEval ce = eval_constraints(p, x);
      if (ce.h_inf() > tol_h || ce.g_plus_max() > tol_g) return;
      const double cost = eval_costs(p, x).total();
      if (cost < best.cost) {
        best.feasible = true;
        best.cost = cost;
        best.states = states;
        best.actions = actions;
        best.x = x;
      }
      return;
    }
    std::vector<std::vector<std::array<double, 4>>> per_finger;
    per_finger.reserve(static_cast<size_t>(p.world.n_f));
    for (int i = 0; i < p.world.n_f; ++i) per_finger.push_back(finger_candidates(s, i));
    for (const auto& fc : per_finger)
      if (fc.empty()) return;  // no viable command for some finger

    std::vector<size_t> idx(static_cast<size_t>(p.world.n_f), 0);
    while (true) {
      Action u = Action::zeros(p.world);
      for (int i = 0; i < p.world.n_f; ++i) {
        const auto& cell = per_finger[static_cast<size_t>(i)][idx[static_cast<size_t>(i)]];
        u.dq[static_cast<size_t>(2 * i)] = cell[0];
        u.dq[static_cast<size_t>(2 * i + 1)] = cell[1];
        u.f[static_cast<size_t>(i)] = {cell[2], cell[3]};
      }
      ++best.expanded;
      const Env::StepResult r = env.step(s, u, rng);
      states.push_back(r.s);
      actions.push_back(u);
      self(self, r.s, t + 1);
      states.pop_back();
      actions.pop_back();

      int carry = p.world.n_f - 1;
      while (carry >= 0) {
        const auto ci = static_cast<size_t>(carry);
        if (++idx[ci] < per_finger[ci].size()) break;
        idx[ci] = 0;
        --carry;
      }
      if (carry < 0) break;
    }
  };
  search(search, p.s0, 0);
  return best;
}

}  // namespace recdiff
