#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "recdiff/core/errors.hpp"
#include "recdiff/core/rng.hpp"
#include "recdiff/diffusion/trajectory.hpp"
#include "recdiff/env/sim.hpp"
#include "recdiff/recovery/plan.hpp"
#include "recdiff/trajopt/problem.hpp"
#include "recdiff/trajopt/solver.hpp"

namespace recdiff {

// Task-model corpus generation: noiseless all-contact turning plans from
// randomized starts. Only converged solves enter the corpus, so every stored
// trajectory satisfies the contact constraints to solver tolerance.
struct TaskGenConfig {
  int n = 2000;              // trajectories to collect
  int H = 8;
  double turn = 0.7853981633974483;  // pi/4 nominal turn per plan
  double turn_jitter = 0.1;
  double grip_jitter = 0.2;  // rim-angle randomization
  double theta_jitter = 0.2; // valve-angle randomization
  int budget = 25;           // outer iterations per solve
  int attempt_factor = 4;    // give up after attempt_factor * n solves
  SolverConfig solver = pipeline_solver();

  void validate() const {
    if (n < 1) throw ParameterError("corpus generation needs n >= 1");
    if (H < 1) throw ParameterError("plans need H >= 1");
    if (turn <= 0.0) throw ParameterError("turn must be positive");
    if (attempt_factor < 1) throw ParameterError("attempt factor must be >= 1");
  }
};

struct TaskGenResult {
  std::vector<Trajectory> trajs;
  int attempts = 0;   // solves tried, converged or not
  int solved = 0;     // == trajs.size()
};

inline TaskGenResult gen_task_data(const WorldConfig& world, const TaskGenConfig& tc,
                                   std::uint64_t seed) {
  tc.validate();
  world.validate();
  const Env env(world);
  const ContactMode all{std::vector<int>(static_cast<size_t>(world.n_f), 1)};
  constexpr double kPi = 3.14159265358979323846;

  TaskGenResult out;
  Rng root(seed);
  const int cap = tc.attempt_factor * tc.n;
  while (out.solved < tc.n && out.attempts < cap) {
    Rng rng = root.split(static_cast<std::uint64_t>(out.attempts));
    ++out.attempts;

    const double a0 = kPi + rng.uniform(-tc.grip_jitter, tc.grip_jitter);
    const double a1 = rng.uniform(-tc.grip_jitter, tc.grip_jitter);
    State s0 = env.grip_state({a0, a1});
    s0.theta = rng.uniform(-tc.theta_jitter, tc.theta_jitter);
    State goal = s0;
    goal.theta = s0.theta - (tc.turn + rng.uniform(-tc.turn_jitter, tc.turn_jitter));

    const TrajOptProblem p = build_problem(all, s0, goal, tc.H, world);
    const Solution sol = solve(p, rolling_init(p), tc.budget, tc.solver);
    if (!sol.converged) continue;
    out.trajs.push_back(plan_to_trajectory(world, s0, sol.states, sol.actions));
    ++out.solved;
  }
  return out;
}

// Nominal episode-start states under the same randomization the episodes use;
// held-out draws of these calibrate the detection floor.
inline std::vector<State> nominal_states(const WorldConfig& world, int n,
                                         double grip_jitter, double theta_jitter,
                                         std::uint64_t seed) {
  if (n < 1) throw ParameterError("need n >= 1 states");
  const Env env(world);
  constexpr double kPi = 3.14159265358979323846;
  std::vector<State> states;
  states.reserve(static_cast<size_t>(n));
  Rng root(seed);
  for (int i = 0; i < n; ++i) {
    Rng rng = root.split(static_cast<std::uint64_t>(i));
    const double a0 = kPi + rng.uniform(-grip_jitter, grip_jitter);
    const double a1 = rng.uniform(-grip_jitter, grip_jitter);
    State s = env.grip_state({a0, a1});
    s.theta = rng.uniform(-theta_jitter, theta_jitter);
    states.push_back(std::move(s));
  }
  return states;
}

}  // namespace recdiff
