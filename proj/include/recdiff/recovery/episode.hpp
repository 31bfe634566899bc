#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <thread>
#include <vector>

#include "recdiff/core/errors.hpp"
#include "recdiff/core/rng.hpp"
#include "recdiff/recovery/greedy.hpp"
#include "recdiff/recovery/online.hpp"
#include "recdiff/recovery/ood.hpp"
#include "recdiff/recovery/plan.hpp"
#include "recdiff/recovery/project.hpp"
#include "recdiff/recovery/stats.hpp"

namespace recdiff {

enum class RecoveryMethod { kNoRecovery, kGreedy, kDistilled };

inline const char* method_name(RecoveryMethod m) {
  switch (m) {
    case RecoveryMethod::kNoRecovery: return "no-recovery";
    case RecoveryMethod::kGreedy: return "greedy";
    case RecoveryMethod::kDistilled: return "distilled";
  }
  throw ParameterError("unknown recovery method");
}

inline RecoveryMethod method_from_name(const std::string& name) {
  if (name == "no-recovery") return RecoveryMethod::kNoRecovery;
  if (name == "greedy") return RecoveryMethod::kGreedy;
  if (name == "distilled") return RecoveryMethod::kDistilled;
  throw ParameterError("unknown recovery method: " + name);
}

// One OOD event: opens at detection and closes at the first in-distribution
// check after it (success) or at the episode's end (timeout). Consecutive
// attempts, including any interleaved keep-going primitives after the retry
// cap, belong to the same span, so spans never overlap and the two outcomes
// are exhaustive.
struct RecoverySpan {
  int start_step = 0;
  int end_step = 0;
  int attempts = 0;
  bool success = false;
  bool timeout = false;
  std::vector<double> p_trace;  // likelihood at detection and after attempts
};

struct StepLogEntry {
  double theta = 0.0;
  double kick = 0.0;
  double dtheta = 0.0;
  bool in_recovery = false;
};

struct EpisodeRecord {
  int index = 0;
  RecoveryMethod method = RecoveryMethod::kNoRecovery;
  std::uint64_t seed = 0;
  int steps = 0;
  double theta0 = 0.0;
  double theta_goal = 0.0;
  double theta_final = 0.0;
  double task_metric = 0.0;  // |theta_final - theta_goal|
  bool reached_goal = false;
  std::vector<RecoverySpan> spans;
  std::vector<StepLogEntry> step_log;
  double plan_time_s = 0.0;
  int ood_checks = 0;
  int primitives = 0;
};

struct EpisodeConfig {
  int max_steps = 100;
  int H = 8;
  int retry_cap = 3;
  int N_R = 16;              // joint samples per distilled recovery
  double primitive_turn = 0.7853981633974483;  // pi/4
  double total_turn = 1.0471975511965976;      // pi/3
  double goal_tol = 0.05;
  int primitive_budget = 15;
  int greedy_budget = 60;
  int warm_budget = 10;      // refining solve for distilled plans
  double delta_margin = 0.008;
  double grip_jitter = 0.2;
  double theta_jitter = 0.2;
  SolverConfig solver = pipeline_solver();

  void validate() const {
    if (max_steps < 1) throw ParameterError("episodes need max_steps >= 1");
    if (H < 1) throw ParameterError("plans need H >= 1");
    if (retry_cap < 1) throw ParameterError("recovery needs retry_cap >= 1");
    if (N_R < 1) throw ParameterError("distilled recovery needs N_R >= 1");
  }
};

namespace detail {

// Plan one recovery attempt for an episode. Greedy: project to the manifold
// and search the reset modes. Distilled: sample the joint model and refine
// its best trajectory with a short warm solve; an unusable batch falls back
// to the greedy planner.
template <class MT, class MJ>
std::optional<std::pair<ContactMode, Solution>> plan_recovery(
    const MT& model, const MJ* joint, RecoveryMethod method,
    const WorldConfig& margin_w, const State& s_R,
    const std::vector<ContactMode>& C_R, const OODConfig& oc,
    const ProjectionConfig& pc, const EpisodeConfig& ec, Rng& alg_rng) {
  if (method == RecoveryMethod::kDistilled && joint) {
    auto op = online_recover(model, *joint, s_R, ec.N_R, oc, alg_rng);
    if (op) {
      const ContactMode mode{op->mode};
      const State goal = State::from_flat(margin_w, op->s_g.data());
      const TrajOptProblem p = build_problem(mode, s_R, goal, ec.H, margin_w);
      Solution sol;
      try {
        sol = solve(p, trajectory_to_x(p, op->traj), ec.warm_budget, ec.solver);
      } catch (const InitializationError&) {
        sol = solve(p, rolling_init(p), ec.warm_budget, ec.solver);
      }
      return std::make_pair(mode, std::move(sol));
    }
  }
  const Projection proj = project_id(model, s_R, pc, oc, alg_rng);
  const State s_g = State::from_flat(margin_w, proj.s_g.data());
  auto plan = greedy_mode_search(model, margin_w, s_R, s_g, C_R, ec.H, oc,
                                 ec.greedy_budget, ec.solver, alg_rng);
  if (!plan) return std::nullopt;
  return std::make_pair(plan->mode, std::move(plan->sol));
}

}  // namespace detail

// One evaluation episode: turn the valve by total_turn with perturbations on,
// interleaving recovery whenever the state leaves the distribution (unless
// running the no-recovery baseline, which never checks). Recovery plans are
// executed with the external kicks suppressed; task primitives keep them.
template <class MT, class MJ>
EpisodeRecord run_episode(const MT& model, const MJ* joint,
                          const WorldConfig& world, RecoveryMethod method,
                          int index, std::uint64_t master_seed,
                          const OODConfig& oc, const ProjectionConfig& pc,
                          const EpisodeConfig& ec) {
  ec.validate();
  oc.validate();
  world.validate();
  if (method == RecoveryMethod::kDistilled && joint == nullptr)
    throw ParameterError("distilled episodes need the joint model");

  const Env task_env(world);
  WorldConfig quiet_w = world;
  quiet_w.p_kick = 0.0;
  const Env quiet_env(quiet_w);
  WorldConfig margin_w = world;
  margin_w.delta += ec.delta_margin;
  const std::vector<ContactMode> C_R = one_finger_reset_modes(world.n_f);

  Rng root(master_seed);
  Rng setup = root.split(3 * static_cast<std::uint64_t>(index));
  Rng env_rng = root.split(3 * static_cast<std::uint64_t>(index) + 1);
  Rng alg_rng = root.split(3 * static_cast<std::uint64_t>(index) + 2);

  EpisodeRecord rec;
  rec.index = index;
  rec.method = method;
  rec.seed = master_seed;

  const double a0 = 3.14159265358979323846 +
                    setup.uniform(-ec.grip_jitter, ec.grip_jitter);
  const double a1 = setup.uniform(-ec.grip_jitter, ec.grip_jitter);
  State s = task_env.grip_state({a0, a1});
  s.theta = setup.uniform(-ec.theta_jitter, ec.theta_jitter);
  rec.theta0 = s.theta;
  rec.theta_goal = s.theta - ec.total_turn;

  const auto log_steps = [&](const std::vector<StoredStep>& steps,
                             bool in_recovery) {
    for (const StoredStep& st : steps) {
      rec.step_log.push_back(
          {st.post.theta, st.ev.kick, st.ev.dtheta, in_recovery});
      s = st.post;
    }
    rec.steps += static_cast<int>(steps.size());
  };
  const auto run_primitive = [&](bool in_recovery) {
    const double target = std::max(rec.theta_goal, s.theta - ec.primitive_turn);
    auto prim = run_task_primitive(task_env, model, s, target, ec.H,
                                   ec.primitive_budget, ec.solver,
                                   ec.max_steps - rec.steps, alg_rng, env_rng);
    rec.plan_time_s += prim.plan_seconds;
    ++rec.primitives;
    log_steps(prim.steps, in_recovery);
  };

  RecoverySpan* open_span = nullptr;
  while (rec.steps < ec.max_steps &&
         std::abs(s.theta - rec.theta_goal) > ec.goal_tol) {
    if (method == RecoveryMethod::kNoRecovery) {
      run_primitive(false);
      continue;
    }

    double p_now = state_likelihood(model, s, oc, alg_rng);
    ++rec.ood_checks;

    if (p_now >= oc.p_min) {
      if (open_span) {
        // First in-distribution check after the event: the span closes.
        open_span->success = true;
        open_span->end_step = rec.steps;
        open_span->p_trace.push_back(p_now);
        open_span = nullptr;
      }
      run_primitive(false);
      continue;
    }

    if (!open_span) {
      rec.spans.push_back({});
      open_span = &rec.spans.back();
      open_span->start_step = rec.steps;
      open_span->p_trace.push_back(p_now);
    }

    bool recovered = false;
    for (int a = 0; a < ec.retry_cap && rec.steps < ec.max_steps; ++a) {
      using Clock = std::chrono::steady_clock;
      const auto t0 = Clock::now();
      auto plan = detail::plan_recovery(model, joint, method, margin_w, s, C_R,
                                        oc, pc, ec, alg_rng);
      rec.plan_time_s +=
          std::chrono::duration<double>(Clock::now() - t0).count();
      ++open_span->attempts;
      if (plan) {
        std::vector<Action> acts = plan->second.actions;
        const int room = ec.max_steps - rec.steps;
        if (static_cast<int>(acts.size()) > room)
          acts.resize(static_cast<size_t>(room));
        log_steps(execute_actions(quiet_env, s, acts, nullptr, env_rng), true);
      }
      if (rec.steps >= ec.max_steps) break;
      p_now = state_likelihood(model, s, oc, alg_rng);
      ++rec.ood_checks;
      open_span->p_trace.push_back(p_now);
      if (p_now >= oc.p_min) {
        recovered = true;
        break;
      }
    }

    if (recovered) {
      open_span->success = true;
      open_span->end_step = rec.steps;
      open_span = nullptr;
    } else if (rec.steps < ec.max_steps) {
      // Retry cap exhausted: push on with one primitive inside the open
      // span, then fall back into detection.
      run_primitive(true);
    }
  }

  if (open_span) {
    open_span->timeout = true;
    open_span->end_step = rec.steps;
  }
  rec.theta_final = s.theta;
  rec.task_metric = std::abs(s.theta - rec.theta_goal);
  rec.reached_goal = rec.task_metric <= ec.goal_tol;
  return rec;
}

// Run a block of episodes, optionally across worker threads. Per-episode
// randomness is derived from (master_seed, index) alone, so results are
// identical for any thread count and merge deterministically by index.
template <class MT, class MJ>
std::vector<EpisodeRecord> run_episodes(const MT& model, const MJ* joint,
                                        const WorldConfig& world,
                                        RecoveryMethod method, int n_episodes,
                                        std::uint64_t master_seed,
                                        const OODConfig& oc,
                                        const ProjectionConfig& pc,
                                        const EpisodeConfig& ec,
                                        int threads = 1) {
  if (n_episodes < 1) throw ParameterError("need at least one episode");
  std::vector<EpisodeRecord> records(static_cast<size_t>(n_episodes));
  const int workers = std::max(1, std::min(threads, n_episodes));
  if (workers == 1) {
    for (int i = 0; i < n_episodes; ++i)
      records[static_cast<size_t>(i)] = run_episode(
          model, joint, world, method, i, master_seed, oc, pc, ec);
    return records;
  }
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (int i = next.fetch_add(1); i < n_episodes; i = next.fetch_add(1))
      records[static_cast<size_t>(i)] = run_episode(
          model, joint, world, method, i, master_seed, oc, pc, ec);
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers));
  for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  return records;
}

struct MethodSummary {
  RecoveryMethod method = RecoveryMethod::kNoRecovery;
  int episodes = 0;
  int events = 0;
  double recovery_success = 0.0;  // fraction of events, 0 when eventless
  double recovery_timeout = 0.0;
  double task_metric_mean = 0.0;
  double task_metric_ci95 = 0.0;
  double plan_time_mean_s = 0.0;
};

inline MethodSummary compute_metrics(const std::vector<EpisodeRecord>& records) {
  if (records.empty()) throw ParameterError("metrics need at least one episode");
  MethodSummary sum;
  sum.method = records.front().method;
  sum.episodes = static_cast<int>(records.size());
  int success = 0, timeout = 0;
  std::vector<double> metric, ptime;
  metric.reserve(records.size());
  ptime.reserve(records.size());
  for (const EpisodeRecord& r : records) {
    if (r.method != sum.method)
      throw ParameterError("metrics need records from a single method");
    for (const RecoverySpan& sp : r.spans) {
      ++sum.events;
      if (sp.success) ++success;
      if (sp.timeout) ++timeout;
    }
    metric.push_back(r.task_metric);
    ptime.push_back(r.plan_time_s);
  }
  if (sum.events > 0) {
    sum.recovery_success = static_cast<double>(success) / sum.events;
    sum.recovery_timeout = static_cast<double>(timeout) / sum.events;
  }
  sum.task_metric_mean = mean_of(metric);
  sum.task_metric_ci95 = ci95_halfwidth(metric);
  sum.plan_time_mean_s = mean_of(ptime);
  return sum;
}

}  // namespace recdiff
