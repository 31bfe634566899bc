#pragma once

#include <fstream>
#include <initializer_list>
#include <string>
#include <vector>

#include "json.hpp"
#include "recdiff/core/errors.hpp"
#include "recdiff/env/world.hpp"
#include "recdiff/models/model.hpp"
#include "recdiff/recovery/datagen.hpp"
#include "recdiff/recovery/episode.hpp"
#include "recdiff/recovery/ood.hpp"
#include "recdiff/recovery/project.hpp"
#include "recdiff/recovery/taskgen.hpp"
#include "recdiff/trajopt/solver.hpp"

namespace recdiff {

// JSON views of every run-affecting configuration. Serialization is total
// (manifests must pin a rerun); parsing is partial (absent keys keep their
// defaults) but strict (unknown keys are usage errors, so typos cannot
// silently fall back to defaults).

namespace detail {

inline void check_keys(const nlohmann::json& j,
                       std::initializer_list<const char*> allowed, const char* ctx) {
  if (!j.is_object())
    throw UsageError(std::string(ctx) + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* a : allowed) known = known || it.key() == a;
    if (!known)
      throw UsageError("unknown key '" + it.key() + "' in " + ctx);
  }
}

template <class T>
void maybe(const nlohmann::json& j, const char* key, T& field) {
  if (!j.contains(key)) return;
  try {
    field = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw UsageError(std::string("bad value for '") + key + "'");
  }
}

}  // namespace detail

// ---- solver ----
inline nlohmann::json to_json(const SolverConfig& c) {
  return {{"inner_iters", c.inner_iters}, {"lbfgs_mem", c.lbfgs_mem},
          {"rho0", c.rho0},               {"rho_max", c.rho_max},
          {"rho_grow", c.rho_grow},       {"tol_h", c.tol_h},
          {"tol_g", c.tol_g},             {"tol_step", c.tol_step},
          {"armijo_c1", c.armijo_c1},     {"armijo_max", c.armijo_max},
          {"grad_tol", c.grad_tol}};
}
inline void apply_json(SolverConfig& c, const nlohmann::json& j, const char* ctx = "solver") {
  detail::check_keys(j,
                     {"inner_iters", "lbfgs_mem", "rho0", "rho_max", "rho_grow", "tol_h",
                      "tol_g", "tol_step", "armijo_c1", "armijo_max", "grad_tol"},
                     ctx);
  detail::maybe(j, "inner_iters", c.inner_iters);
  detail::maybe(j, "lbfgs_mem", c.lbfgs_mem);
  detail::maybe(j, "rho0", c.rho0);
  detail::maybe(j, "rho_max", c.rho_max);
  detail::maybe(j, "rho_grow", c.rho_grow);
  detail::maybe(j, "tol_h", c.tol_h);
  detail::maybe(j, "tol_g", c.tol_g);
  detail::maybe(j, "tol_step", c.tol_step);
  detail::maybe(j, "armijo_c1", c.armijo_c1);
  detail::maybe(j, "armijo_max", c.armijo_max);
  detail::maybe(j, "grad_tol", c.grad_tol);
}

// ---- world ----
inline nlohmann::json to_json(const WorldConfig& w) {
  return {{"n_f", w.n_f},
          {"base", w.base},
          {"l1", w.l1},
          {"l2", w.l2},
          {"q_min", w.q_min},
          {"q_max", w.q_max},
          {"dq_max", w.dq_max},
          {"f_max", w.f_max},
          {"valve_center", w.valve_center},
          {"R_v", w.R_v},
          {"mu", w.mu},
          {"tau_s", w.tau_s},
          {"kappa", w.kappa},
          {"f_min", w.f_min},
          {"delta", w.delta},
          {"r_patch", w.r_patch},
          {"k_c", w.k_c},
          {"sigma_act", w.sigma_act},
          {"p_kick", w.p_kick},
          {"kick_max", w.kick_max},
          {"contact_tol", w.contact_tol},
          {"grip_capture", w.grip_capture},
          {"w_stic", w.w_stic}};
}
inline void apply_json(WorldConfig& w, const nlohmann::json& j) {
  detail::check_keys(j, {"n_f",          "base",     "l1",       "l2",
                         "q_min",        "q_max",    "dq_max",   "f_max",
                         "valve_center", "R_v",      "mu",       "tau_s",
                         "kappa",        "f_min",    "delta",    "r_patch",
                         "k_c",          "sigma_act", "p_kick",  "kick_max",
                         "contact_tol",  "grip_capture", "w_stic"},
                     "world");
  detail::maybe(j, "n_f", w.n_f);
  detail::maybe(j, "base", w.base);
  detail::maybe(j, "l1", w.l1);
  detail::maybe(j, "l2", w.l2);
  detail::maybe(j, "q_min", w.q_min);
  detail::maybe(j, "q_max", w.q_max);
  detail::maybe(j, "dq_max", w.dq_max);
  detail::maybe(j, "f_max", w.f_max);
  detail::maybe(j, "valve_center", w.valve_center);
  detail::maybe(j, "R_v", w.R_v);
  detail::maybe(j, "mu", w.mu);
  detail::maybe(j, "tau_s", w.tau_s);
  detail::maybe(j, "kappa", w.kappa);
  detail::maybe(j, "f_min", w.f_min);
  detail::maybe(j, "delta", w.delta);
  detail::maybe(j, "r_patch", w.r_patch);
  detail::maybe(j, "k_c", w.k_c);
  detail::maybe(j, "sigma_act", w.sigma_act);
  detail::maybe(j, "p_kick", w.p_kick);
  detail::maybe(j, "kick_max", w.kick_max);
  detail::maybe(j, "contact_tol", w.contact_tol);
  detail::maybe(j, "grip_capture", w.grip_capture);
  detail::maybe(j, "w_stic", w.w_stic);
}

// ---- detection / projection ----
inline nlohmann::json to_json(const OODConfig& c) {
  return {{"p_min", c.p_min}, {"N_L", c.N_L}, {"K", c.K}, {"N_noise", c.N_noise}};
}
inline void apply_json(OODConfig& c, const nlohmann::json& j) {
  detail::check_keys(j, {"p_min", "N_L", "K", "N_noise"}, "ood");
  detail::maybe(j, "p_min", c.p_min);
  detail::maybe(j, "N_L", c.N_L);
  detail::maybe(j, "K", c.K);
  detail::maybe(j, "N_noise", c.N_noise);
}

inline nlohmann::json to_json(const ProjectionConfig& c) {
  return {{"T_s", c.T_s}, {"N_g", c.N_g}};
}
inline void apply_json(ProjectionConfig& c, const nlohmann::json& j) {
  detail::check_keys(j, {"T_s", "N_g"}, "projection");
  detail::maybe(j, "T_s", c.T_s);
  detail::maybe(j, "N_g", c.N_g);
}

// ---- episodes / data generation ----
inline nlohmann::json to_json(const EpisodeConfig& c) {
  return {{"max_steps", c.max_steps},
          {"H", c.H},
          {"retry_cap", c.retry_cap},
          {"N_R", c.N_R},
          {"primitive_turn", c.primitive_turn},
          {"total_turn", c.total_turn},
          {"goal_tol", c.goal_tol},
          {"primitive_budget", c.primitive_budget},
          {"greedy_budget", c.greedy_budget},
          {"warm_budget", c.warm_budget},
          {"delta_margin", c.delta_margin},
          {"grip_jitter", c.grip_jitter},
          {"theta_jitter", c.theta_jitter},
          {"solver", to_json(c.solver)}};
}
inline void apply_json(EpisodeConfig& c, const nlohmann::json& j) {
  detail::check_keys(j,
                     {"max_steps", "H", "retry_cap", "N_R", "primitive_turn", "total_turn",
                      "goal_tol", "primitive_budget", "greedy_budget", "warm_budget",
                      "delta_margin", "grip_jitter", "theta_jitter", "solver"},
                     "episode");
  detail::maybe(j, "max_steps", c.max_steps);
  detail::maybe(j, "H", c.H);
  detail::maybe(j, "retry_cap", c.retry_cap);
  detail::maybe(j, "N_R", c.N_R);
  detail::maybe(j, "primitive_turn", c.primitive_turn);
  detail::maybe(j, "total_turn", c.total_turn);
  detail::maybe(j, "goal_tol", c.goal_tol);
  detail::maybe(j, "primitive_budget", c.primitive_budget);
  detail::maybe(j, "greedy_budget", c.greedy_budget);
  detail::maybe(j, "warm_budget", c.warm_budget);
  detail::maybe(j, "delta_margin", c.delta_margin);
  detail::maybe(j, "grip_jitter", c.grip_jitter);
  detail::maybe(j, "theta_jitter", c.theta_jitter);
  if (j.contains("solver")) apply_json(c.solver, j.at("solver"), "episode.solver");
}

inline nlohmann::json to_json(const DataGenConfig& c) {
  return {{"episodes", c.episodes},
          {"max_steps", c.max_steps},
          {"H", c.H},
          {"retry_cap", c.retry_cap},
          {"greedy_budget", c.greedy_budget},
          {"reopt_budget", c.reopt_budget},
          {"primitive_budget", c.primitive_budget},
          {"delta_margin", c.delta_margin},
          {"gate_h", c.gate_h},
          {"gate_g", c.gate_g},
          {"goal_tol", c.goal_tol},
          {"primitive_turn", c.primitive_turn},
          {"total_turn", c.total_turn},
          {"grip_jitter", c.grip_jitter},
          {"theta_jitter", c.theta_jitter},
          {"solver", to_json(c.solver)}};
}
inline void apply_json(DataGenConfig& c, const nlohmann::json& j) {
  detail::check_keys(j,
                     {"episodes", "max_steps", "H", "retry_cap", "greedy_budget",
                      "reopt_budget", "primitive_budget", "delta_margin", "gate_h", "gate_g",
                      "goal_tol", "primitive_turn", "total_turn", "grip_jitter",
                      "theta_jitter", "solver"},
                     "datagen");
  detail::maybe(j, "episodes", c.episodes);
  detail::maybe(j, "max_steps", c.max_steps);
  detail::maybe(j, "H", c.H);
  detail::maybe(j, "retry_cap", c.retry_cap);
  detail::maybe(j, "greedy_budget", c.greedy_budget);
  detail::maybe(j, "reopt_budget", c.reopt_budget);
  detail::maybe(j, "primitive_budget", c.primitive_budget);
  detail::maybe(j, "delta_margin", c.delta_margin);
  detail::maybe(j, "gate_h", c.gate_h);
  detail::maybe(j, "gate_g", c.gate_g);
  detail::maybe(j, "goal_tol", c.goal_tol);
  detail::maybe(j, "primitive_turn", c.primitive_turn);
  detail::maybe(j, "total_turn", c.total_turn);
  detail::maybe(j, "grip_jitter", c.grip_jitter);
  detail::maybe(j, "theta_jitter", c.theta_jitter);
  if (j.contains("solver")) apply_json(c.solver, j.at("solver"), "datagen.solver");
}

inline nlohmann::json to_json(const TaskGenConfig& c) {
  return {{"n", c.n},
          {"H", c.H},
          {"turn", c.turn},
          {"turn_jitter", c.turn_jitter},
          {"grip_jitter", c.grip_jitter},
          {"theta_jitter", c.theta_jitter},
          {"budget", c.budget},
          {"attempt_factor", c.attempt_factor},
          {"solver", to_json(c.solver)}};
}
inline void apply_json(TaskGenConfig& c, const nlohmann::json& j) {
  detail::check_keys(j,
                     {"n", "H", "turn", "turn_jitter", "grip_jitter", "theta_jitter",
                      "budget", "attempt_factor", "solver"},
                     "taskgen");
  detail::maybe(j, "n", c.n);
  detail::maybe(j, "H", c.H);
  detail::maybe(j, "turn", c.turn);
  detail::maybe(j, "turn_jitter", c.turn_jitter);
  detail::maybe(j, "grip_jitter", c.grip_jitter);
  detail::maybe(j, "theta_jitter", c.theta_jitter);
  detail::maybe(j, "budget", c.budget);
  detail::maybe(j, "attempt_factor", c.attempt_factor);
  if (j.contains("solver")) apply_json(c.solver, j.at("solver"), "taskgen.solver");
}

// ---- models ----
struct ModelConfig {
  int H = 8;                   // trajectory horizon of both models
  TemporalUNetSpec task_unet;  // in_channels is derived from the layout
  TemporalUNetSpec joint_unet;
  ContactHeadSpec head;
  CFGConfig cfg;
  double lr = 1e-3;
  int task_epochs = 40;
  int joint_epochs = 40;
  int batch = 32;
};

inline nlohmann::json to_json(const TemporalUNetSpec& s) {
  return {{"base_width", s.base_width},
          {"mults", s.mults},
          {"kernel", s.kernel},
          {"emb_dim", s.emb_dim}};
}
inline void apply_json(TemporalUNetSpec& s, const nlohmann::json& j, const char* ctx) {
  detail::check_keys(j, {"base_width", "mults", "kernel", "emb_dim"}, ctx);
  detail::maybe(j, "base_width", s.base_width);
  detail::maybe(j, "mults", s.mults);
  detail::maybe(j, "kernel", s.kernel);
  detail::maybe(j, "emb_dim", s.emb_dim);
}

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"H", c.H},
          {"task_unet", to_json(c.task_unet)},
          {"joint_unet", to_json(c.joint_unet)},
          {"head_hidden", c.head.hidden},
          {"cfg_w", c.cfg.w},
          {"cfg_p_drop", c.cfg.p_drop},
          {"lr", c.lr},
          {"task_epochs", c.task_epochs},
          {"joint_epochs", c.joint_epochs},
          {"batch", c.batch}};
}
inline void apply_json(ModelConfig& c, const nlohmann::json& j) {
  detail::check_keys(j,
                     {"H", "task_unet", "joint_unet", "head_hidden", "cfg_w", "cfg_p_drop",
                      "lr", "task_epochs", "joint_epochs", "batch"},
                     "models");
  detail::maybe(j, "H", c.H);
  if (j.contains("task_unet")) apply_json(c.task_unet, j.at("task_unet"), "models.task_unet");
  if (j.contains("joint_unet"))
    apply_json(c.joint_unet, j.at("joint_unet"), "models.joint_unet");
  detail::maybe(j, "head_hidden", c.head.hidden);
  detail::maybe(j, "cfg_w", c.cfg.w);
  detail::maybe(j, "cfg_p_drop", c.cfg.p_drop);
  detail::maybe(j, "lr", c.lr);
  detail::maybe(j, "task_epochs", c.task_epochs);
  detail::maybe(j, "joint_epochs", c.joint_epochs);
  detail::maybe(j, "batch", c.batch);
}

// ---- calibration ----
struct CalibrationConfig {
  int states = 500;         // held-out nominal states
  double percentile = 5.0;  // nearest-rank percentile of their scores
};

inline nlohmann::json to_json(const CalibrationConfig& c) {
  return {{"states", c.states}, {"percentile", c.percentile}};
}
inline void apply_json(CalibrationConfig& c, const nlohmann::json& j) {
  detail::check_keys(j, {"states", "percentile"}, "calibration");
  detail::maybe(j, "states", c.states);
  detail::maybe(j, "percentile", c.percentile);
}

// ---- the whole run ----
struct RunConfig {
  WorldConfig world;
  OODConfig ood;
  ProjectionConfig projection;
  EpisodeConfig episode;
  DataGenConfig datagen;
  TaskGenConfig taskgen;
  ModelConfig models;
  CalibrationConfig calibration;
};

inline nlohmann::json to_json(const RunConfig& c) {
  return {{"world", to_json(c.world)},
          {"ood", to_json(c.ood)},
          {"projection", to_json(c.projection)},
          {"episode", to_json(c.episode)},
          {"datagen", to_json(c.datagen)},
          {"taskgen", to_json(c.taskgen)},
          {"models", to_json(c.models)},
          {"calibration", to_json(c.calibration)}};
}
inline void apply_json(RunConfig& c, const nlohmann::json& j) {
  detail::check_keys(j,
                     {"world", "ood", "projection", "episode", "datagen", "taskgen",
                      "models", "calibration"},
                     "config");
  if (j.contains("world")) apply_json(c.world, j.at("world"));
  if (j.contains("ood")) apply_json(c.ood, j.at("ood"));
  if (j.contains("projection")) apply_json(c.projection, j.at("projection"));
  if (j.contains("episode")) apply_json(c.episode, j.at("episode"));
  if (j.contains("datagen")) apply_json(c.datagen, j.at("datagen"));
  if (j.contains("taskgen")) apply_json(c.taskgen, j.at("taskgen"));
  if (j.contains("models")) apply_json(c.models, j.at("models"));
  if (j.contains("calibration")) apply_json(c.calibration, j.at("calibration"));
}

// Parse a config file over the defaults. Missing file is an IO error; bad
// JSON or unknown keys are usage errors.
inline RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config: " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  apply_json(c, j);
  return c;
}

}  // namespace recdiff
