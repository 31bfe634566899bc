#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "recdiff/core/errors.hpp"
#include "recdiff/recovery/episode.hpp"

namespace recdiff {

// Episode logs are JSON Lines: one compact record per line, LF-terminated,
// so runs can be concatenated and streamed. Next to each log sits a manifest
// naming the exact configuration, seed, and method that produced it.

namespace detail {

template <class T>
T jget(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) throw IoError(std::string("missing key '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw IoError(std::string("bad value for key '") + key + "'");
  }
}

}  // namespace detail

inline nlohmann::json span_to_json(const RecoverySpan& s) {
  return {{"start_step", s.start_step}, {"end_step", s.end_step},
          {"attempts", s.attempts},     {"success", s.success},
          {"timeout", s.timeout},       {"p_trace", s.p_trace}};
}

inline RecoverySpan span_from_json(const nlohmann::json& j) {
  RecoverySpan s;
  s.start_step = detail::jget<int>(j, "start_step");
  s.end_step = detail::jget<int>(j, "end_step");
  s.attempts = detail::jget<int>(j, "attempts");
  s.success = detail::jget<bool>(j, "success");
  s.timeout = detail::jget<bool>(j, "timeout");
  s.p_trace = detail::jget<std::vector<double>>(j, "p_trace");
  return s;
}

inline nlohmann::json record_to_json(const EpisodeRecord& r) {
  nlohmann::json spans = nlohmann::json::array();
  for (const RecoverySpan& s : r.spans) spans.push_back(span_to_json(s));
  // Step entries are packed as [theta, kick, dtheta, in_recovery] rows.
  nlohmann::json steps = nlohmann::json::array();
  for (const StepLogEntry& e : r.step_log)
    steps.push_back({e.theta, e.kick, e.dtheta, e.in_recovery ? 1 : 0});
  return {{"index", r.index},
          {"method", method_name(r.method)},
          {"seed", r.seed},
          {"steps", r.steps},
          {"theta0", r.theta0},
          {"theta_goal", r.theta_goal},
          {"theta_final", r.theta_final},
          {"task_metric", r.task_metric},
          {"reached_goal", r.reached_goal},
          {"spans", spans},
          {"step_log", steps},
          {"plan_time_s", r.plan_time_s},
          {"ood_checks", r.ood_checks},
          {"primitives", r.primitives}};
}

inline EpisodeRecord record_from_json(const nlohmann::json& j) {
  EpisodeRecord r;
  r.index = detail::jget<int>(j, "index");
  r.method = method_from_name(detail::jget<std::string>(j, "method"));
  r.seed = detail::jget<std::uint64_t>(j, "seed");
  r.steps = detail::jget<int>(j, "steps");
  r.theta0 = detail::jget<double>(j, "theta0");
  r.theta_goal = detail::jget<double>(j, "theta_goal");
  r.theta_final = detail::jget<double>(j, "theta_final");
  r.task_metric = detail::jget<double>(j, "task_metric");
  r.reached_goal = detail::jget<bool>(j, "reached_goal");
  if (!j.contains("spans") || !j.at("spans").is_array())
    throw IoError("missing key 'spans'");
  for (const auto& s : j.at("spans")) r.spans.push_back(span_from_json(s));
  if (!j.contains("step_log") || !j.at("step_log").is_array())
    throw IoError("missing key 'step_log'");
  for (const auto& e : j.at("step_log")) {
    if (!e.is_array() || e.size() != 4) throw IoError("bad step_log row");
    StepLogEntry le;
    le.theta = e.at(0).get<double>();
    le.kick = e.at(1).get<double>();
    le.dtheta = e.at(2).get<double>();
    le.in_recovery = e.at(3).get<int>() != 0;
    r.step_log.push_back(le);
  }
  r.plan_time_s = detail::jget<double>(j, "plan_time_s");
  r.ood_checks = detail::jget<int>(j, "ood_checks");
  r.primitives = detail::jget<int>(j, "primitives");
  return r;
}

inline void write_episodes_jsonl(const std::string& path,
                                 const std::vector<EpisodeRecord>& records) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  for (const EpisodeRecord& r : records) os << record_to_json(r).dump() << '\n';
  if (!os) throw IoError("write failed: " + path);
}

inline std::vector<EpisodeRecord> read_episodes_jsonl(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  std::vector<EpisodeRecord> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      throw IoError(path + ": line " + std::to_string(lineno) + " is not JSON");
    }
    out.push_back(record_from_json(j));
  }
  return out;
}

// ---- manifests ----

struct RunManifest {
  std::string build_id;  // identifies the producing binary
  nlohmann::json config = nlohmann::json::object();
  std::uint64_t seed = 0;
  std::string method;
  int episodes = 0;
  double wall_seconds = 0.0;
};

inline nlohmann::json to_json(const RunManifest& m) {
  return {{"build_id", m.build_id}, {"config", m.config},
          {"seed", m.seed},         {"method", m.method},
          {"episodes", m.episodes}, {"wall_seconds", m.wall_seconds}};
}

inline RunManifest manifest_from_json(const nlohmann::json& j) {
  RunManifest m;
  m.build_id = detail::jget<std::string>(j, "build_id");
  if (!j.contains("config") || !j.at("config").is_object())
    throw IoError("missing key 'config'");
  m.config = j.at("config");
  m.seed = detail::jget<std::uint64_t>(j, "seed");
  m.method = detail::jget<std::string>(j, "method");
  m.episodes = detail::jget<int>(j, "episodes");
  m.wall_seconds = detail::jget<double>(j, "wall_seconds");
  return m;
}

inline void write_manifest(const std::string& path, const RunManifest& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << to_json(m).dump(2) << '\n';
  if (!os) throw IoError("write failed: " + path);
}

inline RunManifest read_manifest(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception&) {
    throw IoError("manifest is not valid JSON: " + path);
  }
  return manifest_from_json(j);
}

inline std::string manifest_path_for(const std::string& jsonl_path) {
  const std::string suffix = ".jsonl";
  if (jsonl_path.size() > suffix.size() &&
      jsonl_path.compare(jsonl_path.size() - suffix.size(), suffix.size(), suffix) == 0)
    return jsonl_path.substr(0, jsonl_path.size() - suffix.size()) + ".manifest.json";
  return jsonl_path + ".manifest.json";
}

// Object keys serialize in sorted order, so the dump is canonical: equal
// dumps mean equal configurations.
inline bool same_run_config(const nlohmann::json& a, const nlohmann::json& b) {
  return a.dump() == b.dump();
}

// FNV-1a over the canonical dump; a short stable name for a configuration.
inline std::string config_fingerprint(const nlohmann::json& config) {
  const std::string s = config.dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  static const char* hex = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<size_t>(i)] = hex[h & 0xf];
    h >>= 4;
  }
  return out;
}

}  // namespace recdiff
