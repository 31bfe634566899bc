// Command-line front end: data generation, training, calibration, episode
// runs, aggregation, and plotting for the valve-turning recovery pipeline.
// Exit codes: 0 success, 1 usage problems, 2 runtime failures.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "recdiff/io/binary.hpp"
#include "recdiff/io/config.hpp"
#include "recdiff/io/csv.hpp"
#include "recdiff/io/jsonl.hpp"
#include "recdiff/io/svg.hpp"
#include "recdiff/models/embedding.hpp"
#include "recdiff/models/train.hpp"
#include "recdiff/recovery/datagen.hpp"
#include "recdiff/recovery/episode.hpp"
#include "recdiff/recovery/taskgen.hpp"

namespace {

using namespace recdiff;

constexpr const char* kBuildId = "recdiff-0.1.0";

struct GlobalOpts {
  std::string config_path;
  std::string out_dir = ".";
  int threads = 1;
};

RunConfig load_config(const GlobalOpts& g) {
  if (g.config_path.empty()) return RunConfig{};
  return load_run_config(g.config_path);
}

std::string join_out(const GlobalOpts& g, const std::string& name) {
  return (std::filesystem::path(g.out_dir) / name).string();
}

void ensure_out(const GlobalOpts& g) {
  std::filesystem::create_directories(g.out_dir);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double read_pmin_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open: " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception&) {
    throw IoError("threshold file is not valid JSON: " + path);
  }
  return detail::jget<double>(j, "p_min");
}

// Applies --pmin / --pmin-file on top of the configured detection floor.
void apply_pmin_overrides(OODConfig& oc, double pmin_flag, const std::string& pmin_file) {
  if (!pmin_file.empty()) oc.p_min = read_pmin_file(pmin_file);
  if (std::isfinite(pmin_flag)) oc.p_min = pmin_flag;
}

// ---- gen-task-data ----

struct GenTaskOpts {
  std::uint64_t seed = 0;
  int n = 0;  // 0 keeps the configured corpus size
  std::string name = "task_data.bin";
};

void cmd_gen_task(const GlobalOpts& g, const GenTaskOpts& o) {
  const RunConfig rc = load_config(g);
  TaskGenConfig tc = rc.taskgen;
  if (o.n > 0) tc.n = o.n;
  const TaskGenResult res = gen_task_data(rc.world, tc, o.seed);
  if (res.trajs.empty())
    throw ContractError("no task trajectories converged; raise the budget");

  DatasetFile ds;
  ds.H = tc.H;
  ds.d_s = rc.world.d_s();
  ds.d_u = rc.world.d_u();
  ds.n_f = 0;
  ds.norm = Normalizer::fit(res.trajs);
  ds.provenance = {{"tool", "gen-task-data"},
                   {"seed", o.seed},
                   {"attempts", res.attempts},
                   {"solved", res.solved}};
  ds.trajs = res.trajs;
  ensure_out(g);
  const std::string path = join_out(g, o.name);
  write_dataset(path, ds);
  std::cout << "wrote " << path << ": " << res.solved << " trajectories from "
            << res.attempts << " attempts\n";
}

// ---- training ----

struct TrainOpts {
  std::string data;
  std::uint64_t seed = 0;
  int epochs = 0;  // 0 keeps the configured count
  int batch = 0;
  std::string name;
};

FitResult fit_and_report(DiffusionModel& m, const std::vector<std::vector<float>>& corpus,
                         int epochs, int batch, Rng& rng) {
  FitConfig fc;
  fc.epochs = epochs;
  fc.batch = batch;
  fc.log_every = std::max(1, epochs / 10);
  return fit_model(m, corpus, fc, rng, [](int epoch, float loss) {
    std::cout << "epoch " << epoch << ": loss " << loss << "\n";
  });
}

void cmd_train_task(const GlobalOpts& g, const TrainOpts& o) {
  const RunConfig rc = load_config(g);
  const DatasetFile ds = read_dataset(o.data);
  if (ds.n_f != 0)
    throw UsageError("expected a task dataset without contact modes: " + o.data);
  const TrajLayout lay{ds.H, ds.d_s, ds.d_u};

  Rng rng(o.seed);
  DiffusionModel m = DiffusionModel::make_task(lay, default_schedule(), ds.norm,
                                               rc.models.task_unet, rng, rc.models.lr);
  std::vector<std::vector<float>> corpus;
  corpus.reserve(ds.trajs.size());
  for (const Trajectory& tr : ds.trajs) corpus.push_back(m.normalized_flat(tr));

  const int epochs = o.epochs > 0 ? o.epochs : rc.models.task_epochs;
  const int batch = o.batch > 0 ? o.batch : rc.models.batch;
  const FitResult fr = fit_and_report(m, corpus, epochs, batch, rng);

  ensure_out(g);
  const std::string name = o.name.empty() ? "task_model.ckpt" : o.name;
  const std::string path = join_out(g, name);
  write_checkpoint(path, m, o.seed);
  std::cout << "wrote " << path << ": " << m.param_count() << " parameters, final loss "
            << fr.final_loss << "\n";
}

void cmd_train_recovery(const GlobalOpts& g, const TrainOpts& o) {
  const RunConfig rc = load_config(g);
  const DatasetFile ds = read_dataset(o.data);
  if (ds.n_f < 1)
    throw UsageError("expected a recovery dataset with contact modes: " + o.data);
  const TrajLayout lay{ds.H, ds.d_s, ds.d_u};

  Rng rng(o.seed);
  DiffusionModel m = DiffusionModel::make_joint(lay, ds.n_f, default_schedule(), ds.norm,
                                                rc.models.joint_unet, rc.models.head,
                                                rc.models.cfg, rng, rc.models.lr);
  std::vector<std::vector<float>> corpus;
  corpus.reserve(ds.trajs.size());
  for (size_t i = 0; i < ds.trajs.size(); ++i) {
    std::vector<float> x = m.normalized_flat(ds.trajs[i]);
    for (int v : ds.modes[i]) x.push_back(mode_encode(v));
    corpus.push_back(std::move(x));
  }

  const int epochs = o.epochs > 0 ? o.epochs : rc.models.joint_epochs;
  const int batch = o.batch > 0 ? o.batch : rc.models.batch;
  const FitResult fr = fit_and_report(m, corpus, epochs, batch, rng);

  ensure_out(g);
  const std::string name = o.name.empty() ? "recovery_model.ckpt" : o.name;
  const std::string path = join_out(g, name);
  write_checkpoint(path, m, o.seed);
  std::cout << "wrote " << path << ": " << m.param_count() << " parameters, final loss "
            << fr.final_loss << "\n";
}

// ---- calibrate-pmin ----

struct CalibrateOpts {
  std::string model;
  std::uint64_t seed = 0;
  int states = 0;
  double percentile = 0.0;
  std::string name = "pmin.json";
};

void cmd_calibrate(const GlobalOpts& g, const CalibrateOpts& o) {
  const RunConfig rc = load_config(g);
  const DiffusionModel m = read_checkpoint(o.model);
  if (m.has_head()) throw UsageError("calibration needs the task model checkpoint");

  const int n = o.states > 0 ? o.states : rc.calibration.states;
  const double pct = o.percentile > 0.0 ? o.percentile : rc.calibration.percentile;
  const std::vector<State> states = nominal_states(
      rc.world, n, rc.episode.grip_jitter, rc.episode.theta_jitter, o.seed);
  Rng rng = Rng(o.seed).split(1);
  const double p_min = calibrate_pmin(m, states, rc.ood, rng, pct);

  ensure_out(g);
  const std::string path = join_out(g, o.name);
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << nlohmann::json{{"p_min", p_min},
                       {"states", n},
                       {"percentile", pct},
                       {"seed", o.seed}}
            .dump(2)
     << "\n";
  if (!os) throw IoError("write failed: " + path);
  std::cout << "p_min " << p_min << " (" << pct << "th percentile of " << n
            << " nominal states) -> " << path << "\n";
}

// ---- gen-recovery-data ----

struct GenRecoveryOpts {
  std::string model;
  std::uint64_t seed = 0;
  int episodes = 0;
  double pmin = std::numeric_limits<double>::quiet_NaN();
  std::string pmin_file;
  std::string name = "recovery_data.bin";
};

void cmd_gen_recovery(const GlobalOpts& g, const GenRecoveryOpts& o) {
  const RunConfig rc = load_config(g);
  const DiffusionModel m = read_checkpoint(o.model);
  if (m.has_head()) throw UsageError("data generation needs the task model checkpoint");

  DataGenConfig gc = rc.datagen;
  if (o.episodes > 0) gc.episodes = o.episodes;
  OODConfig oc = rc.ood;
  apply_pmin_overrides(oc, o.pmin, o.pmin_file);

  const RecoveryDataset rd = gen_recovery_data(m, rc.world, oc, rc.projection, gc, o.seed);
  if (rd.pairs.empty())
    throw ContractError("no recovery pairs stored (" + std::to_string(rd.ood_events) +
                        " events, " + std::to_string(rd.attempts) + " attempts, " +
                        std::to_string(rd.gated_attempts) +
                        " gated); check the detection floor and budgets");

  DatasetFile ds;
  ds.H = gc.H;
  ds.d_s = rc.world.d_s();
  ds.d_u = rc.world.d_u();
  ds.n_f = rc.world.n_f;
  ds.provenance = {{"tool", "gen-recovery-data"},
                   {"seed", o.seed},
                   {"episodes", rd.episodes},
                   {"ood_events", rd.ood_events},
                   {"attempts", rd.attempts},
                   {"gated_attempts", rd.gated_attempts},
                   {"plan_time_s", rd.plan_time_s}};
  ds.trajs.reserve(rd.pairs.size());
  ds.modes.reserve(rd.pairs.size());
  for (const RecoveryPair& p : rd.pairs) {
    ds.trajs.push_back(p.traj);
    ds.modes.push_back(p.mode);
  }
  ds.norm = Normalizer::fit(ds.trajs);

  ensure_out(g);
  const std::string path = join_out(g, o.name);
  write_dataset(path, ds);
  std::cout << "wrote " << path << ": " << ds.trajs.size() << " pairs from "
            << rd.ood_events << " events, " << rd.gated_attempts << "/" << rd.attempts
            << " attempts kept\n";
}

// ---- run-episodes ----

struct RunEpisodesOpts {
  std::string model;
  std::string joint;
  std::string mode = "greedy";
  int episodes = 50;
  std::uint64_t seed = 0;
  int max_steps = 0;  // 0 keeps the configured cap
  double pmin = std::numeric_limits<double>::quiet_NaN();
  std::string pmin_file;
  std::string name;
};

void cmd_run_episodes(const GlobalOpts& g, const RunEpisodesOpts& o) {
  RunConfig rc = load_config(g);
  const RecoveryMethod method = method_from_name(o.mode);
  if (o.max_steps > 0) rc.episode.max_steps = o.max_steps;
  apply_pmin_overrides(rc.ood, o.pmin, o.pmin_file);

  const DiffusionModel m = read_checkpoint(o.model);
  if (m.has_head()) throw UsageError("episodes need the task model checkpoint");
  std::optional<DiffusionModel> jm;
  const DiffusionModel* jp = nullptr;
  if (method == RecoveryMethod::kDistilled) {
    if (o.joint.empty())
      throw UsageError("--mode distilled needs --joint with the recovery model");
    jm = read_checkpoint(o.joint);
    if (!jm->has_head())
      throw UsageError("--joint must name a joint trajectory/mode checkpoint");
    jp = &*jm;
  }

  const auto t0 = std::chrono::steady_clock::now();
  std::vector<EpisodeRecord> records;
  if (o.episodes > 0)
    records = run_episodes(m, jp, rc.world, method, o.episodes, o.seed, rc.ood,
                           rc.projection, rc.episode, g.threads);
  else if (o.episodes < 0)
    throw UsageError("--episodes must be >= 0");

  ensure_out(g);
  const std::string stem =
      o.name.empty() ? std::string("episodes-") + method_name(method) : o.name;
  const std::string jsonl = join_out(g, stem + ".jsonl");
  write_episodes_jsonl(jsonl, records);

  RunManifest man;
  man.build_id = kBuildId;
  man.config = to_json(rc);
  man.seed = o.seed;
  man.method = method_name(method);
  man.episodes = o.episodes;
  man.wall_seconds = seconds_since(t0);
  write_manifest(manifest_path_for(jsonl), man);

  int events = 0, successes = 0;
  for (const EpisodeRecord& r : records)
    for (const RecoverySpan& s : r.spans) {
      ++events;
      successes += s.success ? 1 : 0;
    }
  std::cout << "wrote " << jsonl << ": " << records.size() << " episodes, " << events
            << " recovery events, " << successes << " recovered\n";
}

// ---- eval ----

struct EvalOpts {
  std::vector<std::string> inputs;
  bool force = false;
  bool no_timing = false;
  bool traces = false;
};

void cmd_eval(const GlobalOpts& g, const EvalOpts& o) {
  std::vector<EpisodeRecord> all;
  std::optional<nlohmann::json> first_config;
  std::string first_path;
  for (const std::string& path : o.inputs) {
    const RunManifest man = read_manifest(manifest_path_for(path));
    if (!first_config) {
      first_config = man.config;
      first_path = path;
    } else if (!same_run_config(*first_config, man.config) && !o.force) {
      throw UsageError("mixed run configurations: " + first_path + " is " +
                       config_fingerprint(*first_config) + " but " + path + " is " +
                       config_fingerprint(man.config) + "; pass --force to aggregate");
    }
    const std::vector<EpisodeRecord> recs = read_episodes_jsonl(path);
    all.insert(all.end(), recs.begin(), recs.end());
  }

  std::vector<MethodSummary> sums;
  for (const RecoveryMethod method : {RecoveryMethod::kNoRecovery, RecoveryMethod::kGreedy,
                                      RecoveryMethod::kDistilled}) {
    std::vector<EpisodeRecord> group;
    for (const EpisodeRecord& r : all)
      if (r.method == method) group.push_back(r);
    if (!group.empty()) sums.push_back(compute_metrics(group));
  }

  ensure_out(g);
  const std::string csv_path = join_out(g, "metrics.csv");
  write_metrics_csv(csv_path, sums, !o.no_timing);
  std::cout << "wrote " << csv_path << ": " << sums.size() << " method rows from "
            << all.size() << " episodes\n";

  if (o.traces) {
    CsvTable trace;
    trace.header = {"series", "idx", "p"};
    size_t series_count = 0;
    for (const EpisodeRecord& r : all) {
      for (size_t k = 0; k < r.spans.size() && series_count < 8; ++k) {
        const std::string label = std::string(method_name(r.method)) + "-ep" +
                                  std::to_string(r.index) + "-s" + std::to_string(k);
        const RecoverySpan& sp = r.spans[k];
        for (size_t i = 0; i < sp.p_trace.size(); ++i)
          trace.rows.push_back(
              {label, detail::fmt_int(static_cast<long long>(i)),
               detail::fmt_double(sp.p_trace[i])});
        ++series_count;
      }
    }
    const std::string trace_path = join_out(g, "likelihood_trace.csv");
    write_csv(trace_path, trace);

    CsvTable angle;
    angle.header = {"method", "episode", "step", "theta", "in_recovery", "goal"};
    for (const EpisodeRecord& r : all)
      for (size_t i = 0; i < r.step_log.size(); ++i)
        angle.rows.push_back({method_name(r.method), detail::fmt_int(r.index),
                              detail::fmt_int(static_cast<long long>(i)),
                              detail::fmt_double(r.step_log[i].theta),
                              r.step_log[i].in_recovery ? "1" : "0",
                              detail::fmt_double(r.theta_goal)});
    const std::string angle_path = join_out(g, "episode_angle.csv");
    write_csv(angle_path, angle);
    std::cout << "wrote " << trace_path << " and " << angle_path << "\n";
  }
}

// ---- plot ----

struct PlotOpts {
  std::string kind;
  std::string in;
  std::string name;
  double threshold = 0.0;
  int episode = -1;
  std::string method;
};

void cmd_plot(const GlobalOpts& g, const PlotOpts& o) {
  std::string svg;
  std::string default_name;
  if (o.kind == "task-metric-bars") {
    const std::string in = o.in.empty() ? join_out(g, "metrics.csv") : o.in;
    const std::vector<MethodSummary> sums = read_metrics_csv(in);
    std::vector<BarDatum> bars;
    for (const MethodSummary& s : sums)
      bars.push_back({method_name(s.method), s.task_metric_mean, s.task_metric_ci95});
    svg = render_bars_svg(bars, "final angle error by method", "|theta - goal| [rad]");
    default_name = "task_metric_bars.svg";
  } else if (o.kind == "likelihood-trace") {
    const std::string in = o.in.empty() ? join_out(g, "likelihood_trace.csv") : o.in;
    const CsvTable t = read_csv(in);
    if (t.header != std::vector<std::string>{"series", "idx", "p"})
      throw IoError("unexpected trace header in " + in);
    std::vector<TraceSeries> series;
    for (const auto& row : t.rows) {
      if (series.empty() || series.back().label != row[0]) {
        TraceSeries ts;
        ts.label = row[0];
        series.push_back(ts);
      }
      series.back().values.push_back(detail::parse_double(row[2]));
    }
    svg = render_trace_svg(series, o.threshold, "state likelihood across recovery attempts",
                           "estimated log-likelihood");
    default_name = "likelihood_trace.svg";
  } else if (o.kind == "episode-angle") {
    const std::string in = o.in.empty() ? join_out(g, "episode_angle.csv") : o.in;
    const CsvTable t = read_csv(in);
    if (t.header !=
        std::vector<std::string>{"method", "episode", "step", "theta", "in_recovery", "goal"})
      throw IoError("unexpected angle header in " + in);
    if (t.rows.empty()) throw IoError("no episodes in " + in);
    const std::string method = o.method.empty() ? t.rows.front()[0] : o.method;
    std::string episode;
    for (const auto& row : t.rows)
      if (row[0] == method && (o.episode < 0 || row[1] == std::to_string(o.episode))) {
        episode = row[1];
        break;
      }
    if (episode.empty()) throw IoError("episode not found in " + in);
    AngleSeries a;
    for (const auto& row : t.rows)
      if (row[0] == method && row[1] == episode) {
        a.theta.push_back(detail::parse_double(row[3]));
        a.in_recovery.push_back(row[4] == "1");
        a.goal = detail::parse_double(row[5]);
      }
    svg = render_angle_svg(a, method + " episode " + episode);
    default_name = "episode_angle.svg";
  } else {
    throw UsageError("unknown plot kind: " + o.kind);
  }

  ensure_out(g);
  const std::string path = join_out(g, o.name.empty() ? default_name : o.name);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << svg;
  if (!os) throw IoError("write failed: " + path);
  std::cout << "wrote " << path << "\n";
}

// ---- bench-planning ----

struct BenchOpts {
  std::string model;
  std::string joint;
  int probes = 20;
  std::uint64_t seed = 0;
  std::string name = "bench.csv";
};

void cmd_bench(const GlobalOpts& g, const BenchOpts& o) {
  const RunConfig rc = load_config(g);
  if (o.probes < 1) throw UsageError("--probes must be >= 1");
  const DiffusionModel m = read_checkpoint(o.model);
  if (m.has_head()) throw UsageError("benchmark needs the task model checkpoint");
  const DiffusionModel jm = read_checkpoint(o.joint);
  if (!jm.has_head())
    throw UsageError("--joint must name a joint trajectory/mode checkpoint");

  WorldConfig margin_w = rc.world;
  margin_w.delta += rc.episode.delta_margin;
  const std::vector<ContactMode> C_R = one_finger_reset_modes(rc.world.n_f);

  // Probe states: nominal draws pushed off-distribution by rotating the valve
  // under a fixed grip, the same displacement pattern external kicks produce.
  std::vector<State> probes =
      nominal_states(rc.world, o.probes, rc.episode.grip_jitter, rc.episode.theta_jitter,
                     o.seed);
  for (State& s : probes) s.theta += 0.5;

  CsvTable t;
  t.header = {"probe", "greedy_s", "distilled_s"};
  double greedy_total = 0.0, distilled_total = 0.0;
  int greedy_ok = 0, distilled_ok = 0;
  for (size_t i = 0; i < probes.size(); ++i) {
    Rng rg = Rng(o.seed).split(2 * i);
    auto t0 = std::chrono::steady_clock::now();
    const auto pg = recdiff::detail::plan_recovery(m, &jm, RecoveryMethod::kGreedy,
                                                   margin_w, probes[i], C_R, rc.ood,
                                                   rc.projection, rc.episode, rg);
    const double gs = seconds_since(t0);
    greedy_ok += pg ? 1 : 0;

    Rng rd = Rng(o.seed).split(2 * i + 1);
    t0 = std::chrono::steady_clock::now();
    const auto pd = recdiff::detail::plan_recovery(m, &jm, RecoveryMethod::kDistilled,
                                                   margin_w, probes[i], C_R, rc.ood,
                                                   rc.projection, rc.episode, rd);
    const double ds = seconds_since(t0);
    distilled_ok += pd ? 1 : 0;

    greedy_total += gs;
    distilled_total += ds;
    t.rows.push_back({detail::fmt_int(static_cast<long long>(i)), detail::fmt_double(gs),
                      detail::fmt_double(ds)});
  }

  ensure_out(g);
  const std::string path = join_out(g, o.name);
  write_csv(path, t);
  const double ratio = distilled_total > 0.0 ? greedy_total / distilled_total : 0.0;
  std::cout << "wrote " << path << ": greedy " << greedy_total / probes.size()
            << " s/probe (" << greedy_ok << " planned), distilled "
            << distilled_total / probes.size() << " s/probe (" << distilled_ok
            << " planned), speedup " << ratio << "x\n";
}

}  // namespace

int main(int argc, char** argv) {
  GlobalOpts g;
  GenTaskOpts gen_task;
  TrainOpts train_task, train_recovery;
  CalibrateOpts calibrate;
  GenRecoveryOpts gen_recovery;
  RunEpisodesOpts run_eps;
  EvalOpts eval;
  PlotOpts plot;
  BenchOpts bench;

  CLI::App app{"failure detection and contact-mode recovery for a planar valve world"};
  app.fallthrough();
  app.require_subcommand(1);
  app.add_option("--config", g.config_path, "JSON run configuration (defaults built in)");
  app.add_option("--out", g.out_dir, "output directory (default: current)");
  app.add_option("--threads", g.threads, "worker threads for episode runs")
      ->check(CLI::PositiveNumber);

  auto* c1 = app.add_subcommand("gen-task-data", "solve nominal turns into a task corpus");
  c1->add_option("--seed", gen_task.seed, "corpus seed");
  c1->add_option("--n", gen_task.n, "trajectories to collect");
  c1->add_option("--name", gen_task.name, "output file name");
  c1->callback([&] { cmd_gen_task(g, gen_task); });

  auto* c2 = app.add_subcommand("train-task-model", "train the trajectory denoiser");
  c2->add_option("--data", train_task.data, "task dataset path")->required();
  c2->add_option("--seed", train_task.seed, "init and shuffle seed");
  c2->add_option("--epochs", train_task.epochs, "training epochs");
  c2->add_option("--batch", train_task.batch, "batch size");
  c2->add_option("--name", train_task.name, "output checkpoint name");
  c2->callback([&] { cmd_train_task(g, train_task); });

  auto* c3 = app.add_subcommand("calibrate-pmin",
                                "set the detection floor from nominal states");
  c3->add_option("--model", calibrate.model, "task checkpoint path")->required();
  c3->add_option("--seed", calibrate.seed, "state and scoring seed");
  c3->add_option("--states", calibrate.states, "held-out states to score");
  c3->add_option("--percentile", calibrate.percentile, "nearest-rank percentile");
  c3->add_option("--name", calibrate.name, "output JSON name");
  c3->callback([&] { cmd_calibrate(g, calibrate); });

  auto* c4 = app.add_subcommand("gen-recovery-data",
                                "collect trajectory/mode pairs from recovery episodes");
  c4->add_option("--model", gen_recovery.model, "task checkpoint path")->required();
  c4->add_option("--seed", gen_recovery.seed, "episode seed");
  c4->add_option("--episodes", gen_recovery.episodes, "episodes to run");
  c4->add_option("--pmin", gen_recovery.pmin, "detection floor override");
  c4->add_option("--pmin-file", gen_recovery.pmin_file, "calibration JSON with p_min");
  c4->add_option("--name", gen_recovery.name, "output file name");
  c4->callback([&] { cmd_gen_recovery(g, gen_recovery); });

  auto* c5 = app.add_subcommand("train-recovery-model",
                                "train the joint trajectory/mode denoiser");
  c5->add_option("--data", train_recovery.data, "recovery dataset path")->required();
  c5->add_option("--seed", train_recovery.seed, "init and shuffle seed");
  c5->add_option("--epochs", train_recovery.epochs, "training epochs");
  c5->add_option("--batch", train_recovery.batch, "batch size");
  c5->add_option("--name", train_recovery.name, "output checkpoint name");
  c5->callback([&] { cmd_train_recovery(g, train_recovery); });

  auto* c6 = app.add_subcommand("run-episodes", "run perturbed valve-turning episodes");
  c6->add_option("--model", run_eps.model, "task checkpoint path")->required();
  c6->add_option("--joint", run_eps.joint, "joint checkpoint (distilled mode)");
  c6->add_option("--mode", run_eps.mode, "recovery method")
      ->check(CLI::IsMember({"no-recovery", "greedy", "distilled"}));
  c6->add_option("--episodes", run_eps.episodes, "episode count (0 writes empty output)");
  c6->add_option("--seed", run_eps.seed, "master seed");
  c6->add_option("--max-steps", run_eps.max_steps, "environment step cap")
      ->check(CLI::IsMember({50, 100}));
  c6->add_option("--pmin", run_eps.pmin, "detection floor override");
  c6->add_option("--pmin-file", run_eps.pmin_file, "calibration JSON with p_min");
  c6->add_option("--name", run_eps.name, "output stem (default episodes-<mode>)");
  c6->callback([&] { cmd_run_episodes(g, run_eps); });

  auto* c7 = app.add_subcommand("eval", "aggregate episode logs into a metrics CSV");
  c7->add_option("inputs", eval.inputs, "episode JSONL paths")->required();
  c7->add_flag("--force", eval.force, "aggregate across differing run configurations");
  c7->add_flag("--no-timing", eval.no_timing, "zero the wall-clock column");
  c7->add_flag("--traces", eval.traces, "also write likelihood and angle CSVs");
  c7->callback([&] { cmd_eval(g, eval); });

  auto* c8 = app.add_subcommand("plot", "render a CSV as a standalone SVG");
  c8->add_option("--kind", plot.kind, "plot type")
      ->required()
      ->check(CLI::IsMember({"task-metric-bars", "likelihood-trace", "episode-angle"}));
  c8->add_option("--in", plot.in, "input CSV (defaults to the eval output)");
  c8->add_option("--name", plot.name, "output SVG name");
  c8->add_option("--threshold", plot.threshold, "detection floor line for traces");
  c8->add_option("--episode", plot.episode, "episode index for angle plots");
  c8->add_option("--method", plot.method, "method filter for angle plots");
  c8->callback([&] { cmd_plot(g, plot); });

  auto* c9 = app.add_subcommand("bench-planning",
                                "paired wall-clock of greedy vs distilled planning");
  c9->add_option("--model", bench.model, "task checkpoint path")->required();
  c9->add_option("--joint", bench.joint, "joint checkpoint path")->required();
  c9->add_option("--probes", bench.probes, "off-distribution probe states");
  c9->add_option("--seed", bench.seed, "probe seed");
  c9->add_option("--name", bench.name, "output CSV name");
  c9->callback([&] { cmd_bench(g, bench); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  } catch (const recdiff::UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
