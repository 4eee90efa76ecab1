#pragma once

// Command-line front end: demo, train, eval and report subcommands.
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "canalrl/checkpoint.hpp"
#include "canalrl/config.hpp"
#include "canalrl/evaluation.hpp"
#include "canalrl/expert.hpp"
#include "canalrl/metrics.hpp"
#include "canalrl/sac.hpp"

namespace canalrl::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GlobalOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  bool verbose = false;
  std::vector<std::string> overrides;
};

// defaults < config file < --set overrides < dedicated flags such as --seed.
inline RunConfig load_run_config(const GlobalOptions& g) {
  RunConfig c;
  try {
    if (!g.config_path.empty()) apply_config_file(c, g.config_path);
    for (const auto& o : g.overrides) apply_override(c, o);
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  } catch (const ParseError& e) {
    throw UsageError(e.what());
  }
  if (g.seed) c.seed = *g.seed;
  try {
    c.validate();
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  return c;
}

inline void ensure_parent_dir(const std::string& path) {
  const std::filesystem::path parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
}

inline std::string join_path(const std::string& dir, const std::string& file) {
  return (std::filesystem::path(dir) / file).string();
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

inline ReplayBuffer expert_buffer_from(const DemonstrationSet& demos, std::size_t capacity) {
  ReplayBuffer buffer(std::max(capacity, demos.transition_count()));
  for (const auto& ep : demos.episodes)
    for (const auto& t : ep.transitions) buffer.push(t);
  return buffer;
}

// ---------------------------------------------------------------------------

struct DemoOptions {
  std::optional<int> episodes;
  std::string out;
};

inline int cmd_demo(const GlobalOptions& g, const DemoOptions& o, std::ostream& out, std::ostream& err) {
  const RunConfig c = load_run_config(g);
  const int episodes = o.episodes.value_or(c.demo_episodes);
  if (episodes < 1) throw UsageError("demo: --episodes must be at least 1");
  const std::string path = o.out.empty() ? join_path(effective_log_dir(c), "demos.tsv") : o.out;

  const CanalEnv env = make_env(c);
  DemonstrationSet demos;
  try {
    demos = generate_demonstrations(env, c.expert, c.reward, static_cast<std::size_t>(episodes), c.seed,
                                    anatomy_hash(c));
  } catch (const OracleFailure& e) {
    err << "demo: " << e.what() << '\n';
    return kExitFailure;
  }
  ensure_parent_dir(path);
  save_demonstrations(demos, path);
  out << "oracle success rate: " << demos.success_rate() << '\n'
      << "transitions: " << demos.transition_count() << '\n'
      << "anatomy hash: " << hex64(demos.anatomy_hash) << '\n'
      << "wrote " << path << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct TrainOptions {
  std::string demos;
  std::string out;
  std::string log;
  std::optional<int> episodes;
};

inline double tail_mean(const std::vector<EpisodeRecord>& log, std::size_t window) {
  if (log.empty()) return 0.0;
  const std::size_t n = std::min(window, log.size());
  double sum = 0.0;
  for (std::size_t i = log.size() - n; i < log.size(); ++i) sum += log[i].cumulative_reward;
  return sum / static_cast<double>(n);
}

inline std::string format_record(const EpisodeRecord& r) {
  std::ostringstream os;
  os << r.episode_index << '\t' << std::setprecision(17) << r.cumulative_reward << '\t' << (r.success ? 1 : 0) << '\t'
     << r.steps;
  return os.str();
}

inline std::vector<EpisodeRecord> read_reward_log(std::istream& is, const std::string& name = "reward log") {
  std::vector<EpisodeRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    EpisodeRecord r;
    int success = 0;
    if (!(ls >> r.episode_index >> r.cumulative_reward >> success >> r.steps)) {
      throw ParseError(name + ":" + std::to_string(line_no) + ": malformed reward log line");
    }
    r.success = success != 0;
    out.push_back(r);
  }
  return out;
}

inline int cmd_train(const GlobalOptions& g, const TrainOptions& o, std::ostream& out, std::ostream& err) {
  RunConfig c = load_run_config(g);
  if (o.episodes) {
    if (*o.episodes < 0) throw UsageError("train: --episodes must be non-negative");
    c.episodes = *o.episodes;
  }
  const std::string ckpt_path = o.out.empty() ? join_path(c.checkpoint_dir, "agent.ckpt") : o.out;
  const std::string log_path = o.log.empty() ? join_path(effective_log_dir(c), "reward_log.tsv") : o.log;

  const DemonstrationSet demos = load_demonstrations(o.demos);
  if (demos.anatomy_hash != anatomy_hash(c)) {
    err << "train: demonstration anatomy hash " << hex64(demos.anatomy_hash) << " does not match the configured anatomy "
        << hex64(anatomy_hash(c)) << "; regenerate the demonstrations with this config\n";
    return kExitFailure;
  }
  const ReplayBuffer expert = expert_buffer_from(demos, c.buffer_capacity);
  const CanalEnv env = make_env(c);

  std::mt19937_64 init_rng(c.seed ^ 0x1F2E3D4C5B6A7988ULL);
  const AgentNets nets = AgentNets::create(c.sac, init_rng);

  ensure_parent_dir(log_path);
  ensure_parent_dir(ckpt_path);
  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw std::runtime_error("cannot open reward log: " + log_path);

  TrainConfig tc{c.episodes, c.buffer_capacity, c.seed};
  std::vector<EpisodeRecord> records;
  auto on_episode = [&](const EpisodeRecord& r) {
    records.push_back(r);
    log << format_record(r) << '\n' << std::flush;
    if (g.verbose && (r.episode_index + 1) % 50 == 0) {
      out << "episode " << r.episode_index + 1 << "  mean reward (last 50) " << tail_mean(records, 50) << '\n';
    }
  };

  AgentCheckpoint ck;
  ck.config_hash = config_hash(c);
  try {
    TrainResult result = train(env, expert, nets, c.sac, tc, c.reward, on_episode);
    ck.nets = std::move(result.nets);
    ck.update_count = result.update_count;
  } catch (const TrainingDiverged& e) {
    ck.nets = e.snapshot();
    const std::string partial = ckpt_path + ".partial";
    save_checkpoint(ck, partial);
    err << "train: " << e.what() << "; network state at the failure saved to " << partial << '\n';
    return kExitFailure;
  }
  save_checkpoint(ck, ckpt_path);
  out << "episodes: " << records.size() << '\n'
      << "updates: " << ck.update_count << '\n'
      << "final moving-average reward (last 100): " << tail_mean(records, 100) << '\n'
      << "wrote " << ckpt_path << " and " << log_path << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct EvalOptions {
  std::string checkpoint;
  std::string policy = "agent";
  int episodes = 50;
  std::string mode = "deterministic";
  std::string out;
  std::string traces;
  std::string label;
};

inline int cmd_eval(const GlobalOptions& g, const EvalOptions& o, std::ostream& out, std::ostream& err) {
  const RunConfig c = load_run_config(g);
  if (o.episodes < 1) throw UsageError("eval: --episodes must be at least 1");
  const CanalEnv env = make_env(c);
  const ActionMode mode = o.mode == "stochastic" ? ActionMode::Stochastic : ActionMode::Deterministic;

  PolicyFn policy;
  std::string label = o.label;
  if (o.policy == "expert") {
    policy = expert_policy(env, c.expert);
    if (label.empty()) label = "expert";
  } else {
    if (o.checkpoint.empty()) throw UsageError("eval: --checkpoint is required for --policy agent");
    const AgentCheckpoint ck = load_checkpoint(o.checkpoint);
    if (ck.nets.obs_dim() != kObservationDim || ck.nets.action_dim() != kActionDim) {
      err << "eval: checkpoint networks expect " << ck.nets.obs_dim() << " observations and " << ck.nets.action_dim()
          << " actions; this environment has " << kObservationDim << " and " << kActionDim << '\n';
      return kExitFailure;
    }
    if (ck.config_hash != config_hash(c)) {
      err << "warning: checkpoint config hash " << hex64(ck.config_hash) << " differs from the current config "
          << hex64(config_hash(c)) << '\n';
    }
    policy = agent_policy(ck.nets.policy, mode);
    if (label.empty()) label = "agent";
  }

  const auto episodes = evaluate(env, policy, static_cast<std::size_t>(o.episodes), c.seed);
  const MetricsFile file = to_metrics_file(label, episodes);
  const std::string path = o.out.empty() ? join_path(effective_log_dir(c), "eval_" + label + ".tsv") : o.out;
  ensure_parent_dir(path);
  {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open report for writing: " + path);
    write_metrics_file(os, file);
  }
  if (!o.traces.empty()) {
    ensure_parent_dir(o.traces);
    std::ofstream ts(o.traces, std::ios::trunc);
    if (!ts) throw std::runtime_error("cannot open trace file for writing: " + o.traces);
    write_force_traces(ts, episodes);
  }

  const BatchSummary b = file.summary();
  out << "label: " << label << "  episodes: " << b.episodes << "  success rate: " << b.success_rate << '\n';
  auto row = [&](const char* name, const MetricSummary& m, const char* unit) {
    out << "  median " << name << " = " << report_format::fmt(m.median) << ' ' << unit
        << " (SD " << report_format::fmt(m.sd) << ")\n";
  };
  row("F_max", b.f_max, "N");
  row("F_i", b.f_i, "N s");
  row("F_FFT", b.f_fft, "");
  row("t_e", b.t_e, "s");
  out << "wrote " << path << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct ReportOptions {
  std::vector<std::string> runs;
  std::string out;
  std::string plot_data;
};

struct ComparisonTable {
  std::vector<std::string> labels;
  std::vector<BatchSummary> summaries;
};

// One row per metric, one column per run; cells read "median +/- sd [q1, q3]".
inline std::string format_cell(const MetricSummary& m) {
  using report_format::fmt;
  return fmt(m.median) + " +/- " + fmt(m.sd) + " [" + fmt(m.q1) + ", " + fmt(m.q3) + "]";
}

inline void write_comparison(std::ostream& os, const ComparisonTable& t) {
  using report_format::fmt;
  os << "metric";
  for (const auto& l : t.labels) os << '\t' << l;
  os << '\n';
  const std::pair<const char*, const MetricSummary BatchSummary::*> metrics[] = {
      {"F_max", &BatchSummary::f_max}, {"F_i", &BatchSummary::f_i}, {"F_FFT", &BatchSummary::f_fft},
      {"t_e", &BatchSummary::t_e}};
  for (const auto& [name, ptr] : metrics) {
    os << name;
    for (const auto& s : t.summaries) os << '\t' << format_cell(s.*ptr);
    os << '\n';
  }
  os << "# success_rate";
  for (const auto& s : t.summaries) os << '\t' << fmt(s.success_rate);
  os << '\n';
}

// Long format for plotting tools: label, metric, median, q1, q3, sd.
inline void write_plot_data(std::ostream& os, const ComparisonTable& t) {
  using report_format::fmt;
  os << "label\tmetric\tmedian\tq1\tq3\tsd\n";
  for (std::size_t i = 0; i < t.labels.size(); ++i) {
    const BatchSummary& b = t.summaries[i];
    for (const auto& [name, m] : {std::pair{"F_max", b.f_max}, std::pair{"F_i", b.f_i}, std::pair{"F_FFT", b.f_fft},
                                  std::pair{"t_e", b.t_e}}) {
      os << t.labels[i] << '\t' << name << '\t' << fmt(m.median) << '\t' << fmt(m.q1) << '\t' << fmt(m.q3) << '\t'
         << fmt(m.sd) << '\n';
    }
  }
}

inline int cmd_report(const GlobalOptions&, const ReportOptions& o, std::ostream& out, std::ostream&) {
  if (o.runs.empty()) throw UsageError("report: at least one --runs file is required");
  ComparisonTable table;
  for (const auto& path : o.runs) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open report: " + path);
    const MetricsFile f = read_metrics_file(is, path);
    table.labels.push_back(f.label.empty() ? path : f.label);
    table.summaries.push_back(f.summary());
  }
  if (o.out.empty()) {
    write_comparison(out, table);
  } else {
    ensure_parent_dir(o.out);
    std::ofstream os(o.out, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open table for writing: " + o.out);
    write_comparison(os, table);
    out << "wrote " << o.out << '\n';
  }
  if (!o.plot_data.empty()) {
    ensure_parent_dir(o.plot_data);
    std::ofstream os(o.plot_data, std::ios::trunc);
    write_plot_data(os, table);
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Soft actor-critic training and evaluation for simulated cervical canal passage", "canalrl"};
  app.require_subcommand(1);

  GlobalOptions g;
  std::uint64_t seed_value = 0;
  app.add_option("--config", g.config_path, "Run configuration file (section.key = value)")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed_value, "Overrides the configured seed");
  app.add_flag("--verbose", g.verbose, "Print progress");
  app.add_option("--set", g.overrides, "Override one config key, e.g. --set sac.episodes=300");

  DemoOptions demo;
  int demo_episodes = 0;
  auto* demo_cmd = app.add_subcommand("demo", "Generate expert demonstrations");
  auto* demo_eps = demo_cmd->add_option("--episodes", demo_episodes, "Number of demonstration episodes");
  demo_cmd->add_option("--out", demo.out, "Output demonstration file");

  TrainOptions trn;
  int train_episodes = 0;
  auto* train_cmd = app.add_subcommand("train", "Pretrain on demonstrations, then train by interaction");
  train_cmd->add_option("--demos", trn.demos, "Demonstration file from 'demo'")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out", trn.out, "Checkpoint path");
  train_cmd->add_option("--log", trn.log, "Per-episode reward log path");
  auto* train_eps = train_cmd->add_option("--episodes", train_episodes, "Overrides sac.episodes");

  EvalOptions ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint (or the expert) and write a metrics report");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Agent checkpoint");
  eval_cmd->add_option("--policy", ev.policy, "agent or expert")->check(CLI::IsMember({"agent", "expert"}));
  eval_cmd->add_option("--episodes", ev.episodes, "Number of evaluation episodes");
  eval_cmd->add_option("--mode", ev.mode, "deterministic or stochastic")
      ->check(CLI::IsMember({"deterministic", "stochastic"}));
  eval_cmd->add_option("--out", ev.out, "Metrics report path");
  eval_cmd->add_option("--traces", ev.traces, "Per-step force trace output");
  eval_cmd->add_option("--label", ev.label, "Run label stored in the report");

  ReportOptions rep;
  auto* report_cmd = app.add_subcommand("report", "Merge metrics reports into a comparison table");
  report_cmd->add_option("--runs", rep.runs, "Metrics report files")->required();
  report_cmd->add_option("--out", rep.out, "Comparison table path (stdout when omitted)");
  report_cmd->add_option("--plot-data", rep.plot_data, "Long-format summary for plotting");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "canalrl: " << e.what() << '\n';
    return kExitUsage;
  }
  if (seed_opt->count() > 0) g.seed = seed_value;
  if (demo_eps->count() > 0) demo.episodes = demo_episodes;
  if (train_eps->count() > 0) trn.episodes = train_episodes;

  try {
    if (demo_cmd->parsed()) return cmd_demo(g, demo, out, err);
    if (train_cmd->parsed()) return cmd_train(g, trn, out, err);
    if (eval_cmd->parsed()) return cmd_eval(g, ev, out, err);
    if (report_cmd->parsed()) return cmd_report(g, rep, out, err);
  } catch (const UsageError& e) {
    err << "canalrl: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "canalrl: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace canalrl::cli
