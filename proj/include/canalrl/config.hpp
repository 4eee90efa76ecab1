#pragma once

// Run configuration: flat "section.key = value" text, '#' starts a comment.
// Layering is defaults < config file < command-line overrides; every key has
// a default so an empty file is a valid configuration.

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "canalrl/canal_env.hpp"
#include "canalrl/errors.hpp"
#include "canalrl/expert.hpp"
#include "canalrl/reward.hpp"
#include "canalrl/sac.hpp"

namespace canalrl {

struct RunConfig {
  CanalAnatomy anatomy;
  EnvParams env;
  RewardConfig reward;
  SacHyperparams sac;
  int episodes = 1000;
  std::size_t buffer_capacity = 1'000'000;
  ExpertPolicyParams expert;
  int demo_episodes = 50;
  std::string checkpoint_dir = "checkpoints";
  std::string log_dir = "logs";
  std::uint64_t seed = 0;

  void validate() const {
    anatomy.validate();
    env.validate();
    reward.validate();
    sac.validate();
    expert.validate();
    detail::require(episodes >= 0, "RunConfig: episodes must be non-negative");
    detail::require(buffer_capacity > 0, "RunConfig: buffer capacity must be positive");
    detail::require(demo_episodes >= 1, "RunConfig: demo_episodes must be at least 1");
  }
};

namespace config_detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw InvalidArgument("config: '" + key + "' expects a number, got '" + v + "'");
  return out;
}

inline long long to_int(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw InvalidArgument("config: '" + key + "' expects an integer, got '" + v + "'");
  return out;
}

inline std::vector<double> to_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_double(key, trim(item)));
  return out;
}

inline std::string g17(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace config_detail

// Applies one key; throws InvalidArgument for unknown keys or bad values.
inline void apply_config_value(RunConfig& c, const std::string& key, const std::string& value) {
  using namespace config_detail;
  auto d = [&] { return to_double(key, value); };
  auto i = [&] { return to_int(key, value); };

  if (key == "seed") c.seed = static_cast<std::uint64_t>(i());
  // anatomy
  else if (key == "anatomy.flexion_angle_deg") c.anatomy.flexion_angle_deg = d();
  else if (key == "anatomy.canal_length_mm") c.anatomy.canal_length_mm = d();
  else if (key == "anatomy.canal_radius_mm") c.anatomy.canal_radius_mm = d();
  else if (key == "anatomy.checkpoint_fractions") c.anatomy.checkpoint_fractions = to_list(key, value);
  else if (key == "anatomy.trigger_radius_mm") c.anatomy.trigger_radius_mm = d();
  else if (key == "anatomy.instrument_radius_mm") c.env.instrument_radius_mm = d();
  else if (key == "anatomy.k_wall") c.env.k_wall = d();
  else if (key == "anatomy.force_cap") c.env.force_cap = d();
  else if (key == "anatomy.dt") c.env.dt = d();
  else if (key == "anatomy.episode_cap_s" || key == "sac.episode_cap_s") c.env.episode_cap_s = d();
  else if (key == "anatomy.max_translation_step_mm") c.env.max_translation_step_mm = d();
  else if (key == "anatomy.max_rotation_step_rad") c.env.max_rotation_step_rad = d();
  else if (key == "anatomy.force_observation") {
    if (value == "vector") c.env.force_observation = ForceObservation::Vector;
    else if (value == "modulus") c.env.force_observation = ForceObservation::Modulus;
    else throw InvalidArgument("config: anatomy.force_observation must be 'vector' or 'modulus'");
  }
  // reward
  else if (key == "reward.k_F") c.reward.k_F = d();
  else if (key == "reward.k_t") c.reward.k_t = d();
  else if (key == "reward.r_c") c.reward.r_c = d();
  else if (key == "reward.k_d") c.reward.k_d = d();
  // sac
  else if (key == "sac.episodes") c.episodes = static_cast<int>(i());
  else if (key == "sac.update_every") c.sac.update_every = static_cast<int>(i());
  else if (key == "sac.expert_interleave") c.sac.expert_interleave = static_cast<int>(i());
  else if (key == "sac.pretrain_updates") c.sac.pretrain_updates = static_cast<int>(i());
  else if (key == "sac.gamma") c.sac.gamma = d();
  else if (key == "sac.alpha") c.sac.alpha = d();
  else if (key == "sac.tau") c.sac.tau = d();
  else if (key == "sac.batch_size") c.sac.batch_size = static_cast<int>(i());
  else if (key == "sac.buffer_capacity") c.buffer_capacity = static_cast<std::size_t>(i());
  else if (key == "sac.learning_rate") c.sac.learning_rate = d();
  else if (key == "sac.hidden_layers") {
    c.sac.hidden_layers.clear();
    for (double v : to_list(key, value)) c.sac.hidden_layers.push_back(static_cast<int>(v));
  }
  // expert
  else if (key == "expert.gain_translation") c.expert.gain_translation = d();
  else if (key == "expert.gain_rotation") c.expert.gain_rotation = d();
  else if (key == "expert.action_noise_std") c.expert.action_noise_std = d();
  else if (key == "expert.lookahead") c.expert.lookahead = d();
  else if (key == "expert.max_speed_mm_s") c.expert.max_speed_mm_s = d();
  else if (key == "expert.demo_episodes") c.demo_episodes = static_cast<int>(i());
  // paths
  else if (key == "paths.checkpoint_dir") c.checkpoint_dir = value;
  else if (key == "paths.log_dir") c.log_dir = value;
  else throw InvalidArgument("config: unknown key '" + key + "'");
}

inline void apply_config_text(RunConfig& c, std::istream& is, const std::string& name = "config") {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = config_detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(name + ":" + std::to_string(line_no) + ": expected 'key = value'");
    try {
      apply_config_value(c, config_detail::trim(line.substr(0, eq)), config_detail::trim(line.substr(eq + 1)));
    } catch (const InvalidArgument& e) {
      throw ParseError(name + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

inline void apply_config_file(RunConfig& c, const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config file: " + path);
  apply_config_text(c, is, path);
}

// "key=value" as given on the command line.
inline void apply_override(RunConfig& c, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw InvalidArgument("override '" + assignment + "' is not of the form key=value");
  apply_config_value(c, config_detail::trim(assignment.substr(0, eq)), config_detail::trim(assignment.substr(eq + 1)));
}

// The log directory, unless CANALRL_LOG_DIR is set.
inline std::string effective_log_dir(const RunConfig& c) {
  if (const char* env = std::getenv("CANALRL_LOG_DIR"); env != nullptr && *env != '\0') return env;
  return c.log_dir;
}

// Canonical text of the anatomy section; everything that shapes the environment.
inline std::string anatomy_canonical(const RunConfig& c) {
  using config_detail::g17;
  std::ostringstream os;
  os << "flexion_angle_deg=" << g17(c.anatomy.flexion_angle_deg) << '\n'
     << "canal_length_mm=" << g17(c.anatomy.canal_length_mm) << '\n'
     << "canal_radius_mm=" << g17(c.anatomy.canal_radius_mm) << '\n'
     << "checkpoint_fractions=";
  for (double s : c.anatomy.checkpoint_fractions) os << g17(s) << ',';
  os << '\n'
     << "trigger_radius_mm=" << g17(c.anatomy.trigger_radius_mm) << '\n'
     << "instrument_radius_mm=" << g17(c.env.instrument_radius_mm) << '\n'
     << "k_wall=" << g17(c.env.k_wall) << '\n'
     << "force_cap=" << g17(c.env.force_cap) << '\n'
     << "dt=" << g17(c.env.dt) << '\n'
     << "episode_cap_s=" << g17(c.env.episode_cap_s) << '\n'
     << "max_translation_step_mm=" << g17(c.env.max_translation_step_mm) << '\n'
     << "max_rotation_step_rad=" << g17(c.env.max_rotation_step_rad) << '\n'
     << "force_observation=" << (c.env.force_observation == ForceObservation::Vector ? "vector" : "modulus") << '\n';
  return os.str();
}

inline std::uint64_t anatomy_hash(const RunConfig& c) { return config_detail::fnv1a(anatomy_canonical(c)); }

// Hash over everything that affects a trained agent except seed and paths.
inline std::uint64_t config_hash(const RunConfig& c) {
  using config_detail::g17;
  std::ostringstream os;
  os << anatomy_canonical(c) << "k_F=" << g17(c.reward.k_F) << "\nk_t=" << g17(c.reward.k_t)
     << "\nr_c=" << g17(c.reward.r_c) << "\nk_d=" << g17(c.reward.k_d) << "\ngamma=" << g17(c.sac.gamma)
     << "\nalpha=" << g17(c.sac.alpha) << "\ntau=" << g17(c.sac.tau) << "\nbatch_size=" << c.sac.batch_size
     << "\nupdate_every=" << c.sac.update_every << "\nexpert_interleave=" << c.sac.expert_interleave
     << "\npretrain_updates=" << c.sac.pretrain_updates << "\nlearning_rate=" << g17(c.sac.learning_rate)
     << "\nhidden_layers=";
  for (int h : c.sac.hidden_layers) os << h << ',';
  os << "\nbuffer_capacity=" << c.buffer_capacity << '\n';
  return config_detail::fnv1a(os.str());
}

inline CanalEnv make_env(const RunConfig& c) { return CanalEnv(c.anatomy, c.env); }

}  // namespace canalrl
