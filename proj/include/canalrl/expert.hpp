#pragma once

// Scripted path-following demonstrator that stands in for clinician data, and
// the demonstration file format.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "canalrl/canal_env.hpp"
#include "canalrl/errors.hpp"
#include "canalrl/replay_buffer.hpp"
#include "canalrl/reward.hpp"

namespace canalrl {

struct ExpertPolicyParams {
  double gain_translation = 0.8;  // mm of motion per mm of position error
  double gain_rotation = 0.6;     // rad of rotation per rad of heading error
  double action_noise_std = 0.05;
  double lookahead = 0.05;        // arc-length fraction beyond the nearest centerline point
  double max_speed_mm_s = 8.0;    // cap on the commanded tip speed

  void validate() const {
    detail::require(gain_translation >= 0.0 && gain_rotation >= 0.0, "ExpertPolicyParams: gains must be non-negative");
    detail::require(action_noise_std >= 0.0 && action_noise_std < 0.5,
                    "ExpertPolicyParams: action noise std must lie in [0, 0.5)");
    detail::require(lookahead >= 0.0 && lookahead <= 1.0, "ExpertPolicyParams: lookahead must lie in [0, 1]");
    detail::require(max_speed_mm_s > 0.0, "ExpertPolicyParams: max speed must be positive");
  }
};

// Proportional controller: translate toward the centerline point `lookahead`
// ahead of the tip (speed capped at max_speed_mm_s), rotate the axis toward the
// centerline tangent at the middle of the inserted shaft.
// Always draws exactly kActionDim normal variates from rng.
template <class Rng>
Vector expert_action(const EnvState& state, const CanalEnv& env, const ExpertPolicyParams& params, Rng& rng) {
  const EnvParams& ep = env.params();
  const NearestCenterline nearest = env.nearest_centerline(state.pose.position);
  const CenterlinePoint goal = env.centerline_point(std::min(1.0, nearest.s + params.lookahead));


  Vector action(kActionDim);
  Vec3 move = params.gain_translation * (goal.point - state.pose.position);
  const double max_step = params.max_speed_mm_s * ep.dt;
  if (move.norm() > max_step) move *= max_step / move.norm();
  action.head<3>() = move / ep.max_translation_step_mm;

  // A straight rod best fits an arc along the chord, whose direction is the
  // tangent halfway along the inserted span.
  const double span_mm = ep.shaft_sample_count * ep.shaft_sample_spacing_mm;
  const double goal_s = std::min(1.0, nearest.s + params.lookahead);
  const double length = env.anatomy().canal_length_mm;
  const double align_s = std::max(0.0, goal_s - 0.5 * std::min(span_mm, goal_s * length) / length);
  const auto [pitch, yaw] = pitch_yaw_for(env.centerline_point(align_s).tangent);
  action(3) = params.gain_rotation * wrap_angle(pitch - state.pose.orientation(1)) / ep.max_rotation_step_rad;
  action(4) = params.gain_rotation * wrap_angle(yaw - state.pose.orientation(2)) / ep.max_rotation_step_rad;

  std::normal_distribution<double> noise(0.0, 1.0);
  for (int i = 0; i < kActionDim; ++i) action(i) += params.action_noise_std * noise(rng);
  return action.cwiseMax(-1.0).cwiseMin(1.0);
}

// Seed used to reset episode `index` of a demonstration batch generated with `seed`.
inline std::uint64_t demo_episode_seed(std::uint64_t seed, std::size_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

struct DemoEpisode {
  std::uint64_t reset_seed = 0;
  std::vector<Transition> transitions;
  std::vector<StepEvents> events;  // parallel to transitions; not persisted
  bool success = false;
};

struct DemonstrationSet {
  std::uint64_t anatomy_hash = 0;
  std::uint64_t seed = 0;
  std::vector<DemoEpisode> episodes;

  [[nodiscard]] std::size_t transition_count() const {
    std::size_t n = 0;
    for (const auto& e : episodes) n += e.transitions.size();
    return n;
  }
  [[nodiscard]] double success_rate() const {
    if (episodes.empty()) return 0.0;
    return static_cast<double>(std::count_if(episodes.begin(), episodes.end(),
                                             [](const DemoEpisode& e) { return e.success; })) /
           static_cast<double>(episodes.size());
  }
};

class OracleFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Rolls out one expert episode from reset_seed; noise comes from a generator
// seeded with the same value.
inline DemoEpisode rollout_expert_episode(const CanalEnv& env, const ExpertPolicyParams& params,
                                          const RewardConfig& reward_cfg, std::uint64_t reset_seed) {
  DemoEpisode ep;
  ep.reset_seed = reset_seed;
  std::mt19937_64 rng(reset_seed ^ 0x5DEECE66DULL);
  auto [state, obs] = env.reset(reset_seed);
  while (!state.done) {
    const Vector action = expert_action(state, env, params, rng);
    StepResult r = env.step(state, action);
    const RewardInputs ri{r.events.checkpoint_reached, r.events.applied_force_n, r.events.dt,
                          r.events.checkpoint_distance_mm};
    ep.transitions.push_back({obs, action, compute_reward(ri, reward_cfg), r.observation, r.state.done});
    ep.events.push_back(r.events);
    state = std::move(r.state);
    obs = std::move(r.observation);
  }
  ep.success = state.success;
  return ep;
}

inline DemonstrationSet generate_demonstrations(const CanalEnv& env, const ExpertPolicyParams& params,
                                                const RewardConfig& reward_cfg, std::size_t episode_count,
                                                std::uint64_t seed, std::uint64_t anatomy_hash) {
  detail::require(episode_count >= 1, "generate_demonstrations: episode_count must be at least 1");
  params.validate();
  DemonstrationSet set;
  set.anatomy_hash = anatomy_hash;
  set.seed = seed;
  for (std::size_t i = 0; i < episode_count; ++i) {
    set.episodes.push_back(rollout_expert_episode(env, params, reward_cfg, demo_episode_seed(seed, i)));
  }
  if (set.success_rate() < 0.5) {
    std::ostringstream msg;
    msg << "expert oracle failed in " << (1.0 - set.success_rate()) * 100.0 << "% of " << episode_count
        << " episodes; the anatomy is likely unsolvable with the current controller parameters";
    throw OracleFailure(msg.str());
  }
  return set;
}

// ---------------------------------------------------------------------------
// File format:
//   # canalrl-demos anatomy_hash=<hex> seed=<u64> episodes=<n> transitions=<m>
//   then one tab-separated record per transition:
//   obs[12] action[5] reward next_obs[12] done
// Episodes are delimited by done = 1. Values use 17 significant digits so a
// load reproduces every double exactly.

namespace demo_format {

inline void write_value(std::ostream& os, double v) { os << std::setprecision(17) << v; }

inline std::string header_line(const DemonstrationSet& set) {
  std::ostringstream os;
  os << "# canalrl-demos anatomy_hash=" << std::hex << std::setw(16) << std::setfill('0') << set.anatomy_hash
     << std::dec << " seed=" << set.seed << " episodes=" << set.episodes.size()
     << " transitions=" << set.transition_count();
  return os.str();
}

}  // namespace demo_format

inline void save_demonstrations(const DemonstrationSet& set, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open demonstration file for writing: " + path);
  os << demo_format::header_line(set) << '\n';
  for (const DemoEpisode& ep : set.episodes) {
    for (const Transition& t : ep.transitions) {
      bool first = true;
      auto put = [&](double v) {
        if (!first) os << '\t';
        first = false;
        demo_format::write_value(os, v);
      };
      for (Eigen::Index i = 0; i < t.obs.size(); ++i) put(t.obs(i));
      for (Eigen::Index i = 0; i < t.action.size(); ++i) put(t.action(i));
      put(t.reward);
      for (Eigen::Index i = 0; i < t.next_obs.size(); ++i) put(t.next_obs(i));
      os << '\t' << (t.done ? 1 : 0) << '\n';
    }
  }
  if (!os) throw std::runtime_error("failed writing demonstration file: " + path);
}

inline DemonstrationSet load_demonstrations(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open demonstration file: " + path);
  std::string line;
  if (!std::getline(is, line) || line.rfind("# canalrl-demos", 0) != 0) {
    throw ParseError(path + ":1: missing '# canalrl-demos' header");
  }
  DemonstrationSet set;
  std::size_t expected_episodes = 0;
  std::size_t expected_transitions = 0;
  {
    std::istringstream hs(line.substr(15));
    std::string field;
    while (hs >> field) {
      const auto eq = field.find('=');
      if (eq == std::string::npos) throw ParseError(path + ":1: malformed header field '" + field + "'");
      const std::string key = field.substr(0, eq);
      const std::string value = field.substr(eq + 1);
      try {
        if (key == "anatomy_hash") set.anatomy_hash = std::stoull(value, nullptr, 16);
        else if (key == "seed") set.seed = std::stoull(value);
        else if (key == "episodes") expected_episodes = std::stoull(value);
        else if (key == "transitions") expected_transitions = std::stoull(value);
      } catch (const std::exception&) {
        throw ParseError(path + ":1: bad value for header field '" + key + "'");
      }
    }
  }

  constexpr int kFields = 2 * kObservationDim + kActionDim + 2;
  DemoEpisode current;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::vector<double> v;
    v.reserve(kFields);
    std::string tok;
    while (std::getline(ls, tok, '\t')) {
      try {
        std::size_t used = 0;
        v.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw ParseError(path + ":" + std::to_string(line_no) + ": not a number: '" + tok + "'");
      }
    }
    if (static_cast<int>(v.size()) != kFields) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(kFields) +
                       " fields, found " + std::to_string(v.size()));
    }
    Transition t;
    t.obs = Eigen::Map<const Vector>(v.data(), kObservationDim);
    t.action = Eigen::Map<const Vector>(v.data() + kObservationDim, kActionDim);
    t.reward = v[kObservationDim + kActionDim];
    t.next_obs = Eigen::Map<const Vector>(v.data() + kObservationDim + kActionDim + 1, kObservationDim);
    t.done = v.back() != 0.0;
    if (!t.valid()) throw ParseError(path + ":" + std::to_string(line_no) + ": invalid transition");
    current.transitions.push_back(std::move(t));
    if (current.transitions.back().done) {
      current.reset_seed = demo_episode_seed(set.seed, set.episodes.size());
      // The target slots are zero only once every checkpoint is consumed.
      current.success = current.transitions.back().next_obs.segment<3>(6).isZero(0.0);
      set.episodes.push_back(std::move(current));
      current = DemoEpisode{};
    }
  }
  if (!current.transitions.empty()) throw ParseError(path + ": last episode does not end with done = 1");
  if (set.episodes.size() != expected_episodes || set.transition_count() != expected_transitions) {
    throw ParseError(path + ": record counts do not match the header");
  }
  return set;
}

}  // namespace canalrl
