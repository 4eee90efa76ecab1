#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <random>
#include <vector>

#include "canalrl/canal_env.hpp"
#include "canalrl/expert.hpp"
#include "canalrl/metrics.hpp"
#include "canalrl/sac.hpp"

namespace canalrl {

// Maps (state, observation, rng) to an action in [-1, 1]^5.
using PolicyFn = std::function<Vector(const EnvState&, const Vector&, std::mt19937_64&)>;

inline PolicyFn agent_policy(MlpParams policy, ActionMode mode) {
  return [policy = std::move(policy), mode](const EnvState&, const Vector& obs, std::mt19937_64& rng) {
    return select_action(policy, obs, mode, rng);
  };
}

inline PolicyFn expert_policy(const CanalEnv& env, ExpertPolicyParams params) {
  return [&env, params](const EnvState& state, const Vector&, std::mt19937_64& rng) {
    return expert_action(state, env, params, rng);
  };
}

inline std::uint64_t evaluation_episode_seed(std::uint64_t seed, std::size_t index) {
  return demo_episode_seed(seed ^ 0xE7A1E7A1E7A1E7A1ULL, index);
}

struct EvaluatedEpisode {
  std::uint64_t seed = 0;
  EpisodeLog log;
  MetricsReport metrics;
};

// Runs one episode; the policy's randomness comes from a generator seeded by reset_seed.
inline EvaluatedEpisode run_episode(const CanalEnv& env, const PolicyFn& policy, std::uint64_t reset_seed) {
  EvaluatedEpisode ep;
  ep.seed = reset_seed;
  ep.log.dt = env.params().dt;
  std::mt19937_64 rng(reset_seed ^ 0x5DEECE66DULL);
  auto [state, obs] = env.reset(reset_seed);
  ep.log.forces.push_back(state.last_contact_force.norm());
  while (!state.done) {
    StepResult r = env.step(state, policy(state, obs, rng));
    ep.log.forces.push_back(r.events.applied_force_n);
    state = std::move(r.state);
    obs = std::move(r.observation);
  }
  ep.log.steps = state.step_count;
  ep.log.done = true;
  ep.log.success = state.success;
  ep.metrics = episode_metrics(ep.log);
  return ep;
}

inline std::vector<EvaluatedEpisode> evaluate(const CanalEnv& env, const PolicyFn& policy, std::size_t episodes,
                                              std::uint64_t seed) {
  std::vector<EvaluatedEpisode> out;
  out.reserve(episodes);
  for (std::size_t i = 0; i < episodes; ++i) out.push_back(run_episode(env, policy, evaluation_episode_seed(seed, i)));
  return out;
}

inline MetricsFile to_metrics_file(const std::string& label, const std::vector<EvaluatedEpisode>& episodes) {
  MetricsFile f;
  f.label = label;
  for (std::size_t i = 0; i < episodes.size(); ++i) f.rows.push_back({i, episodes[i].metrics});
  return f;
}

// Per-step force traces: episode_id, step, t, F.
inline void write_force_traces(std::ostream& os, const std::vector<EvaluatedEpisode>& episodes) {
  os << "episode_id\tstep\tt\tF\n";
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    const EpisodeLog& log = episodes[i].log;
    for (std::size_t k = 0; k < log.forces.size(); ++k) {
      os << i << '\t' << k << '\t' << report_format::fmt(static_cast<double>(k) * log.dt) << '\t'
         << report_format::fmt(log.forces[k]) << '\n';
    }
  }
}

}  // namespace canalrl
