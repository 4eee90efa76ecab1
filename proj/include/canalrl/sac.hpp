#pragma once

// Soft actor-critic with a separate state-value network:
//   value   V_psi(s)     regressed on  Q_theta(s, a~) - alpha log pi_phi(a~|s)
//   soft Q  Q_theta(s,a) regressed on  r + (1 - done) gamma V_psibar(s')
//   policy  pi_phi       minimizes     alpha log pi_phi(a~|s) - Q_theta(s, a~)
// with a~ drawn by reparameterization through the tanh-squashed Gaussian head
// and psibar a Polyak average of psi.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "canalrl/canal_env.hpp"
#include "canalrl/errors.hpp"
#include "canalrl/nn.hpp"
#include "canalrl/replay_buffer.hpp"
#include "canalrl/reward.hpp"

namespace canalrl {

struct SacHyperparams {
  double gamma = 0.99;
  double alpha = 0.2;
  double tau = 0.005;
  int batch_size = 256;
  int update_every = 5;       // environment steps between update rounds
  int expert_interleave = 4;  // replay rounds per expert round
  int pretrain_updates = 1000;
  double learning_rate = 3e-4;
  std::vector<int> hidden_layers{128, 128};

  void validate() const {
    detail::require(gamma > 0.0 && gamma < 1.0, "SacHyperparams: gamma must lie in (0, 1)");
    detail::require(alpha >= 0.0, "SacHyperparams: alpha must be non-negative");
    detail::require(tau > 0.0 && tau <= 1.0, "SacHyperparams: tau must lie in (0, 1]");
    detail::require(batch_size > 0 && update_every > 0 && expert_interleave >= 0 && pretrain_updates >= 0,
                    "SacHyperparams: schedule parameters out of range");
    detail::require(learning_rate > 0.0, "SacHyperparams: learning rate must be positive");
    for (int h : hidden_layers) detail::require(h > 0, "SacHyperparams: hidden layer sizes must be positive");
  }
};

struct AgentNets {
  MlpParams value;
  MlpParams value_target;
  MlpParams q;
  MlpParams policy;
  AdamState value_opt;
  AdamState q_opt;
  AdamState policy_opt;

  template <class Rng>
  static AgentNets create(const SacHyperparams& hp, Rng& rng, int obs_dim = kObservationDim,
                          int action_dim = kActionDim) {
    auto sizes = [&](int in, int out) {
      std::vector<int> s{in};
      s.insert(s.end(), hp.hidden_layers.begin(), hp.hidden_layers.end());
      s.push_back(out);
      return s;
    };
    AgentNets n;
    n.value = init_mlp(sizes(obs_dim, 1), rng);
    n.value_target = n.value;
    n.q = init_mlp(sizes(obs_dim + action_dim, 1), rng);
    n.policy = init_mlp(sizes(obs_dim, 2 * action_dim), rng);
    n.value_opt = AdamState::for_params(n.value, hp.learning_rate);
    n.q_opt = AdamState::for_params(n.q, hp.learning_rate);
    n.policy_opt = AdamState::for_params(n.policy, hp.learning_rate);
    return n;
  }

  [[nodiscard]] int obs_dim() const { return policy.input_size(); }
  [[nodiscard]] int action_dim() const { return policy.output_size() / 2; }

  void validate() const {
    detail::require(value.same_shape(value_target), "AgentNets: value and target value topologies differ");
    detail::require(value.output_size() == 1 && q.output_size() == 1, "AgentNets: critics must have one output");
    detail::require(policy.output_size() % 2 == 0, "AgentNets: policy must output means and log-stds");
    detail::require(value.input_size() == obs_dim() && q.input_size() == obs_dim() + action_dim(),
                    "AgentNets: critic input sizes do not match the policy");
  }

  friend bool operator==(const AgentNets&, const AgentNets&) = default;
};

// ---------------------------------------------------------------------------
// Losses

struct LossResult {
  double loss = 0.0;
  MlpParams grads;
};

struct BatchMatrices {
  Matrix obs;       // obs_dim x B
  Matrix actions;   // action_dim x B
  Matrix next_obs;  // obs_dim x B
  Eigen::RowVectorXd rewards;
  Eigen::RowVectorXd not_done;
};

inline BatchMatrices stack_batch(std::span<const Transition> batch) {
  if (batch.empty()) throw InvalidArgument("SAC loss: batch must not be empty");
  const auto b = static_cast<Eigen::Index>(batch.size());
  const Eigen::Index od = batch.front().obs.size();
  const Eigen::Index ad = batch.front().action.size();
  BatchMatrices m{Matrix(od, b), Matrix(ad, b), Matrix(od, b), Eigen::RowVectorXd(b), Eigen::RowVectorXd(b)};
  for (Eigen::Index i = 0; i < b; ++i) {
    const Transition& t = batch[static_cast<std::size_t>(i)];
    if (t.obs.size() != od || t.next_obs.size() != od || t.action.size() != ad) {
      throw InvalidArgument("SAC loss: transitions in a batch have inconsistent shapes");
    }
    m.obs.col(i) = t.obs;
    m.actions.col(i) = t.action;
    m.next_obs.col(i) = t.next_obs;
    m.rewards(i) = t.reward;
    m.not_done(i) = t.done ? 0.0 : 1.0;
  }
  return m;
}

inline Matrix concat_rows(const Matrix& top, const Matrix& bottom) {
  Matrix out(top.rows() + bottom.rows(), top.cols());
  out << top, bottom;
  return out;
}

struct PolicySamples {
  ForwardCache cache;
  std::vector<GaussianHeadOutput> samples;
  Matrix actions;             // action_dim x B
  Eigen::RowVectorXd log_probs;
};

inline PolicySamples sample_policy(const MlpParams& policy, const Matrix& obs, const Matrix& noise) {
  const Eigen::Index ad = policy.output_size() / 2;
  if (noise.rows() != ad || noise.cols() != obs.cols()) {
    throw InvalidArgument("SAC loss: noise must be action_dim x batch_size");
  }
  PolicySamples ps;
  ps.cache = mlp_forward_cached(policy, obs);
  const Matrix& head = ps.cache.output();
  ps.actions.resize(ad, obs.cols());
  ps.log_probs.resize(obs.cols());
  ps.samples.reserve(static_cast<std::size_t>(obs.cols()));
  for (Eigen::Index i = 0; i < obs.cols(); ++i) {
    ps.samples.push_back(gaussian_sample(head.col(i).head(ad), head.col(i).tail(ad), noise.col(i)));
    ps.actions.col(i) = ps.samples.back().action;
    ps.log_probs(i) = ps.samples.back().log_prob;
  }
  return ps;
}

// Mean of 1/2 (V_psi(s) - [Q_theta(s, a~) - alpha log pi(a~|s)])^2; gradients w.r.t. psi.
inline LossResult value_loss(const AgentNets& nets, std::span<const Transition> batch, const SacHyperparams& hp,
                             const Matrix& noise) {
  const BatchMatrices m = stack_batch(batch);
  const auto b = static_cast<double>(m.obs.cols());
  const PolicySamples ps = sample_policy(nets.policy, m.obs, noise);
  const Eigen::RowVectorXd q = mlp_forward_batch(nets.q, concat_rows(m.obs, ps.actions)).row(0);
  const Eigen::RowVectorXd target = q - hp.alpha * ps.log_probs;

  const ForwardCache vc = mlp_forward_cached(nets.value, m.obs);
  const Eigen::RowVectorXd residual = vc.output().row(0) - target;

  LossResult r{0.5 * residual.squaredNorm() / b, MlpParams::zeros(nets.value.layer_sizes)};
  mlp_backward_batch(nets.value, vc, residual / b, &r.grads);
  return r;
}

// Mean of 1/2 (Q_theta(s, a) - [r + (1 - done) gamma V_psibar(s')])^2; gradients w.r.t. theta.
inline LossResult q_loss(const AgentNets& nets, std::span<const Transition> batch, const SacHyperparams& hp) {
  const BatchMatrices m = stack_batch(batch);
  const auto b = static_cast<double>(m.obs.cols());
  const Eigen::RowVectorXd v_next = mlp_forward_batch(nets.value_target, m.next_obs).row(0);
  const Eigen::RowVectorXd target = m.rewards + hp.gamma * m.not_done.cwiseProduct(v_next);

  const ForwardCache qc = mlp_forward_cached(nets.q, concat_rows(m.obs, m.actions));
  const Eigen::RowVectorXd residual = qc.output().row(0) - target;

  LossResult r{0.5 * residual.squaredNorm() / b, MlpParams::zeros(nets.q.layer_sizes)};
  mlp_backward_batch(nets.q, qc, residual / b, &r.grads);
  return r;
}

// Mean of alpha log pi(a~|s) - Q_theta(s, a~); gradients w.r.t. phi through
// the reparameterized sample, with theta held fixed.
inline LossResult policy_loss(const AgentNets& nets, std::span<const Transition> batch, const SacHyperparams& hp,
                              const Matrix& noise) {
  const BatchMatrices m = stack_batch(batch);
  const Eigen::Index n = m.obs.cols();
  const auto b = static_cast<double>(n);
  const Eigen::Index od = m.obs.rows();
  const Eigen::Index ad = nets.policy.output_size() / 2;

  const PolicySamples ps = sample_policy(nets.policy, m.obs, noise);
  const ForwardCache qc = mlp_forward_cached(nets.q, concat_rows(m.obs, ps.actions));
  const Eigen::RowVectorXd q = qc.output().row(0);

  LossResult r{(hp.alpha * ps.log_probs - q).sum() / b, MlpParams::zeros(nets.policy.layer_sizes)};

  const Matrix dq_dinput = mlp_backward_batch(nets.q, qc, Matrix::Constant(1, n, -1.0 / b), nullptr);
  const Matrix& head = ps.cache.output();
  Matrix grad_head(2 * ad, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const GaussianHeadGrad g =
        gaussian_sample_backward(head.col(i).tail(ad), ps.samples[static_cast<std::size_t>(i)], noise.col(i),
                                 dq_dinput.col(i).segment(od, ad), hp.alpha / b);
    grad_head.col(i).head(ad) = g.d_mean;
    grad_head.col(i).tail(ad) = g.d_raw_log_std;
  }
  mlp_backward_batch(nets.policy, ps.cache, grad_head, &r.grads);
  return r;
}

// target <- tau * online + (1 - tau) * target, elementwise.
inline MlpParams polyak_update(const MlpParams& target, const MlpParams& online, double tau) {
  detail::require(target.same_shape(online), "polyak_update: shapes differ");
  detail::require(tau > 0.0 && tau <= 1.0, "polyak_update: tau must lie in (0, 1]");
  MlpParams out = target;
  for (std::size_t l = 0; l < out.num_layers(); ++l) {
    out.weights[l] = tau * online.weights[l] + (1.0 - tau) * target.weights[l];
    out.biases[l] = tau * online.biases[l] + (1.0 - tau) * target.biases[l];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Update schedule

enum class BufferTag { Expert, Replay };

inline const char* to_string(BufferTag t) { return t == BufferTag::Expert ? "expert" : "replay"; }

// Pretraining rounds draw from the expert buffer; afterwards every
// (expert_interleave + 1)-th round does.
inline BufferTag schedule_tag(std::uint64_t update_index, const SacHyperparams& hp) {
  if (update_index < static_cast<std::uint64_t>(hp.pretrain_updates)) return BufferTag::Expert;
  const auto period = static_cast<std::uint64_t>(hp.expert_interleave) + 1;
  return update_index % period == period - 1 ? BufferTag::Expert : BufferTag::Replay;
}

struct UpdateDiagnostics {
  bool performed = false;
  BufferTag tag = BufferTag::Replay;
  double value_loss = 0.0;
  double q_loss = 0.0;
  double policy_loss = 0.0;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, AgentNets snapshot)
      : std::runtime_error(what), snapshot_(std::move(snapshot)) {}
  [[nodiscard]] const AgentNets& snapshot() const { return snapshot_; }

 private:
  AgentNets snapshot_;
};

template <class Rng>
Matrix standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = n(rng);
  return m;
}

// One round: value, Q and policy gradient steps on a batch from the scheduled
// buffer, then the Polyak target update. Returns performed = false without
// consuming randomness when that buffer holds fewer than batch_size entries.
template <class Rng>
UpdateDiagnostics update_round(AgentNets& nets, const ReplayBuffer& replay, const ReplayBuffer& expert,
                               const SacHyperparams& hp, std::uint64_t update_index, Rng& rng) {
  UpdateDiagnostics d;
  d.tag = schedule_tag(update_index, hp);
  const ReplayBuffer& source = d.tag == BufferTag::Expert ? expert : replay;
  const auto batch_size = static_cast<std::size_t>(hp.batch_size);
  if (source.size() < batch_size) return d;

  const std::vector<Transition> batch = source.sample(batch_size, rng);
  const Eigen::Index ad = nets.action_dim();
  const Matrix value_noise = standard_normal(ad, hp.batch_size, rng);
  const Matrix policy_noise = standard_normal(ad, hp.batch_size, rng);

  auto check = [&](double loss, const char* which) {
    if (!std::isfinite(loss)) {
      std::ostringstream msg;
      msg << which << " loss became non-finite at update " << update_index << " (" << to_string(d.tag)
          << " batch)";
      throw TrainingDiverged(msg.str(), nets);
    }
  };

  const LossResult lv = value_loss(nets, batch, hp, value_noise);
  check(lv.loss, "value");
  adam_update(nets.value, lv.grads, nets.value_opt);

  const LossResult lq = q_loss(nets, batch, hp);
  check(lq.loss, "soft-Q");
  adam_update(nets.q, lq.grads, nets.q_opt);

  const LossResult lp = policy_loss(nets, batch, hp, policy_noise);
  check(lp.loss, "policy");
  adam_update(nets.policy, lp.grads, nets.policy_opt);

  nets.value_target = polyak_update(nets.value_target, nets.value, hp.tau);

  d.performed = true;
  d.value_loss = lv.loss;
  d.q_loss = lq.loss;
  d.policy_loss = lp.loss;
  return d;
}

// ---------------------------------------------------------------------------
// Acting and training

enum class ActionMode { Stochastic, Deterministic };

template <class Rng>
Vector select_action(const MlpParams& policy, const Vector& obs, ActionMode mode, Rng& rng) {
  const Vector head = mlp_forward(policy, obs);
  const Eigen::Index ad = head.size() / 2;
  if (mode == ActionMode::Deterministic) return head.head(ad).array().tanh().matrix();
  const Matrix noise = standard_normal(ad, 1, rng);
  return gaussian_sample(head.head(ad), head.tail(ad), noise.col(0)).action;
}

struct EpisodeRecord {
  int episode_index = 0;
  double cumulative_reward = 0.0;
  bool success = false;
  int steps = 0;

  friend bool operator==(const EpisodeRecord&, const EpisodeRecord&) = default;
};

struct TrainConfig {
  int episodes = 1000;
  std::size_t buffer_capacity = 1'000'000;
  std::uint64_t seed = 0;
};

struct TrainResult {
  AgentNets nets;
  std::vector<EpisodeRecord> reward_log;
  std::uint64_t update_count = 0;
  ReplayBuffer replay{1};
};

inline std::uint64_t training_episode_seed(std::uint64_t seed, std::size_t index) {
  std::uint64_t z = (seed ^ 0xA5A5A5A55A5A5A5AULL) + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

using EpisodeCallback = std::function<void(const EpisodeRecord&)>;

// Expert-only pretraining followed by episodes of stochastic interaction with
// an update round every hp.update_every environment steps.
inline TrainResult train(const CanalEnv& env, const ReplayBuffer& expert, AgentNets nets, const SacHyperparams& hp,
                         const TrainConfig& cfg, const RewardConfig& reward_cfg,
                         const EpisodeCallback& on_episode = {}) {
  hp.validate();
  nets.validate();
  if (expert.size() < static_cast<std::size_t>(hp.batch_size)) {
    throw InvalidArgument("train: the expert buffer must hold at least batch_size transitions");
  }
  std::mt19937_64 rng(cfg.seed);
  TrainResult out{std::move(nets), {}, 0, ReplayBuffer(cfg.buffer_capacity)};

  for (int i = 0; i < hp.pretrain_updates; ++i) {
    update_round(out.nets, out.replay, expert, hp, out.update_count, rng);
    ++out.update_count;
  }

  std::uint64_t env_steps = 0;
  for (int e = 0; e < cfg.episodes; ++e) {
    auto [state, obs] = env.reset(training_episode_seed(cfg.seed, static_cast<std::size_t>(e)));
    EpisodeRecord rec{e, 0.0, false, 0};
    while (!state.done) {
      const Vector action = select_action(out.nets.policy, obs, ActionMode::Stochastic, rng);
      StepResult r = env.step(state, action);
      const RewardInputs ri{r.events.checkpoint_reached, r.events.applied_force_n, r.events.dt,
                            r.events.checkpoint_distance_mm};
      const double reward = compute_reward(ri, reward_cfg);
      out.replay.push({obs, action, reward, r.observation, r.state.done});
      rec.cumulative_reward += reward;
      rec.steps += 1;
      state = std::move(r.state);
      obs = std::move(r.observation);

      if (++env_steps % static_cast<std::uint64_t>(hp.update_every) == 0) {
        if (update_round(out.nets, out.replay, expert, hp, out.update_count, rng).performed) ++out.update_count;
      }
    }
    rec.success = state.success;
    out.reward_log.push_back(rec);
    if (on_episode) on_episode(rec);
  }
  return out;
}

}  // namespace canalrl
