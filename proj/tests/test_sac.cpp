#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "canalrl/expert.hpp"
#include "canalrl/sac.hpp"
#include "sac_fixtures.hpp"

using namespace canalrl;
using canalrl::oracle::bellman_fixed_point;
using canalrl::oracle::random_small_problem;

namespace {

Transition simple(double reward, bool done, int obs_dim = 1, int action_dim = 1) {
  Transition t;
  t.obs = Vector::Zero(obs_dim);
  t.next_obs = Vector::Zero(obs_dim);
  t.action = Vector::Zero(action_dim);
  t.reward = reward;
  t.done = done;
  return t;
}

AgentNets scalar_nets() {
  SacHyperparams hp;
  hp.hidden_layers = {};
  std::mt19937_64 rng(0);
  AgentNets n = AgentNets::create(hp, rng, 1, 1);
  for (MlpParams* m : {&n.value, &n.value_target, &n.q, &n.policy}) m->set_zero();
  return n;
}

}  // namespace

TEST(AgentNets, DefaultTopology) {
  std::mt19937_64 rng(1);
  const AgentNets n = AgentNets::create(SacHyperparams{}, rng);
  EXPECT_EQ(n.value.layer_sizes, (std::vector<int>{12, 128, 128, 1}));
  EXPECT_EQ(n.q.layer_sizes, (std::vector<int>{17, 128, 128, 1}));
  EXPECT_EQ(n.policy.layer_sizes, (std::vector<int>{12, 128, 128, 10}));
  EXPECT_EQ(n.value, n.value_target);
  EXPECT_EQ(n.policy_opt.learning_rate, 3e-4);
  EXPECT_NO_THROW(n.validate());
}

TEST(Hyperparams, Validation) {
  EXPECT_NO_THROW(SacHyperparams{}.validate());
  SacHyperparams h;
  h.gamma = 1.0;
  EXPECT_THROW(h.validate(), InvalidArgument);
  h = {};
  h.tau = 0.0;
  EXPECT_THROW(h.validate(), InvalidArgument);
  h = {};
  h.batch_size = 0;
  EXPECT_THROW(h.validate(), InvalidArgument);
}

TEST(ValueLoss, SingleSampleResidualOfOne) {
  AgentNets n = scalar_nets();
  n.value.biases[0](0) = 1.0;
  SacHyperparams hp;
  hp.alpha = 0.0;  // target = Q = 0
  const std::vector<Transition> batch{simple(0.0, false)};
  const LossResult r = value_loss(n, batch, hp, Matrix::Zero(1, 1));
  EXPECT_DOUBLE_EQ(r.loss, 0.5);
  EXPECT_DOUBLE_EQ(r.grads.biases[0](0), 1.0);
}

TEST(ValueLoss, RejectsEmptyBatch) {
  const AgentNets n = scalar_nets();
  EXPECT_THROW(value_loss(n, {}, SacHyperparams{}, Matrix::Zero(1, 0)), InvalidArgument);
  EXPECT_THROW(q_loss(n, {}, SacHyperparams{}), InvalidArgument);
  EXPECT_THROW(policy_loss(n, {}, SacHyperparams{}, Matrix::Zero(1, 0)), InvalidArgument);
}

TEST(QLoss, TerminalTargetExcludesBootstrap) {
  AgentNets n = scalar_nets();
  n.q.biases[0](0) = 5.0;
  n.value_target.biases[0](0) = 100.0;
  const std::vector<Transition> batch{simple(5.0, true)};
  EXPECT_EQ(q_loss(n, batch, SacHyperparams{}).loss, 0.0);
  const std::vector<Transition> open{simple(5.0, false)};
  EXPECT_NEAR(q_loss(n, open, SacHyperparams{}).loss, 0.5 * 99.0 * 99.0, 1e-9);
}

TEST(QLoss, BellmanConsistentQGivesZero) {
  AgentNets n = scalar_nets();
  n.value_target.biases[0](0) = 2.0;
  n.q.biases[0](0) = 1.0 + 0.99 * 2.0;
  const std::vector<Transition> batch{simple(1.0, false), simple(1.0, false)};
  EXPECT_NEAR(q_loss(n, batch, SacHyperparams{}).loss, 0.0, 1e-15);
}

TEST(QLoss, UsesTargetNotOnlineValue) {
  AgentNets n = scalar_nets();
  n.value.biases[0](0) = 50.0;
  const std::vector<Transition> batch{simple(0.0, false)};
  EXPECT_EQ(q_loss(n, batch, SacHyperparams{}).loss, 0.0);
}

TEST(PolicyLoss, NoSignalWithoutEntropyAndFlatQ) {
  std::mt19937_64 rng(3);
  auto p = random_small_problem(rng);
  p.hp.alpha = 0.0;
  for (auto& w : p.nets.q.weights) w.setZero();
  const LossResult r = policy_loss(p.nets, p.batch, p.hp, p.noise);
  EXPECT_NEAR(r.loss, -p.nets.q.biases.back()(0), 1e-15);
  for (double g : flatten(r.grads)) EXPECT_EQ(g, 0.0);
}

TEST(PolicyLoss, HigherQLowersLoss) {
  std::mt19937_64 rng(4);
  auto p = random_small_problem(rng);
  const double before = policy_loss(p.nets, p.batch, p.hp, p.noise).loss;
  p.nets.q.biases.back()(0) += 1.0;
  EXPECT_NEAR(policy_loss(p.nets, p.batch, p.hp, p.noise).loss, before - 1.0, 1e-12);
}

TEST(LossGradients, MatchFiniteDifferences) {
  std::mt19937_64 rng(2718);
  for (int trial = 0; trial < 30; ++trial) {
    const auto p = random_small_problem(rng);
    EXPECT_EQ(oracle::check_value_gradient(p).mismatches, 0u) << "trial " << trial;
    EXPECT_EQ(oracle::check_q_gradient(p).mismatches, 0u) << "trial " << trial;
    EXPECT_EQ(oracle::check_policy_gradient(p).mismatches, 0u) << "trial " << trial;
  }
}

TEST(LossGradients, FixedPointHasZeroLosses) {
  const auto f = bellman_fixed_point();
  EXPECT_LE(std::abs(value_loss(f.nets, f.batch, f.hp, f.noise).loss), 1e-10);
  EXPECT_LE(std::abs(q_loss(f.nets, f.batch, f.hp).loss), 1e-10);
  EXPECT_LE(std::abs(policy_loss(f.nets, f.batch, f.hp, f.noise).loss), 1e-10);
}

TEST(LossGradients, FixedPointWithNonzeroValue) {
  const auto f = bellman_fixed_point(3.5);
  const LossResult v = value_loss(f.nets, f.batch, f.hp, f.noise);
  const LossResult q = q_loss(f.nets, f.batch, f.hp);
  EXPECT_LE(v.loss, 1e-10);
  EXPECT_LE(q.loss, 1e-10);
  for (double g : flatten(v.grads)) EXPECT_LE(std::abs(g), 1e-9);
  for (double g : flatten(q.grads)) EXPECT_LE(std::abs(g), 1e-9);
}

TEST(Polyak, FullRateCopiesOnline) {
  std::mt19937_64 rng(5);
  const MlpParams a = init_mlp({3, 4, 1}, rng);
  const MlpParams b = init_mlp({3, 4, 1}, rng);
  EXPECT_EQ(polyak_update(a, b, 1.0), b);
}

TEST(Polyak, ForcedArithmetic) {
  MlpParams target = MlpParams::zeros({1, 1});
  MlpParams online = MlpParams::zeros({1, 1});
  online.weights[0](0, 0) = 1.0;
  EXPECT_DOUBLE_EQ(polyak_update(target, online, 0.005).weights[0](0, 0), 0.005);
}

TEST(Polyak, GeometricConvergence) {
  std::mt19937_64 rng(6);
  const MlpParams online = init_mlp({3, 4, 1}, rng);
  const MlpParams start = init_mlp({3, 4, 1}, rng);
  MlpParams target = start;
  const double tau = 0.005;
  for (int n = 1; n <= 500; ++n) {
    target = polyak_update(target, online, tau);
    if (n % 100 != 0) continue;
    const auto t = flatten(target), o = flatten(online), s = flatten(start);
    for (std::size_t k = 0; k < t.size(); ++k)
      EXPECT_NEAR(std::abs(t[k] - o[k]), std::pow(1 - tau, n) * std::abs(s[k] - o[k]), 1e-12);
  }
}

TEST(Polyak, RejectsBadInputs) {
  const MlpParams a = MlpParams::zeros({1, 1});
  EXPECT_THROW(polyak_update(a, MlpParams::zeros({2, 1}), 0.5), InvalidArgument);
  EXPECT_THROW(polyak_update(a, a, 0.0), InvalidArgument);
  EXPECT_THROW(polyak_update(a, a, 1.5), InvalidArgument);
}

TEST(Schedule, PretrainingIsAllExpert) {
  const SacHyperparams hp;
  for (std::uint64_t i = 0; i < 1000; ++i) EXPECT_EQ(schedule_tag(i, hp), BufferTag::Expert);
}

TEST(Schedule, FourReplayThenOneExpert) {
  const SacHyperparams hp;
  const BufferTag expected[] = {BufferTag::Replay, BufferTag::Replay, BufferTag::Replay, BufferTag::Replay,
                                BufferTag::Expert};
  for (std::uint64_t i = 1000; i < 1005; ++i) EXPECT_EQ(schedule_tag(i, hp), expected[i - 1000]);
  std::size_t expert = 0;
  for (std::uint64_t i = 1000; i < 6000; ++i) expert += schedule_tag(i, hp) == BufferTag::Expert;
  EXPECT_EQ(expert, 1000u);
}

TEST(UpdateRound, SkipsWhenBufferTooSmall) {
  std::mt19937_64 rng(7);
  auto p = random_small_problem(rng, 8);
  p.hp.batch_size = 8;
  ReplayBuffer expert(100), replay(100);
  for (const auto& t : p.batch) expert.push(t);
  const AgentNets before = p.nets;
  std::mt19937_64 r(1), untouched(1);
  const UpdateDiagnostics d = update_round(p.nets, replay, expert, p.hp, 1000, r);
  EXPECT_FALSE(d.performed);
  EXPECT_EQ(d.tag, BufferTag::Replay);
  EXPECT_EQ(p.nets, before);
  EXPECT_EQ(r(), untouched());
}

TEST(UpdateRound, UpdatesEveryNetAndTarget) {
  std::mt19937_64 rng(8);
  auto p = random_small_problem(rng, 8);
  p.hp.batch_size = 8;
  ReplayBuffer expert(100), replay(100);
  for (const auto& t : p.batch) expert.push(t);
  const AgentNets before = p.nets;
  std::mt19937_64 r(2);
  const UpdateDiagnostics d = update_round(p.nets, replay, expert, p.hp, 0, r);
  EXPECT_TRUE(d.performed);
  EXPECT_EQ(d.tag, BufferTag::Expert);
  EXPECT_FALSE(p.nets.value == before.value);
  EXPECT_FALSE(p.nets.q == before.q);
  EXPECT_FALSE(p.nets.policy == before.policy);
  EXPECT_EQ(p.nets.value_target, polyak_update(before.value_target, p.nets.value, p.hp.tau));
  EXPECT_EQ(p.nets.value_opt.step_count, 1u);
  EXPECT_TRUE(std::isfinite(d.value_loss) && std::isfinite(d.q_loss) && std::isfinite(d.policy_loss));
}

TEST(UpdateRound, NonFiniteLossRaisesWithSnapshot) {
  std::mt19937_64 rng(9);
  auto p = random_small_problem(rng, 8);
  p.hp.batch_size = 8;
  ReplayBuffer expert(100), replay(100);
  for (auto t : p.batch) {
    t.reward = std::numeric_limits<double>::infinity();
    expert.push(t);
  }
  std::mt19937_64 r(3);
  try {
    update_round(p.nets, replay, expert, p.hp, 0, r);
    FAIL() << "expected TrainingDiverged";
  } catch (const TrainingDiverged& e) {
    EXPECT_NE(std::string(e.what()).find("soft-Q"), std::string::npos);
    EXPECT_EQ(e.snapshot(), p.nets);
  }
}

TEST(SelectAction, DeterministicZeroPolicyGivesZero) {
  std::mt19937_64 rng(1);
  const MlpParams zero = MlpParams::zeros({12, 8, 10});
  EXPECT_EQ(select_action(zero, Vector::Ones(12), ActionMode::Deterministic, rng), Vector::Zero(5));
}

TEST(SelectAction, DeterministicIsRepeatable) {
  std::mt19937_64 rng(2);
  const MlpParams p = init_mlp({12, 8, 10}, rng);
  const Vector obs = Vector::LinSpaced(12, -1, 1);
  EXPECT_EQ(select_action(p, obs, ActionMode::Deterministic, rng), select_action(p, obs, ActionMode::Deterministic, rng));
  EXPECT_EQ(select_action(p, obs, ActionMode::Deterministic, rng),
            mlp_forward(p, obs).head(5).array().tanh().matrix());
}

TEST(SelectAction, StochasticMeanMatchesSquashedGaussianExpectation) {
  MlpParams p = MlpParams::zeros({2, 10});
  Vector mu(5), ls(5);
  mu << 0.3, -0.5, 1.0, 0.0, 0.8;
  ls << -1.0, 0.0, -0.5, 0.5, -2.0;
  p.biases[0].head(5) = mu;
  p.biases[0].tail(5) = ls;

  constexpr int draws = 100000;
  std::mt19937_64 rng(99);
  Vector sum = Vector::Zero(5);
  for (int i = 0; i < draws; ++i) sum += select_action(p, Vector::Zero(2), ActionMode::Stochastic, rng);
  const Vector mean = sum / draws;

  // E[tanh(mu + sigma eps)] and its spread by quadrature over the normal density.
  for (int k = 0; k < 5; ++k) {
    const double sigma = std::exp(ls(k));
    double m1 = 0.0, m2 = 0.0;
    const int n = 40000;
    const double lo = -10.0, h = 20.0 / n;
    for (int j = 0; j <= n; ++j) {
      const double e = lo + j * h;
      const double w = (j == 0 || j == n ? 0.5 : 1.0) * h * std::exp(-0.5 * e * e) / std::sqrt(2 * std::numbers::pi);
      const double a = std::tanh(mu(k) + sigma * e);
      m1 += w * a;
      m2 += w * a * a;
    }
    const double sd = std::sqrt(std::max(0.0, m2 - m1 * m1));
    EXPECT_LE(std::abs(mean(k) - m1), 3 * sd / std::sqrt(static_cast<double>(draws)) + 1e-12) << k;
  }
}

namespace {

struct TinyTraining {
  CanalEnv env;
  ReplayBuffer expert{100000};
  SacHyperparams hp;
  AgentNets nets;

  TinyTraining() {
    hp.batch_size = 32;
    hp.pretrain_updates = 20;
    hp.hidden_layers = {16, 16};
    const DemonstrationSet demos = generate_demonstrations(env, ExpertPolicyParams{}, RewardConfig{}, 2, 1, 0);
    for (const auto& ep : demos.episodes)
      for (const auto& t : ep.transitions) expert.push(t);
    std::mt19937_64 rng(5);
    nets = AgentNets::create(hp, rng);
  }
};

}  // namespace

TEST(Train, ZeroEpisodesRunsPretrainingOnly) {
  TinyTraining t;
  const TrainResult r = train(t.env, t.expert, t.nets, t.hp, TrainConfig{0, 1000, 3}, RewardConfig{});
  EXPECT_EQ(r.update_count, 20u);
  EXPECT_TRUE(r.reward_log.empty());
  EXPECT_EQ(r.replay.size(), 0u);
  EXPECT_FALSE(r.nets == t.nets);
  EXPECT_EQ(r.nets.policy_opt.step_count, 20u);
}

TEST(Train, BitwiseDeterministicPerSeed) {
  TinyTraining t;
  const TrainConfig cfg{3, 10000, 42};
  std::vector<EpisodeRecord> seen;
  const TrainResult a = train(t.env, t.expert, t.nets, t.hp, cfg, RewardConfig{},
                              [&](const EpisodeRecord& r) { seen.push_back(r); });
  const TrainResult b = train(t.env, t.expert, t.nets, t.hp, cfg, RewardConfig{});
  EXPECT_EQ(a.reward_log, b.reward_log);
  EXPECT_EQ(a.nets, b.nets);
  EXPECT_EQ(a.replay, b.replay);
  EXPECT_EQ(a.update_count, b.update_count);
  EXPECT_EQ(seen, a.reward_log);
  ASSERT_EQ(a.reward_log.size(), 3u);

  std::size_t steps = 0;
  for (const auto& r : a.reward_log) steps += static_cast<std::size_t>(r.steps);
  EXPECT_EQ(a.replay.size(), steps);
  // Each round needs a full replay batch; expert rounds always run.
  EXPECT_LE(a.update_count, 20u + steps / 5);

  const TrainResult c = train(t.env, t.expert, t.nets, t.hp, TrainConfig{3, 10000, 43}, RewardConfig{});
  EXPECT_FALSE(c.reward_log == a.reward_log);
}

TEST(Train, RequiresFilledExpertBuffer) {
  TinyTraining t;
  ReplayBuffer tiny(10);
  tiny.push(t.expert.at(0));
  EXPECT_THROW(train(t.env, tiny, t.nets, t.hp, TrainConfig{1, 100, 0}, RewardConfig{}), InvalidArgument);
}
