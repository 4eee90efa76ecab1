#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "canalrl/reward.hpp"

using namespace canalrl;

TEST(Reward, CheckpointWithNoPenalties) {
  EXPECT_NEAR(compute_reward({true, 0.0, 0.02, 0.0}), 199.998, 1e-12);
}

TEST(Reward, DensePenaltiesOnly) {
  EXPECT_NEAR(compute_reward({false, 1.0, 0.1, 20.0}), -2.81, 1e-12);
}

TEST(Reward, VanishingPenaltiesGiveZero) {
  EXPECT_EQ(compute_reward({false, 0.0, 0.0, 0.0}), 0.0);
  EXPECT_NEAR(compute_reward({false, 0.0, 1e-12, 0.0}), 0.0, 1e-12);
}

TEST(Reward, RejectsNegativeInputs) {
  EXPECT_THROW(compute_reward({false, -0.1, 0.02, 1.0}), InvalidArgument);
  EXPECT_THROW(compute_reward({false, 0.1, -0.02, 1.0}), InvalidArgument);
  EXPECT_THROW(compute_reward({false, 0.1, 0.02, -1.0}), InvalidArgument);
  EXPECT_THROW(compute_reward({false, std::nan(""), 0.02, 1.0}), InvalidArgument);
}

TEST(Reward, RejectsNegativeCoefficients) {
  RewardConfig c;
  c.k_d = -1.0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  EXPECT_NO_THROW(RewardConfig{}.validate());
}

TEST(Reward, StrictlyDecreasingInEachPenaltyTerm) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  for (int i = 0; i < 1000; ++i) {
    const RewardInputs base{false, u(rng), u(rng), 10 * u(rng)};
    const double r = compute_reward(base);
    RewardInputs f = base, t = base, d = base;
    f.force_n += 0.01;
    t.dt_s += 0.01;
    d.checkpoint_distance_mm += 0.01;
    EXPECT_LT(compute_reward(f), r);
    EXPECT_LT(compute_reward(t), r);
    EXPECT_LT(compute_reward(d), r);
    RewardInputs c = base;
    c.checkpoint_reached = true;
    EXPECT_NEAR(compute_reward(c) - r, 200.0, 1e-9);
    EXPECT_LE(r, 0.0);
  }
}

TEST(Reward, PenaltyIsLinear) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  for (int i = 0; i < 1000; ++i) {
    const RewardInputs a{false, u(rng), u(rng), u(rng)};
    const RewardInputs twice{false, 2 * a.force_n, 2 * a.dt_s, 2 * a.checkpoint_distance_mm};
    EXPECT_NEAR(compute_reward(twice), 2 * compute_reward(a), 1e-12);
  }
}

TEST(Reward, UsesConfiguredCoefficients) {
  const RewardConfig c{1.0, 2.0, 50.0, 3.0};
  EXPECT_NEAR(compute_reward({true, 0.5, 0.25, 10.0}, c), 50.0 - 0.5 - 0.5 - 3.0, 1e-12);
}
