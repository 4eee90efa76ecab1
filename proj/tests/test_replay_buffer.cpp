#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "canalrl/replay_buffer.hpp"

using namespace canalrl;

namespace {

Transition tagged(double tag) {
  Transition t;
  t.obs = Vector::Constant(12, tag);
  t.action = Vector::Zero(5);
  t.reward = tag;
  t.next_obs = Vector::Constant(12, tag + 1);
  return t;
}

}  // namespace

TEST(ReplayBuffer, GrowsUpToCapacityThenEvictsOldest) {
  ReplayBuffer b(3);
  EXPECT_TRUE(b.empty());
  for (int i = 0; i < 5; ++i) {
    b.push(tagged(i));
    EXPECT_LE(b.size(), b.capacity());
  }
  ASSERT_EQ(b.size(), 3u);
  EXPECT_EQ(b.at(0).reward, 2.0);
  EXPECT_EQ(b.at(1).reward, 3.0);
  EXPECT_EQ(b.at(2).reward, 4.0);
  EXPECT_THROW((void)b.at(3), InvalidArgument);
}

TEST(ReplayBuffer, RejectsZeroCapacityAndEmptySampling) {
  EXPECT_THROW(ReplayBuffer(0), InvalidArgument);
  ReplayBuffer b(4);
  std::mt19937_64 rng(1);
  EXPECT_THROW((void)b.sample(1, rng), StateError);
}

TEST(ReplayBuffer, SamplingIsSeededAndReproducible) {
  ReplayBuffer b(50);
  for (int i = 0; i < 50; ++i) b.push(tagged(i));
  std::mt19937_64 r1(9), r2(9);
  EXPECT_EQ(b.sample(64, r1), b.sample(64, r2));
}

TEST(ReplayBuffer, SamplingIsUniformWithinFiveSigma) {
  ReplayBuffer b(100);
  for (int i = 0; i < 100; ++i) b.push(tagged(i));
  std::mt19937_64 rng(2024);
  constexpr std::size_t draws = 1'000'000;
  std::vector<std::size_t> counts(100, 0);
  for (std::size_t i : b.sample_indices(draws, rng)) ++counts[i];
  const double p = 0.01;
  const double sigma = std::sqrt(draws * p * (1 - p));
  for (std::size_t c : counts) EXPECT_LE(std::abs(static_cast<double>(c) - draws * p), 5 * sigma);
}

TEST(Transition, Validity) {
  Transition t = tagged(0.5);
  EXPECT_TRUE(t.valid());
  t.action(0) = 1.5;
  EXPECT_FALSE(t.valid());
  t = tagged(0.5);
  t.reward = std::nan("");
  EXPECT_FALSE(t.valid());
}
