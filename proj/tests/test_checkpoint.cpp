#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "canalrl/checkpoint.hpp"

using namespace canalrl;

namespace {

AgentCheckpoint sample_checkpoint(std::uint64_t seed) {
  SacHyperparams hp;
  hp.hidden_layers = {16, 8};
  std::mt19937_64 rng(seed);
  AgentCheckpoint ck;
  ck.nets = AgentNets::create(hp, rng);
  // Give the optimizers non-trivial state.
  const MlpParams g = init_mlp(ck.nets.q.layer_sizes, rng);
  adam_update(ck.nets.q, g, ck.nets.q_opt);
  ck.config_hash = 0x0123456789ABCDEFULL;
  ck.update_count = 1234;
  return ck;
}

std::string bytes_of(const AgentCheckpoint& ck) {
  std::ostringstream os(std::ios::binary);
  write_checkpoint(os, ck);
  return os.str();
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitwiseExact) {
  const AgentCheckpoint ck = sample_checkpoint(1);
  const std::string first = bytes_of(ck);
  std::istringstream is(first, std::ios::binary);
  const AgentCheckpoint back = read_checkpoint(is);
  EXPECT_EQ(back, ck);
  EXPECT_EQ(bytes_of(back), first);
}

TEST(Checkpoint, HeaderLayout) {
  const std::string b = bytes_of(sample_checkpoint(2));
  EXPECT_EQ(b.substr(0, 8), "CANALRLC");
  EXPECT_EQ(static_cast<unsigned char>(b[8]), 1u);  // version, little-endian
  EXPECT_EQ(static_cast<unsigned char>(b[12]), 0xEFu);  // config hash low byte
}

TEST(Checkpoint, RejectsCorruptInput) {
  const std::string good = bytes_of(sample_checkpoint(3));
  auto parse = [](const std::string& s) {
    std::istringstream is(s, std::ios::binary);
    return read_checkpoint(is);
  };
  std::string bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_THROW(parse(bad_magic), ParseError);
  std::string bad_version = good;
  bad_version[8] = 9;
  EXPECT_THROW(parse(bad_version), ParseError);
  EXPECT_THROW(parse(good.substr(0, good.size() - 3)), ParseError);
  EXPECT_THROW(parse(good + "x"), ParseError);
}

TEST(Checkpoint, RejectsInconsistentNetworks) {
  AgentCheckpoint ck = sample_checkpoint(4);
  std::mt19937_64 rng(5);
  ck.nets.value_target = init_mlp({12, 3, 1}, rng);
  std::istringstream is(bytes_of(ck), std::ios::binary);
  EXPECT_THROW(read_checkpoint(is), ParseError);
}
