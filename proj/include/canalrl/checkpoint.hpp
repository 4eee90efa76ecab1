#pragma once

// Agent checkpoint: a little-endian binary file.
//
//   "CANALRLC"            8-byte magic
//   u32 format_version
//   u64 config_hash
//   u64 update_count
//   4 x network           value, value_target, q, policy
//       u32 layer count, u32 layer_sizes[count], u64 n, f64 params[n]
//   3 x optimizer         value, q, policy
//       u64 step_count, f64 learning_rate, beta1, beta2, epsilon,
//       u64 n, f64 first_moment[n], u64 n, f64 second_moment[n]
//
// Parameters are flattened per layer as weights (row-major) then biases.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <type_traits>
#include <string>
#include <vector>

#include "canalrl/errors.hpp"
#include "canalrl/nn.hpp"
#include "canalrl/sac.hpp"

namespace canalrl {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::array<char, 8> kCheckpointMagic{'C', 'A', 'N', 'A', 'L', 'R', 'L', 'C'};

struct AgentCheckpoint {
  std::uint32_t format_version = kCheckpointVersion;
  std::uint64_t config_hash = 0;
  std::uint64_t update_count = 0;
  AgentNets nets;

  friend bool operator==(const AgentCheckpoint&, const AgentCheckpoint&) = default;
};

namespace binary {

template <class T>
void write_le(std::ostream& os, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<unsigned char, sizeof(T)> bytes{};
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  os.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <class T>
T read_le(std::istream& is) {
  std::array<unsigned char, sizeof(T)> bytes{};
  if (!is.read(reinterpret_cast<char*>(bytes.data()), sizeof(T))) throw ParseError("checkpoint: unexpected end of file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

inline void write_doubles(std::ostream& os, const std::vector<double>& v) {
  write_le<std::uint64_t>(os, v.size());
  for (double x : v) write_le(os, x);
}

inline std::vector<double> read_doubles(std::istream& is, std::size_t expected) {
  const auto n = read_le<std::uint64_t>(is);
  if (n != expected) throw ParseError("checkpoint: parameter count does not match the layer sizes");
  std::vector<double> v(n);
  for (auto& x : v) x = read_le<double>(is);
  return v;
}

// Header listing layer sizes followed by the flat parameter array.
inline void write_params(std::ostream& os, const MlpParams& p) {
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(p.layer_sizes.size()));
  for (int s : p.layer_sizes) write_le<std::uint32_t>(os, static_cast<std::uint32_t>(s));
  write_doubles(os, flatten(p));
}

inline MlpParams read_params(std::istream& is) {
  const auto count = read_le<std::uint32_t>(is);
  if (count < 2 || count > 64) throw ParseError("checkpoint: implausible layer count");
  std::vector<int> sizes(count);
  for (auto& s : sizes) {
    const auto v = read_le<std::uint32_t>(is);
    if (v == 0 || v > (1U << 20)) throw ParseError("checkpoint: implausible layer size");
    s = static_cast<int>(v);
  }
  const MlpParams shape = MlpParams::zeros(sizes);
  return unflatten(sizes, read_doubles(is, shape.parameter_count()));
}

inline void write_adam(std::ostream& os, const AdamState& s) {
  write_le<std::uint64_t>(os, s.step_count);
  write_le(os, s.learning_rate);
  write_le(os, s.beta1);
  write_le(os, s.beta2);
  write_le(os, s.epsilon);
  write_doubles(os, flatten(s.first_moment));
  write_doubles(os, flatten(s.second_moment));
}

inline AdamState read_adam(std::istream& is, const MlpParams& like) {
  AdamState s;
  s.step_count = read_le<std::uint64_t>(is);
  s.learning_rate = read_le<double>(is);
  s.beta1 = read_le<double>(is);
  s.beta2 = read_le<double>(is);
  s.epsilon = read_le<double>(is);
  s.first_moment = unflatten(like.layer_sizes, read_doubles(is, like.parameter_count()));
  s.second_moment = unflatten(like.layer_sizes, read_doubles(is, like.parameter_count()));
  return s;
}

}  // namespace binary

inline void write_checkpoint(std::ostream& os, const AgentCheckpoint& ck) {
  os.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  binary::write_le(os, ck.format_version);
  binary::write_le(os, ck.config_hash);
  binary::write_le(os, ck.update_count);
  for (const MlpParams* p : {&ck.nets.value, &ck.nets.value_target, &ck.nets.q, &ck.nets.policy})
    binary::write_params(os, *p);
  binary::write_adam(os, ck.nets.value_opt);
  binary::write_adam(os, ck.nets.q_opt);
  binary::write_adam(os, ck.nets.policy_opt);
}

inline AgentCheckpoint read_checkpoint(std::istream& is) {
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kCheckpointMagic) {
    throw ParseError("checkpoint: bad magic, not a canalrl checkpoint");
  }
  AgentCheckpoint ck;
  ck.format_version = binary::read_le<std::uint32_t>(is);
  if (ck.format_version != kCheckpointVersion) {
    throw ParseError("checkpoint: unsupported format version " + std::to_string(ck.format_version));
  }
  ck.config_hash = binary::read_le<std::uint64_t>(is);
  ck.update_count = binary::read_le<std::uint64_t>(is);
  ck.nets.value = binary::read_params(is);
  ck.nets.value_target = binary::read_params(is);
  ck.nets.q = binary::read_params(is);
  ck.nets.policy = binary::read_params(is);
  ck.nets.value_opt = binary::read_adam(is, ck.nets.value);
  ck.nets.q_opt = binary::read_adam(is, ck.nets.q);
  ck.nets.policy_opt = binary::read_adam(is, ck.nets.policy);
  if (is.peek() != std::char_traits<char>::eof()) throw ParseError("checkpoint: trailing bytes after the last record");
  try {
    ck.nets.validate();
  } catch (const InvalidArgument& e) {
    throw ParseError(std::string("checkpoint: inconsistent networks: ") + e.what());
  }
  return ck;
}

inline void save_checkpoint(const AgentCheckpoint& ck, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  write_checkpoint(os, ck);
  if (!os) throw std::runtime_error("failed writing checkpoint: " + path);
}

inline AgentCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  return read_checkpoint(is);
}

}  // namespace canalrl
