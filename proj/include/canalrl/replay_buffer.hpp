#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

#include "canalrl/errors.hpp"
#include "canalrl/nn.hpp"

namespace canalrl {

struct Transition {
  Vector obs;
  Vector action;
  double reward = 0.0;
  Vector next_obs;
  bool done = false;

  [[nodiscard]] bool valid() const {
    return obs.allFinite() && next_obs.allFinite() && action.allFinite() && std::isfinite(reward) &&
           action.size() == kActionDim && action.cwiseAbs().maxCoeff() <= 1.0;
  }

  friend bool operator==(const Transition& a, const Transition& b) {
    return a.obs == b.obs && a.action == b.action && a.reward == b.reward && a.next_obs == b.next_obs &&
           a.done == b.done;
  }
};

// Fixed-capacity ring of transitions; the oldest entry is overwritten first.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 1'000'000) : capacity_(capacity) {
    detail::require(capacity > 0, "ReplayBuffer: capacity must be positive");
  }

  void push(Transition t) {
    if (storage_.size() < capacity_) {
      storage_.push_back(std::move(t));
    } else {
      storage_[head_] = std::move(t);
    }
    head_ = (head_ + 1) % capacity_;
  }

  [[nodiscard]] std::size_t size() const { return storage_.size(); }
  [[nodiscard]] std::size_t capacity() const { return capacity_; }
  [[nodiscard]] bool empty() const { return storage_.empty(); }

  // Logical index 0 is the oldest stored transition.
  [[nodiscard]] const Transition& at(std::size_t i) const {
    detail::require(i < storage_.size(), "ReplayBuffer: index out of range");
    if (storage_.size() < capacity_) return storage_[i];
    return storage_[(head_ + i) % capacity_];
  }

  // Uniform indices with replacement.
  template <class Rng>
  std::vector<std::size_t> sample_indices(std::size_t count, Rng& rng) const {
    if (storage_.empty()) throw StateError("ReplayBuffer: cannot sample from an empty buffer");
    std::uniform_int_distribution<std::size_t> pick(0, storage_.size() - 1);
    std::vector<std::size_t> idx(count);
    for (auto& i : idx) i = pick(rng);
    return idx;
  }

  template <class Rng>
  std::vector<Transition> sample(std::size_t count, Rng& rng) const {
    std::vector<Transition> batch;
    batch.reserve(count);
    for (std::size_t i : sample_indices(count, rng)) batch.push_back(storage_[i]);
    return batch;
  }

  friend bool operator==(const ReplayBuffer& a, const ReplayBuffer& b) {
    return a.capacity_ == b.capacity_ && a.head_ == b.head_ && a.storage_ == b.storage_;
  }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::vector<Transition> storage_;
};

}  // namespace canalrl
