#pragma once

#include <cmath>

#include "canalrl/errors.hpp"

namespace canalrl {

struct RewardConfig {
  double k_F = 2.0;   // per newton of applied force
  double k_t = 0.1;   // per second elapsed
  double r_c = 200.0; // checkpoint bonus
  double k_d = 0.4;   // per centimeter to the next checkpoint

  void validate() const {
    detail::require(k_F >= 0.0 && k_t >= 0.0 && r_c >= 0.0 && k_d >= 0.0,
                    "RewardConfig: coefficients must be non-negative");
  }
};

struct RewardInputs {
  bool checkpoint_reached = false;
  double force_n = 0.0;           // applied force modulus F
  double dt_s = 0.0;              // transition duration
  double checkpoint_distance_mm = 0.0;  // d_c
};

// r = r_c [if a checkpoint was reached] - k_F F - k_t dt - k_d d_c, with d_c in cm.
inline double compute_reward(const RewardInputs& in, const RewardConfig& cfg = {}) {
  if (!(in.force_n >= 0.0) || !(in.dt_s >= 0.0) || !(in.checkpoint_distance_mm >= 0.0)) {
    throw InvalidArgument("compute_reward: force, dt and checkpoint distance must be non-negative");
  }
  const double bonus = in.checkpoint_reached ? cfg.r_c : 0.0;
  return bonus - cfg.k_F * in.force_n - cfg.k_t * in.dt_s - cfg.k_d * (in.checkpoint_distance_mm / 10.0);
}

}  // namespace canalrl
