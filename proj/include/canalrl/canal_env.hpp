#pragma once

// Quasi-static rigid instrument in a curved tube.
//
// The canal centerline lies in the world x-z plane: it starts at the origin
// heading +x, runs straight, bends through (180 deg - flexion angle) on a
// circular arc, and runs straight again. Arc-length fractions of the entry
// straight, the arc and the exit straight are 0.25 / 0.5 / 0.25.
//
// The instrument is a straight rod of radius instrument_radius_mm. It is probed
// at the tip and at shaft_sample_count points spaced shaft_sample_spacing_mm
// behind it. Each probe is pushed toward the centerline by a linear wall
// penalty. Because the default rod is wider than the canal, both the near and
// the far wall are considered: the net radial force of a probe at distance d
// is k_wall * (max(0, d + r_i - r_c) - max(0, r_i - r_c - d)), which reduces to
// the one-sided penalty once the far wall is out of reach and vanishes on the
// centerline. Beyond either end the tube continues straight.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "canalrl/errors.hpp"
#include "canalrl/nn.hpp"

namespace canalrl {

using Vec3 = Eigen::Vector3d;

inline constexpr int kObservationDim = 12;
// Probes closer than this to the centerline (mm) count as centered.
inline constexpr double kCenterlineTolerance = 1e-9;

inline double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a, two_pi);
  if (a <= -std::numbers::pi) a += two_pi;
  if (a > std::numbers::pi) a -= two_pi;
  return a;
}

inline double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }

struct InstrumentPose {
  Vec3 position = Vec3::Zero();     // tip, mm
  Vec3 orientation = Vec3::Zero();  // roll, pitch, yaw (rad)

  // Instrument axis (tip direction) for Z-Y-X Euler angles.
  [[nodiscard]] Vec3 axis() const {
    const double pitch = orientation(1);
    const double yaw = orientation(2);
    return {std::cos(yaw) * std::cos(pitch), std::sin(yaw) * std::cos(pitch), -std::sin(pitch)};
  }

  friend bool operator==(const InstrumentPose&, const InstrumentPose&) = default;
};

// Pitch and yaw that point the instrument axis along a unit direction.
inline std::pair<double, double> pitch_yaw_for(const Vec3& dir) {
  const double pitch = -std::asin(std::clamp(dir.z(), -1.0, 1.0));
  const double yaw = std::atan2(dir.y(), dir.x());
  return {pitch, yaw};
}

struct CanalAnatomy {
  double flexion_angle_deg = 150.0;
  double canal_length_mm = 40.0;
  double canal_radius_mm = 2.25;
  std::vector<double> checkpoint_fractions{0.2, 0.4, 0.6, 0.8, 1.0};
  double trigger_radius_mm = 2.0;
  InstrumentPose entry_pose{};

  [[nodiscard]] double radius_at(double /*s*/) const { return canal_radius_mm; }

  void validate() const {
    detail::require(flexion_angle_deg >= 115.0 && flexion_angle_deg <= 185.0,
                    "CanalAnatomy: flexion angle must lie in [115, 185] degrees");
    detail::require(canal_length_mm > 0.0, "CanalAnatomy: canal length must be positive");
    detail::require(canal_radius_mm > 0.0, "CanalAnatomy: canal radius must be positive");
    detail::require(trigger_radius_mm > 0.0, "CanalAnatomy: trigger radius must be positive");
    detail::require(!checkpoint_fractions.empty(), "CanalAnatomy: at least one checkpoint is required");
    double prev = 0.0;
    for (double s : checkpoint_fractions) {
      detail::require(s > prev && s <= 1.0, "CanalAnatomy: checkpoints must be strictly increasing in (0, 1]");
      prev = s;
    }
    detail::require(checkpoint_fractions.back() == 1.0, "CanalAnatomy: last checkpoint must sit at s = 1");
  }
};

enum class ForceObservation { Vector, Modulus };

struct EnvParams {
  double instrument_radius_mm = 2.5;
  int shaft_sample_count = 4;
  double shaft_sample_spacing_mm = 5.0;
  double k_wall = 0.5;     // N per mm of penetration
  double force_cap = 5.0;  // N
  double dt = 0.02;              // s
  double episode_cap_s = 20.0;   // s
  double max_translation_step_mm = 1.0;
  double max_rotation_step_rad = 0.0175;
  double reset_position_noise_mm = 1.0;
  double reset_angle_noise_rad = deg_to_rad(2.0);
  double workspace_half_extent_mm = 100.0;
  ForceObservation force_observation = ForceObservation::Vector;

  void validate() const {
    detail::require(instrument_radius_mm > 0.0 && shaft_sample_count >= 0 && shaft_sample_spacing_mm > 0.0,
                    "EnvParams: invalid instrument geometry");
    detail::require(k_wall >= 0.0 && force_cap > 0.0, "EnvParams: invalid contact constants");
    detail::require(dt > 0.0 && episode_cap_s >= dt, "EnvParams: dt must be positive and fit in the episode cap");
    detail::require(max_translation_step_mm > 0.0 && max_rotation_step_rad > 0.0,
                    "EnvParams: action scales must be positive");
    detail::require(reset_position_noise_mm >= 0.0 && reset_angle_noise_rad >= 0.0,
                    "EnvParams: reset noise must be non-negative");
  }
};

struct CenterlinePoint {
  Vec3 point;
  Vec3 tangent;
};

// Closest centerline point to a query. Beyond either end the tube is extended
// straight; s is clamped to [0, 1] there.
struct NearestCenterline {
  double s = 0.0;
  Vec3 point = Vec3::Zero();
  double distance = 0.0;
};

struct EnvState {
  InstrumentPose pose{};
  int next_checkpoint_index = 0;
  int step_count = 0;
  double elapsed_time = 0.0;
  Vec3 last_contact_force = Vec3::Zero();
  bool done = false;
  bool success = false;

  friend bool operator==(const EnvState&, const EnvState&) = default;
};

struct StepEvents {
  bool checkpoint_reached = false;
  double checkpoint_distance_mm = 0.0;  // d_c to the next checkpoint after the step
  double applied_force_n = 0.0;         // |F| after the step
  double dt = 0.0;
};

struct StepResult {
  EnvState state;
  Vector observation;
  StepEvents events;
};

struct ResetResult {
  EnvState state;
  Vector observation;
};

class CanalEnv {
 public:
  explicit CanalEnv(CanalAnatomy anatomy = {}, EnvParams params = {})
      : anatomy_(std::move(anatomy)), params_(params) {
    anatomy_.validate();
    params_.validate();
    const double length = anatomy_.canal_length_mm;
    entry_len_ = 0.25 * length;
    arc_len_ = 0.5 * length;
    exit_len_ = length - entry_len_ - arc_len_;
    turn_ = std::numbers::pi - deg_to_rad(anatomy_.flexion_angle_deg);
    curvature_ = turn_ / arc_len_;
    arc_end_ = point_at_arclength(entry_len_ + arc_len_);
    exit_dir_ = Vec3(std::cos(turn_), 0.0, std::sin(turn_));
    for (double s : anatomy_.checkpoint_fractions) checkpoints_.push_back(centerline_point(s).point);
  }

  [[nodiscard]] const CanalAnatomy& anatomy() const { return anatomy_; }
  [[nodiscard]] const EnvParams& params() const { return params_; }
  [[nodiscard]] const std::vector<Vec3>& checkpoints() const { return checkpoints_; }
  [[nodiscard]] int checkpoint_count() const { return static_cast<int>(checkpoints_.size()); }
  [[nodiscard]] int max_steps() const {
    return static_cast<int>(std::ceil(params_.episode_cap_s / params_.dt - 1e-9));
  }

  [[nodiscard]] CenterlinePoint centerline_point(double s) const {
    if (!(s >= 0.0 && s <= 1.0)) throw InvalidArgument("centerline_point: s must lie in [0, 1]");
    const double sigma = s * anatomy_.canal_length_mm;
    return {point_at_arclength(sigma), tangent_at_arclength(sigma)};
  }

  [[nodiscard]] NearestCenterline nearest_centerline(const Vec3& q) const {
    const double length = anatomy_.canal_length_mm;
    NearestCenterline best;
    best.distance = std::numeric_limits<double>::infinity();
    auto consider = [&](double sigma, const Vec3& p) {
      const double d = (q - p).norm();
      if (d < best.distance) best = {sigma / length, p, d};
    };

    // Entry straight, extended backwards.
    {
      const double t = q.x();
      const double sigma = std::clamp(t, 0.0, entry_len_);
      consider(sigma, Vec3(t < 0.0 ? t : sigma, 0.0, 0.0));
    }
    // Arc.
    if (std::abs(curvature_) <= 1e-12) {
      const double along = std::clamp(q.x() - entry_len_, 0.0, arc_len_);
      consider(entry_len_ + along, Vec3(entry_len_ + along, 0.0, 0.0));
    } else {
      const double rho = 1.0 / curvature_;
      const Vec3 center(entry_len_, 0.0, rho);
      const Vec3 rel = q - center;
      const double phi = std::atan2(rel.x() / rho, -rel.z() / rho);
      const double lo = std::min(0.0, turn_);
      const double hi = std::max(0.0, turn_);
      if (phi >= lo && phi <= hi) {
        const double sigma = entry_len_ + phi / curvature_;
        consider(sigma, point_at_arclength(sigma));
      }
    }
    // Exit straight, extended forwards.
    {
      const double t = (q - arc_end_).dot(exit_dir_);
      const double along = std::max(0.0, t);
      const double sigma = entry_len_ + arc_len_ + std::min(along, exit_len_);
      consider(sigma, arc_end_ + along * exit_dir_);
    }
    return best;
  }

  // Net wall force on one probe of the instrument.
  [[nodiscard]] Vec3 probe_force(const Vec3& q) const {
    const NearestCenterline n = nearest_centerline(q);
    if (n.distance <= kCenterlineTolerance) return Vec3::Zero();
    // max(0, d + overlap) - max(0, overlap - d), without cancellation.
    const double overlap = params_.instrument_radius_mm - anatomy_.radius_at(n.s);
    const double d = n.distance;
    double penetration = 0.0;
    if (d < std::abs(overlap)) {
      penetration = overlap > 0.0 ? 2.0 * d : 0.0;
    } else {
      penetration = d + overlap;
    }
    const double magnitude = params_.k_wall * penetration;
    if (magnitude == 0.0) return Vec3::Zero();
    return (magnitude / n.distance) * (n.point - q);
  }

  [[nodiscard]] std::vector<Vec3> instrument_samples(const InstrumentPose& pose) const {
    std::vector<Vec3> samples;
    samples.reserve(params_.shaft_sample_count + 1);
    samples.push_back(pose.position);
    const Vec3 axis = pose.axis();
    for (int j = 1; j <= params_.shaft_sample_count; ++j)
      samples.push_back(pose.position - (j * params_.shaft_sample_spacing_mm) * axis);
    return samples;
  }

  // Total wall force on the instrument, norm clamped to force_cap.
  [[nodiscard]] Vec3 contact_force(const InstrumentPose& pose) const {
    Vec3 total = Vec3::Zero();
    for (const Vec3& q : instrument_samples(pose)) total += probe_force(q);
    const double norm = total.norm();
    if (!std::isfinite(norm)) return Vec3::Zero();
    if (norm > params_.force_cap) {
      total *= params_.force_cap / norm;
      while (total.norm() > params_.force_cap) total *= 1.0 - std::numeric_limits<double>::epsilon();
    }
    return total;
  }

  [[nodiscard]] ResetResult reset(std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> pos_noise(-params_.reset_position_noise_mm,
                                                     params_.reset_position_noise_mm);
    std::uniform_real_distribution<double> ang_noise(-params_.reset_angle_noise_rad, params_.reset_angle_noise_rad);
    EnvState state;
    state.pose = anatomy_.entry_pose;
    for (int i = 0; i < 3; ++i) state.pose.position(i) += pos_noise(rng);
    state.pose.orientation(1) = wrap_angle(state.pose.orientation(1) + ang_noise(rng));
    state.pose.orientation(2) = wrap_angle(state.pose.orientation(2) + ang_noise(rng));
    state.last_contact_force = contact_force(state.pose);
    return {state, observe(state)};
  }

  // Applies one scaled action increment. Throws StateError on a finished episode.
  [[nodiscard]] StepResult step(const EnvState& state, const Vector& action) const {
    if (state.done) throw StateError("env_step: episode already finished");
    if (action.size() != kActionDim) throw InvalidArgument("env_step: action must have 5 components");
    for (Eigen::Index i = 0; i < action.size(); ++i) {
      if (!(action(i) >= -1.0 && action(i) <= 1.0)) throw InvalidArgument("env_step: action outside [-1, 1]");
    }

    StepResult out{state, Vector(), {}};
    EnvState& next = out.state;
    const double box = params_.workspace_half_extent_mm;
    for (int i = 0; i < 3; ++i) {
      next.pose.position(i) =
          std::clamp(next.pose.position(i) + action(i) * params_.max_translation_step_mm, -box, box);
    }
    next.pose.orientation(1) = wrap_angle(next.pose.orientation(1) + action(3) * params_.max_rotation_step_rad);
    next.pose.orientation(2) = wrap_angle(next.pose.orientation(2) + action(4) * params_.max_rotation_step_rad);
    next.step_count += 1;
    next.elapsed_time = next.step_count * params_.dt;
    next.last_contact_force = contact_force(next.pose);

    if (next.next_checkpoint_index < checkpoint_count() &&
        (next.pose.position - checkpoints_[next.next_checkpoint_index]).norm() <= anatomy_.trigger_radius_mm) {
      next.next_checkpoint_index += 1;
      out.events.checkpoint_reached = true;
    }
    if (next.next_checkpoint_index == checkpoint_count()) {
      next.done = true;
      next.success = true;
    } else if (next.step_count >= max_steps()) {
      next.done = true;
    }

    out.events.checkpoint_distance_mm = checkpoint_distance(next);
    out.events.applied_force_n = next.last_contact_force.norm();
    out.events.dt = params_.dt;
    out.observation = observe(next);
    return out;
  }

  [[nodiscard]] double checkpoint_distance(const EnvState& state) const {
    if (state.next_checkpoint_index >= checkpoint_count()) return 0.0;
    return (checkpoints_[state.next_checkpoint_index] - state.pose.position).norm();
  }

  // [tip / canal_length (3), roll pitch yaw (3), unit target direction (3), force / force_cap (3)]
  [[nodiscard]] Vector observe(const EnvState& state) const {
    Vector obs(kObservationDim);
    obs.segment<3>(0) = state.pose.position / anatomy_.canal_length_mm;
    obs.segment<3>(3) = state.pose.orientation;
    Vec3 target = Vec3::Zero();
    if (state.next_checkpoint_index < checkpoint_count()) {
      const Vec3 delta = checkpoints_[state.next_checkpoint_index] - state.pose.position;
      const double norm = delta.norm();
      if (norm > 0.0) target = delta / norm;
    }
    obs.segment<3>(6) = target;
    if (params_.force_observation == ForceObservation::Vector) {
      obs.segment<3>(9) = state.last_contact_force / params_.force_cap;
    } else {
      obs.segment<3>(9) = Vec3(state.last_contact_force.norm() / params_.force_cap, 0.0, 0.0);
    }
    return obs;
  }

 private:
  [[nodiscard]] Vec3 point_at_arclength(double sigma) const {
    if (sigma <= entry_len_) return {sigma, 0.0, 0.0};
    const double in_arc = std::min(sigma, entry_len_ + arc_len_) - entry_len_;
    Vec3 p;
    if (std::abs(curvature_) < 1e-12) {
      p = Vec3(entry_len_ + in_arc, 0.0, 0.0);
    } else {
      const double phi = curvature_ * in_arc;
      p = Vec3(entry_len_ + std::sin(phi) / curvature_, 0.0, (1.0 - std::cos(phi)) / curvature_);
    }
    if (sigma <= entry_len_ + arc_len_) return p;
    return p + (sigma - entry_len_ - arc_len_) * Vec3(std::cos(turn_), 0.0, std::sin(turn_));
  }

  [[nodiscard]] Vec3 tangent_at_arclength(double sigma) const {
    const double phi = curvature_ * std::clamp(sigma - entry_len_, 0.0, arc_len_);
    return {std::cos(phi), 0.0, std::sin(phi)};
  }

  CanalAnatomy anatomy_;
  EnvParams params_;
  double entry_len_ = 0.0;
  double arc_len_ = 0.0;
  double exit_len_ = 0.0;
  double turn_ = 0.0;
  double curvature_ = 0.0;
  Vec3 arc_end_ = Vec3::Zero();
  Vec3 exit_dir_ = Vec3::UnitX();
  std::vector<Vec3> checkpoints_;
};

}  // namespace canalrl
