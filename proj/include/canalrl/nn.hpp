#pragma once

// Dense multilayer perceptrons with hand-written backpropagation, an Adam
// optimizer and the tanh-squashed Gaussian head used by the policy network.
//
// Networks use column-major batches: a batch of inputs is a matrix with one
// sample per column. Hidden layers are rectified-linear, the output layer is
// linear.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "canalrl/errors.hpp"

namespace canalrl {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct MlpParams {
  std::vector<int> layer_sizes;
  std::vector<Matrix> weights;  // weights[l] is (layer_sizes[l+1] x layer_sizes[l])
  std::vector<Vector> biases;   // biases[l] has layer_sizes[l+1] entries

  [[nodiscard]] std::size_t num_layers() const { return weights.size(); }
  [[nodiscard]] int input_size() const { return layer_sizes.front(); }
  [[nodiscard]] int output_size() const { return layer_sizes.back(); }

  [[nodiscard]] std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
    return n;
  }

  [[nodiscard]] bool same_shape(const MlpParams& other) const { return layer_sizes == other.layer_sizes; }

  [[nodiscard]] bool all_finite() const {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
    }
    return true;
  }

  // All-zero network with the given topology. Also used as a gradient accumulator.
  static MlpParams zeros(const std::vector<int>& sizes) {
    detail::require(sizes.size() >= 2, "MlpParams: need at least an input and an output layer");
    for (int s : sizes) detail::require(s > 0, "MlpParams: layer sizes must be positive");
    MlpParams p;
    p.layer_sizes = sizes;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
      p.weights.push_back(Matrix::Zero(sizes[l + 1], sizes[l]));
      p.biases.push_back(Vector::Zero(sizes[l + 1]));
    }
    return p;
  }

  void set_zero() {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      weights[l].setZero();
      biases[l].setZero();
    }
  }

  // Exact (bitwise) equality of topology and every parameter.
  friend bool operator==(const MlpParams& a, const MlpParams& b) {
    if (a.layer_sizes != b.layer_sizes) return false;
    for (std::size_t l = 0; l < a.weights.size(); ++l) {
      if (a.weights[l] != b.weights[l] || a.biases[l] != b.biases[l]) return false;
    }
    return true;
  }
};

// Uniform weights in +-1/sqrt(fan_in), zero biases.
template <class Rng>
MlpParams init_mlp(const std::vector<int>& sizes, Rng& rng) {
  MlpParams p = MlpParams::zeros(sizes);
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(sizes[l]));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index j = 0; j < p.weights[l].cols(); ++j)
      for (Eigen::Index i = 0; i < p.weights[l].rows(); ++i) p.weights[l](i, j) = dist(rng);
  }
  return p;
}

// Flat parameter vector: per layer, weights in row-major order, then biases.
inline std::vector<double> flatten(const MlpParams& p) {
  std::vector<double> out;
  out.reserve(p.parameter_count());
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    const Matrix& w = p.weights[l];
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) out.push_back(w(i, j));
    for (Eigen::Index i = 0; i < p.biases[l].size(); ++i) out.push_back(p.biases[l](i));
  }
  return out;
}

inline MlpParams unflatten(const std::vector<int>& sizes, const std::vector<double>& flat) {
  MlpParams p = MlpParams::zeros(sizes);
  detail::require(flat.size() == p.parameter_count(), "unflatten: parameter count does not match layer sizes");
  std::size_t k = 0;
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    Matrix& w = p.weights[l];
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = flat[k++];
    for (Eigen::Index i = 0; i < p.biases[l].size(); ++i) p.biases[l](i) = flat[k++];
  }
  return p;
}

// Activations of every layer for a batch; activations[0] is the input.
struct ForwardCache {
  std::vector<Matrix> activations;
  [[nodiscard]] const Matrix& output() const { return activations.back(); }
};

inline ForwardCache mlp_forward_cached(const MlpParams& params, const Matrix& inputs) {
  if (inputs.rows() != params.input_size()) {
    throw InvalidArgument("mlp_forward: input has " + std::to_string(inputs.rows()) + " rows, network expects " +
                          std::to_string(params.input_size()));
  }
  ForwardCache cache;
  cache.activations.reserve(params.num_layers() + 1);
  cache.activations.push_back(inputs);
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    Matrix z = params.weights[l] * cache.activations.back();
    z.colwise() += params.biases[l];
    if (l + 1 < params.num_layers()) z = z.cwiseMax(0.0);
    cache.activations.push_back(std::move(z));
  }
  return cache;
}

inline Matrix mlp_forward_batch(const MlpParams& params, const Matrix& inputs) {
  return mlp_forward_cached(params, inputs).output();
}

inline Vector mlp_forward(const MlpParams& params, const Vector& input) {
  return mlp_forward_batch(params, input).col(0);
}

// Backpropagates grad_output (one column per sample) through a cached forward
// pass. Parameter gradients are summed over the batch and added to *grad_params
// when it is non-null. Returns the gradient with respect to the inputs.
inline Matrix mlp_backward_batch(const MlpParams& params, const ForwardCache& cache, const Matrix& grad_output,
                                 MlpParams* grad_params) {
  if (grad_output.rows() != params.output_size() || grad_output.cols() != cache.output().cols()) {
    throw InvalidArgument("mlp_backward: grad_output shape does not match the network output");
  }
  if (grad_params != nullptr && !grad_params->same_shape(params)) {
    throw InvalidArgument("mlp_backward: gradient accumulator has the wrong topology");
  }
  Matrix delta = grad_output;
  for (std::size_t l = params.num_layers(); l-- > 0;) {
    const Matrix& below = cache.activations[l];
    if (grad_params != nullptr) {
      grad_params->weights[l].noalias() += delta * below.transpose();
      grad_params->biases[l] += delta.rowwise().sum();
    }
    Matrix upstream = params.weights[l].transpose() * delta;
    if (l > 0) upstream = upstream.cwiseProduct((below.array() > 0.0).cast<double>().matrix());
    delta = std::move(upstream);
  }
  return delta;
}

struct MlpGradients {
  MlpParams grad_params;
  Vector grad_input;
};

// Gradients of L = grad_output . mlp_forward(params, input).
inline MlpGradients mlp_backward(const MlpParams& params, const Vector& input, const Vector& grad_output) {
  if (grad_output.size() != params.output_size()) {
    throw InvalidArgument("mlp_backward: grad_output length does not match the network output");
  }
  const ForwardCache cache = mlp_forward_cached(params, input);
  MlpGradients g{MlpParams::zeros(params.layer_sizes), Vector()};
  g.grad_input = mlp_backward_batch(params, cache, grad_output, &g.grad_params).col(0);
  return g;
}

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  MlpParams first_moment;
  MlpParams second_moment;
  std::uint64_t step_count = 0;
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_params(const MlpParams& params, double learning_rate = 3e-4) {
    AdamState s;
    s.first_moment = MlpParams::zeros(params.layer_sizes);
    s.second_moment = MlpParams::zeros(params.layer_sizes);
    s.learning_rate = learning_rate;
    return s;
  }

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

// In-place bias-corrected Adam update. Throws before touching anything if a
// gradient is non-finite or shapes disagree.
inline void adam_update(MlpParams& params, const MlpParams& grads, AdamState& state) {
  if (!params.same_shape(grads) || !params.same_shape(state.first_moment) ||
      !params.same_shape(state.second_moment)) {
    throw InvalidArgument("adam_step: parameter, gradient and moment shapes differ");
  }
  if (!grads.all_finite()) throw InvalidArgument("adam_step: non-finite gradient, update rejected");

  const std::uint64_t t = state.step_count + 1;
  const double b1 = state.beta1;
  const double b2 = state.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
  const double lr = state.learning_rate;
  const double eps = state.epsilon;

  auto apply = [&](auto& p, const auto& g, auto& m, auto& v) {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  };
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    apply(params.weights[l], grads.weights[l], state.first_moment.weights[l], state.second_moment.weights[l]);
    apply(params.biases[l], grads.biases[l], state.first_moment.biases[l], state.second_moment.biases[l]);
  }
  state.step_count = t;
}

inline std::pair<MlpParams, AdamState> adam_step(const MlpParams& params, const MlpParams& grads,
                                                 const AdamState& state) {
  MlpParams p = params;
  AdamState s = state;
  adam_update(p, grads, s);
  return {std::move(p), std::move(s)};
}

// ---------------------------------------------------------------------------
// Tanh-squashed diagonal Gaussian

inline constexpr int kActionDim = 5;
inline constexpr double kLogStdMin = -20.0;
inline constexpr double kLogStdMax = 2.0;
inline constexpr double kSquashFloor = 1e-6;

struct GaussianHeadOutput {
  Vector mean;
  Vector log_std;     // clamped
  Vector pre_squash;  // u = mean + exp(log_std) * noise
  Vector action;      // tanh(u)
  double log_prob = 0.0;
};

inline double normal_log_density(double x, double mean, double log_std) {
  const double z = (x - mean) / std::exp(log_std);
  return -0.5 * z * z - log_std - 0.5 * std::log(2.0 * std::numbers::pi);
}

// Reparameterized sample. raw_log_std is clamped to [kLogStdMin, kLogStdMax].
inline GaussianHeadOutput gaussian_sample(const Vector& mean, const Vector& raw_log_std, const Vector& noise) {
  detail::require(mean.size() == raw_log_std.size() && mean.size() == noise.size(),
                  "gaussian_sample: mean, log_std and noise lengths differ");
  GaussianHeadOutput out;
  out.mean = mean;
  out.log_std = raw_log_std.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
  out.pre_squash = mean + out.log_std.array().exp().matrix().cwiseProduct(noise);
  out.action = out.pre_squash.array().tanh().matrix();
  for (Eigen::Index i = 0; i < mean.size(); ++i) {
    const double t = out.action(i);
    out.log_prob += normal_log_density(out.pre_squash(i), mean(i), out.log_std(i)) - std::log(1.0 - t * t + kSquashFloor);
  }
  return out;
}

struct GaussianHeadGrad {
  Vector d_mean;
  Vector d_raw_log_std;
};

// Chain rule through gaussian_sample for a loss L(action, log_prob), given
// dL/daction and dL/dlog_prob, holding the noise fixed.
inline GaussianHeadGrad gaussian_sample_backward(const Vector& raw_log_std, const GaussianHeadOutput& sample,
                                                 const Vector& noise, const Vector& grad_action,
                                                 double grad_log_prob) {
  const Eigen::Index n = sample.action.size();
  GaussianHeadGrad g{Vector(n), Vector(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = sample.action(i);
    const double one_minus_t2 = 1.0 - t * t;
    const double d_logp_du = 2.0 * t * one_minus_t2 / (one_minus_t2 + kSquashFloor);
    const double d_u = grad_action(i) * one_minus_t2 + grad_log_prob * d_logp_du;
    g.d_mean(i) = d_u;
    const bool inside = raw_log_std(i) >= kLogStdMin && raw_log_std(i) <= kLogStdMax;
    const double sigma = std::exp(sample.log_std(i));
    g.d_raw_log_std(i) = inside ? d_u * sigma * noise(i) - grad_log_prob : 0.0;
  }
  return g;
}

}  // namespace canalrl
