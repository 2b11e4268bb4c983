#pragma once

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "json.hpp"
#include "minimalist/rng.hpp"

namespace minimalist {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Vectorized tanh built on Eigen's packet exp. Matches std::tanh to a few
// ulp and is an order of magnitude faster, which matters because the two
// hidden layers dominate training cost.
template <typename Derived>
auto fast_tanh(const Eigen::ArrayBase<Derived>& x) {
  return 1.0 - 2.0 / ((2.0 * x).exp() + 1.0);
}

// Weights and biases of the scalar-output perceptron
//   f(v) = b_out + w_out . tanh(b2 + w2 . tanh(b1 + w1 . v)).
// The same shape triple also carries gradients (GradientSet) and RMSprop
// second-moment accumulators.
struct MlpParams {
  MatrixXd w1;     // [hidden x input_dim]
  VectorXd b1;     // [hidden]
  MatrixXd w2;     // [hidden x hidden]
  VectorXd b2;     // [hidden]
  VectorXd w_out;  // [hidden]
  double b_out = 0.0;

  int input_dim() const { return static_cast<int>(w1.cols()); }
  int hidden_width() const { return static_cast<int>(w1.rows()); }

  bool shapes_consistent() const {
    Eigen::Index h = w1.rows();
    return b1.size() == h && w2.rows() == h && w2.cols() == h && b2.size() == h &&
           w_out.size() == h;
  }

  bool all_finite() const {
    return w1.allFinite() && b1.allFinite() && w2.allFinite() && b2.allFinite() &&
           w_out.allFinite() && std::isfinite(b_out);
  }

  void set_zero() {
    w1.setZero();
    b1.setZero();
    w2.setZero();
    b2.setZero();
    w_out.setZero();
    b_out = 0.0;
  }

  void add_scaled(const MlpParams& other, double scale) {
    w1 += scale * other.w1;
    b1 += scale * other.b1;
    w2 += scale * other.w2;
    b2 += scale * other.b2;
    w_out += scale * other.w_out;
    b_out += scale * other.b_out;
  }
};

using GradientSet = MlpParams;

inline MlpParams zeros_like(const MlpParams& p) {
  MlpParams z;
  z.w1 = MatrixXd::Zero(p.w1.rows(), p.w1.cols());
  z.b1 = VectorXd::Zero(p.b1.size());
  z.w2 = MatrixXd::Zero(p.w2.rows(), p.w2.cols());
  z.b2 = VectorXd::Zero(p.b2.size());
  z.w_out = VectorXd::Zero(p.w_out.size());
  z.b_out = 0.0;
  return z;
}

// Glorot-style uniform init keeps tanh pre-activations away from the
// saturated regime; biases start at zero.
inline MlpParams init_mlp(int input_dim, int hidden_width, Rng& rng) {
  if (input_dim < 1 || hidden_width < 1) throw std::invalid_argument("init_mlp: bad dimensions");
  auto uniform_layer = [&rng](Eigen::Index rows, Eigen::Index cols, int fan_in, int fan_out) {
    double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> u(-limit, limit);
    MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = u(rng);
    return m;
  };
  MlpParams p;
  p.w1 = uniform_layer(hidden_width, input_dim, input_dim, hidden_width);
  p.b1 = VectorXd::Zero(hidden_width);
  p.w2 = uniform_layer(hidden_width, hidden_width, hidden_width, hidden_width);
  p.b2 = VectorXd::Zero(hidden_width);
  p.w_out = uniform_layer(hidden_width, 1, hidden_width, 1).col(0);
  p.b_out = 0.0;
  return p;
}

// Activations of one batched pass, kept so backward can reuse them.
struct ForwardCache {
  MatrixXd a1;  // [n x hidden], tanh of first-layer pre-activations
  MatrixXd a2;  // [n x hidden]
  VectorXd out;
};

inline void forward_batch_cached(const MlpParams& p, const MatrixXd& inputs, ForwardCache& cache) {
  if (!p.shapes_consistent()) throw std::invalid_argument("forward: inconsistent parameter shapes");
  if (inputs.cols() != p.input_dim())
    throw std::invalid_argument("forward: input has " + std::to_string(inputs.cols()) +
                                " columns, expected " + std::to_string(p.input_dim()));
  if (inputs.rows() < 1) throw std::invalid_argument("forward: empty batch");
  cache.a1.noalias() = inputs * p.w1.transpose();
  cache.a1.rowwise() += p.b1.transpose();
  cache.a1 = fast_tanh(cache.a1.array());
  cache.a2.noalias() = cache.a1 * p.w2.transpose();
  cache.a2.rowwise() += p.b2.transpose();
  cache.a2 = fast_tanh(cache.a2.array());
  cache.out.noalias() = cache.a2 * p.w_out;
  cache.out.array() += p.b_out;
}

inline VectorXd forward_batch(const MlpParams& p, const MatrixXd& inputs) {
  ForwardCache cache;
  forward_batch_cached(p, inputs, cache);
  return cache.out;
}

inline double forward(const MlpParams& p, const VectorXd& input) {
  return forward_batch(p, input.transpose())(0);
}

// Exact chain rule for the two-layer tanh architecture, batched as GEMMs.
// output_grads[i] is dLoss/df(inputs[i]); the result is the loss gradient
// summed over the batch.
inline void backward_cached(const MlpParams& p, const MatrixXd& inputs, const ForwardCache& cache,
                            const VectorXd& output_grads, GradientSet& grads) {
  if (output_grads.size() != inputs.rows())
    throw std::invalid_argument("backward: output_grads length must match batch size");
  grads.b_out = output_grads.sum();
  grads.w_out.noalias() = cache.a2.transpose() * output_grads;
  // dZ2 = (g w_out^T) .* (1 - a2^2)
  MatrixXd dz2 = output_grads * p.w_out.transpose();
  dz2.array() *= 1.0 - cache.a2.array().square();
  grads.b2 = dz2.colwise().sum();
  grads.w2.noalias() = dz2.transpose() * cache.a1;
  MatrixXd dz1 = dz2 * p.w2;
  dz1.array() *= 1.0 - cache.a1.array().square();
  grads.b1 = dz1.colwise().sum();
  grads.w1.noalias() = dz1.transpose() * inputs;
}

inline GradientSet backward(const MlpParams& p, const MatrixXd& inputs,
                            const VectorXd& output_grads) {
  ForwardCache cache;
  forward_batch_cached(p, inputs, cache);
  GradientSet grads = zeros_like(p);
  backward_cached(p, inputs, cache, output_grads, grads);
  return grads;
}

// Gradient of the penalty l2_strength * sum(w^2) over weight matrices.
// Biases are left unregularized.
inline GradientSet l2_gradient(const MlpParams& p, double l2_strength) {
  GradientSet g = zeros_like(p);
  if (l2_strength == 0.0) return g;
  g.w1 = 2.0 * l2_strength * p.w1;
  g.w2 = 2.0 * l2_strength * p.w2;
  g.w_out = 2.0 * l2_strength * p.w_out;
  return g;
}

inline double l2_penalty(const MlpParams& p, double l2_strength) {
  return l2_strength * (p.w1.squaredNorm() + p.w2.squaredNorm() + p.w_out.squaredNorm());
}

struct RmsPropState {
  MlpParams mean_square;
  double decay = 0.9;
  double epsilon = 1e-8;
};

inline RmsPropState init_rmsprop(const MlpParams& p, double decay = 0.9, double epsilon = 1e-8) {
  return RmsPropState{zeros_like(p), decay, epsilon};
}

// ms <- decay*ms + (1-decay)*g^2 ; p <- p - lr * g / sqrt(ms + eps)
inline void rmsprop_step(MlpParams& params, RmsPropState& state, const GradientSet& grads,
                         double learning_rate) {
  auto update = [&](auto& p, const auto& g, auto& ms) {
    ms.array() = state.decay * ms.array() + (1.0 - state.decay) * g.array().square();
    p.array() -= learning_rate * g.array() / (ms.array() + state.epsilon).sqrt();
  };
  update(params.w1, grads.w1, state.mean_square.w1);
  update(params.b1, grads.b1, state.mean_square.b1);
  update(params.w2, grads.w2, state.mean_square.w2);
  update(params.b2, grads.b2, state.mean_square.b2);
  update(params.w_out, grads.w_out, state.mean_square.w_out);
  double& ms = state.mean_square.b_out;
  ms = state.decay * ms + (1.0 - state.decay) * grads.b_out * grads.b_out;
  params.b_out -= learning_rate * grads.b_out / std::sqrt(ms + state.epsilon);
}

namespace detail {
inline nlohmann::json matrix_to_json(const MatrixXd& m) {
  // row-major nested arrays
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline MatrixXd matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty()) throw std::runtime_error("bad matrix in checkpoint");
  MatrixXd m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(j[0].size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      m(r, c) = j[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
  return m;
}

inline nlohmann::json vector_to_json(const VectorXd& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline VectorXd vector_from_json(const nlohmann::json& j) {
  VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = j[static_cast<std::size_t>(i)].get<double>();
  return v;
}
}  // namespace detail

inline nlohmann::json mlp_to_json(const MlpParams& p) {
  return nlohmann::json{{"arch", {{"d_in", p.input_dim()}, {"h", p.hidden_width()}}},
                        {"w1", detail::matrix_to_json(p.w1)},
                        {"b1", detail::vector_to_json(p.b1)},
                        {"w2", detail::matrix_to_json(p.w2)},
                        {"b2", detail::vector_to_json(p.b2)},
                        {"w_out", detail::vector_to_json(p.w_out)},
                        {"b_out", p.b_out}};
}

inline MlpParams mlp_from_json(const nlohmann::json& j) {
  MlpParams p;
  p.w1 = detail::matrix_from_json(j.at("w1"));
  p.b1 = detail::vector_from_json(j.at("b1"));
  p.w2 = detail::matrix_from_json(j.at("w2"));
  p.b2 = detail::vector_from_json(j.at("b2"));
  p.w_out = detail::vector_from_json(j.at("w_out"));
  p.b_out = j.at("b_out").get<double>();
  if (!p.shapes_consistent()) throw std::runtime_error("inconsistent shapes in checkpoint");
  return p;
}

}  // namespace minimalist
