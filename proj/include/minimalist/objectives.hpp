#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "minimalist/rng.hpp"

namespace minimalist {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class ObjectiveKind { mine, fdiv, bce };

inline std::string to_string(ObjectiveKind k) {
  switch (k) {
    case ObjectiveKind::mine: return "mine";
    case ObjectiveKind::fdiv: return "fdiv";
    case ObjectiveKind::bce: return "bce";
  }
  return "?";
}

inline ObjectiveKind objective_from_string(const std::string& s) {
  if (s == "mine" || s == "MINE") return ObjectiveKind::mine;
  if (s == "fdiv" || s == "FDIV") return ObjectiveKind::fdiv;
  if (s == "bce" || s == "BCE") return ObjectiveKind::bce;
  throw std::invalid_argument("unknown objective: " + s + " (expected mine|fdiv|bce)");
}

// Matched joint pairs (x_i, theta_i) and index-shuffled independent pairs
// (x_i, theta_j), both already encoded as network input rows. The ratio
// k = |indep| / |joint| is held exactly.
struct PairSet {
  MatrixXd joint_inputs;  // [N x d_in]
  MatrixXd indep_inputs;  // [k*N x d_in]
  int shuffle_ratio = 1;  // k
};

// Builds the independent set from k distinct nonzero cyclic offsets:
// pass j pairs row i with the theta block of row (i + s_j) mod N. Cyclic
// nonzero shifts are fixed-point-free, so no joint pair leaks into the
// independent set, and distinct offsets never duplicate a cross pair.
inline PairSet shuffle_pairs(const MatrixXd& joint_inputs, int theta_dim, int k, Rng& rng) {
  const Eigen::Index n = joint_inputs.rows();
  if (n < 2) throw std::invalid_argument("shuffle_pairs: need at least 2 joint pairs");
  if (theta_dim < 1 || theta_dim >= joint_inputs.cols())
    throw std::invalid_argument("shuffle_pairs: bad theta_dim");
  if (k < 1 || k >= n)
    throw std::invalid_argument("shuffle_pairs: require 1 <= k <= N-1, got k=" +
                                std::to_string(k) + " with N=" + std::to_string(n));
  std::vector<Eigen::Index> offsets;
  offsets.reserve(static_cast<std::size_t>(k));
  std::uniform_int_distribution<Eigen::Index> pick(1, n - 1);
  while (offsets.size() < static_cast<std::size_t>(k)) {
    Eigen::Index s = pick(rng);
    if (std::find(offsets.begin(), offsets.end(), s) == offsets.end()) offsets.push_back(s);
  }

  const Eigen::Index x_dim = joint_inputs.cols() - theta_dim;
  PairSet out;
  out.joint_inputs = joint_inputs;
  out.shuffle_ratio = k;
  out.indep_inputs.resize(static_cast<Eigen::Index>(k) * n, joint_inputs.cols());
  for (int pass = 0; pass < k; ++pass) {
    Eigen::Index s = offsets[static_cast<std::size_t>(pass)];
    Eigen::Index base = static_cast<Eigen::Index>(pass) * n;
    for (Eigen::Index i = 0; i < n; ++i) {
      out.indep_inputs.block(base + i, 0, 1, x_dim) = joint_inputs.block(i, 0, 1, x_dim);
      out.indep_inputs.block(base + i, x_dim, 1, theta_dim) =
          joint_inputs.block((i + s) % n, x_dim, 1, theta_dim);
    }
  }
  return out;
}

// Loss value to minimize, the MI-comparable bound where defined, and the
// exact partials of the loss with respect to each network output.
struct ObjectiveValue {
  double loss = 0.0;
  double bound = 0.0;
  VectorXd grads_joint;
  VectorXd grads_indep;
  bool clamped = false;  // FDIV exponent guard triggered
};

inline double log_mean_exp(const VectorXd& v) {
  double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().mean());
}

// Donsker-Varadhan bound  M = -mean(E_joint) - log mean exp(-E_indep),
// minimized as loss = -M + z_gauge * (log Z~)^2. The gauge term pins the
// additive energy constant at log Z~ = 0 without moving the optimum of
// the bound itself.
inline ObjectiveValue mine_loss(const VectorXd& e_joint, const VectorXd& e_indep,
                                double z_gauge_strength) {
  if (e_joint.size() < 1 || e_indep.size() < 1)
    throw std::invalid_argument("mine_loss: empty batch");
  const double m = static_cast<double>(e_joint.size());
  const double log_z = log_mean_exp(-e_indep);
  ObjectiveValue v;
  v.bound = -e_joint.mean() - log_z;
  v.loss = -v.bound + z_gauge_strength * log_z * log_z;
  v.grads_joint = VectorXd::Constant(e_joint.size(), 1.0 / m);
  // d log_z / d e_j = -softmax(-e)_j
  VectorXd softmax = (-e_indep.array() - (-e_indep).maxCoeff()).exp();
  softmax /= softmax.sum();
  v.grads_indep = -(1.0 + 2.0 * z_gauge_strength * log_z) * softmax;
  return v;
}

// f-divergence bound  L_f = -mean(E_joint) - mean(exp(-E_indep - 1)).
// Exponents are clamped at 700 to survive wild early-training energies;
// the clamp is reported so callers can flag it.
inline ObjectiveValue fdiv_loss(const VectorXd& e_joint, const VectorXd& e_indep) {
  if (e_joint.size() < 1 || e_indep.size() < 1)
    throw std::invalid_argument("fdiv_loss: empty batch");
  const double m = static_cast<double>(e_joint.size());
  const double n = static_cast<double>(e_indep.size());
  ObjectiveValue v;
  Eigen::ArrayXd expo = (-e_indep.array() - 1.0).min(700.0);
  v.clamped = ((-e_indep.array() - 1.0) > 700.0).any();
  Eigen::ArrayXd w = expo.exp();
  v.bound = -e_joint.mean() - w.mean();
  v.loss = -v.bound;
  v.grads_joint = VectorXd::Constant(e_joint.size(), 1.0 / m);
  v.grads_indep = (-w / n).matrix();
  return v;
}

namespace detail {
inline double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
inline double sigmoid(double x) { return x > 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }
}  // namespace detail

// Binary cross-entropy of the joint-vs-independent classifier
//   d = sigmoid(f - log k),
// where the network output f stands for the log likelihood-to-evidence
// ratio (f = -E - log Z). S = -mean log d(f_joint) - k mean log(1 - d(f_indep)),
// evaluated through softplus so saturation stays finite.
inline ObjectiveValue bce_loss(const VectorXd& f_joint, const VectorXd& f_indep, int k) {
  if (f_joint.size() < 1 || f_indep.size() < 1)
    throw std::invalid_argument("bce_loss: empty batch");
  if (k < 1) throw std::invalid_argument("bce_loss: k must be >= 1");
  const double m = static_cast<double>(f_joint.size());
  const double n = static_cast<double>(f_indep.size());
  const double log_k = std::log(static_cast<double>(k));
  ObjectiveValue v;
  double loss = 0.0;
  v.grads_joint.resize(f_joint.size());
  for (Eigen::Index i = 0; i < f_joint.size(); ++i) {
    double z = f_joint(i) - log_k;
    loss += detail::softplus(-z) / m;
    v.grads_joint(i) = (detail::sigmoid(z) - 1.0) / m;
  }
  v.grads_indep.resize(f_indep.size());
  for (Eigen::Index j = 0; j < f_indep.size(); ++j) {
    double z = f_indep(j) - log_k;
    loss += static_cast<double>(k) * detail::softplus(z) / n;
    v.grads_indep(j) = static_cast<double>(k) * detail::sigmoid(z) / n;
  }
  v.loss = loss;
  // Mean log predicted ratio over the joint set; an MI estimate in the
  // same spirit as the other bounds, reported for monitoring.
  v.bound = f_joint.mean();
  return v;
}

inline ObjectiveValue objective_loss(ObjectiveKind kind, const VectorXd& out_joint,
                                     const VectorXd& out_indep, int k, double z_gauge_strength) {
  switch (kind) {
    case ObjectiveKind::mine: return mine_loss(out_joint, out_indep, z_gauge_strength);
    case ObjectiveKind::fdiv: return fdiv_loss(out_joint, out_indep);
    case ObjectiveKind::bce: return bce_loss(out_joint, out_indep, k);
  }
  throw std::logic_error("unreachable");
}

// Each objective's optimum fixes the network output up to a known
// constant. These maps move between the raw output, the energy, and the
// log likelihood-to-evidence ratio:
//   MINE: output is E with gauge log Z = 0, so log r = -f
//   FDIV: output is E with E = -log r - 1,  so log r = -f - 1
//   BCE:  output is log r itself,           so E = -f up to log Z
inline double energy_from_output(ObjectiveKind kind, double f) {
  switch (kind) {
    case ObjectiveKind::mine: return f;
    case ObjectiveKind::fdiv: return f;
    case ObjectiveKind::bce: return -f;
  }
  throw std::logic_error("unreachable");
}

inline double log_ratio_from_output(ObjectiveKind kind, double f) {
  switch (kind) {
    case ObjectiveKind::mine: return -f;
    case ObjectiveKind::fdiv: return -f - 1.0;
    case ObjectiveKind::bce: return f;
  }
  throw std::logic_error("unreachable");
}

inline VectorXd log_ratio_from_output(ObjectiveKind kind, const VectorXd& f) {
  switch (kind) {
    case ObjectiveKind::mine: return -f;
    case ObjectiveKind::fdiv: return (-f.array() - 1.0).matrix();
    case ObjectiveKind::bce: return f;
  }
  throw std::logic_error("unreachable");
}

}  // namespace minimalist
