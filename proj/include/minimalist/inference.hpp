#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "minimalist/errors.hpp"
#include "minimalist/objectives.hpp"
#include "minimalist/parallel.hpp"
#include "minimalist/rng.hpp"
#include "minimalist/simulators.hpp"
#include "minimalist/training.hpp"

namespace minimalist {

// Discretized parameter scan. Nodes are enumerated row-major over the
// axes; `density` integrates to 1 under the trapezoidal rule.
struct PosteriorGrid {
  std::vector<VectorXd> axes;
  VectorXd log_density;
  VectorXd density;
  double normalization = 0.0;  // trapezoidal mass before normalization (max-shifted)

  std::size_t size() const {
    std::size_t n = 1;
    for (const auto& a : axes) n *= static_cast<std::size_t>(a.size());
    return n;
  }

  VectorXd theta_at(std::size_t flat) const {
    VectorXd theta(static_cast<Eigen::Index>(axes.size()));
    for (int d = static_cast<int>(axes.size()) - 1; d >= 0; --d) {
      std::size_t n = static_cast<std::size_t>(axes[static_cast<std::size_t>(d)].size());
      theta(d) = axes[static_cast<std::size_t>(d)](static_cast<Eigen::Index>(flat % n));
      flat /= n;
    }
    return theta;
  }

  // Product trapezoid weight of a node.
  double weight_at(std::size_t flat) const {
    double w = 1.0;
    for (int d = static_cast<int>(axes.size()) - 1; d >= 0; --d) {
      const VectorXd& a = axes[static_cast<std::size_t>(d)];
      std::size_t n = static_cast<std::size_t>(a.size());
      std::size_t i = flat % n;
      double step = (a(a.size() - 1) - a(0)) / static_cast<double>(a.size() - 1);
      w *= (i == 0 || i + 1 == n) ? 0.5 * step : step;
      flat /= n;
    }
    return w;
  }
};

namespace detail {
inline std::vector<VectorXd> axes_from_specs(const std::vector<GridSpec>& specs) {
  std::vector<VectorXd> axes;
  axes.reserve(specs.size());
  for (const auto& s : specs) {
    if (s.points < 2) throw std::invalid_argument("grid axis needs at least 2 points");
    axes.push_back(s.axis());
  }
  return axes;
}
}  // namespace detail

// Normalizes raw log densities over the grid. Everything happens in log
// space after max subtraction, so underflow cannot zero the mass.
inline PosteriorGrid normalize_grid(std::vector<VectorXd> axes, VectorXd raw_log_density) {
  PosteriorGrid grid;
  grid.axes = std::move(axes);
  if (static_cast<std::size_t>(raw_log_density.size()) != grid.size())
    throw std::invalid_argument("normalize_grid: node count mismatch");
  const double shift = raw_log_density.maxCoeff();
  if (!std::isfinite(shift)) throw numeric_error("posterior grid has no finite node");
  VectorXd shifted = (raw_log_density.array() - shift).exp();
  double mass = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i)
    mass += grid.weight_at(i) * shifted(static_cast<Eigen::Index>(i));
  grid.normalization = mass;
  grid.density = shifted / mass;
  grid.log_density = raw_log_density.array() - shift - std::log(mass);
  return grid;
}

// Scans an arbitrary unnormalized log-density over a grid spec.
inline PosteriorGrid grid_scan(const std::function<double(const VectorXd&)>& log_density_unnorm,
                               const std::vector<GridSpec>& specs, int jobs = 1) {
  PosteriorGrid probe;
  probe.axes = detail::axes_from_specs(specs);
  VectorXd raw(static_cast<Eigen::Index>(probe.size()));
  parallel_for(probe.size(), jobs, [&](std::size_t i) {
    raw(static_cast<Eigen::Index>(i)) = log_density_unnorm(probe.theta_at(i));
  });
  return normalize_grid(probe.axes, std::move(raw));
}

// Trapezoid-integrates out every axis except `dim`.
inline PosteriorGrid marginal_grid(const PosteriorGrid& grid, int dim) {
  if (dim < 0 || dim >= static_cast<int>(grid.axes.size()))
    throw std::invalid_argument("marginal_grid: bad dimension");
  if (grid.axes.size() == 1) return grid;
  const VectorXd& axis = grid.axes[static_cast<std::size_t>(dim)];
  VectorXd mass = VectorXd::Zero(axis.size());
  double axis_step = (axis(axis.size() - 1) - axis(0)) / static_cast<double>(axis.size() - 1);
  for (std::size_t flat = 0; flat < grid.size(); ++flat) {
    // recover this node's index along `dim`
    std::size_t rem = flat;
    Eigen::Index idx = 0;
    for (int d = static_cast<int>(grid.axes.size()) - 1; d >= 0; --d) {
      std::size_t n = static_cast<std::size_t>(grid.axes[static_cast<std::size_t>(d)].size());
      if (d == dim) idx = static_cast<Eigen::Index>(rem % n);
      rem /= n;
    }
    std::size_t i = static_cast<std::size_t>(idx);
    double w_axis = (i == 0 || i + 1 == static_cast<std::size_t>(axis.size())) ? 0.5 * axis_step
                                                                               : axis_step;
    mass(idx) += grid.weight_at(flat) / w_axis * grid.density(static_cast<Eigen::Index>(flat));
  }
  VectorXd log_density = mass.array().max(1e-300).log();
  return normalize_grid({axis}, log_density);
}

// log P(x|theta)/P(x) for one pair under a trained model.
inline double log_ratio(const TrainedEstimator& est, const VectorXd& x, const VectorXd& theta) {
  return estimator_log_ratios(est, encode_input(x, theta).transpose())(0);
}

struct LogZEstimate {
  double value = 0.0;
  bool low_pool = false;  // pool below 10^3 pairs; estimate is noisy
};

// Importance-sampling estimate log Z = log mean exp(-E) over a pool of
// independent pairs (rows encoded x-then-theta, raw scale).
inline LogZEstimate estimate_log_z(const TrainedEstimator& est, const MatrixXd& indep_inputs) {
  if (indep_inputs.rows() < 1) throw std::invalid_argument("estimate_log_z: empty pool");
  VectorXd f = forward_batch(est.params, est.stats.apply(indep_inputs));
  VectorXd energies(f.size());
  for (Eigen::Index i = 0; i < f.size(); ++i)
    energies(i) = energy_from_output(est.objective, f(i));
  LogZEstimate out;
  out.value = log_mean_exp(-energies);
  out.low_pool = indep_inputs.rows() < 1000;
  return out;
}

// Unnormalized log posterior of theta given M observations:
//   sum_m log_ratio(x_m, theta) + log prior(theta).
// The M log Z constant is common to all theta and drops on normalization.
inline std::function<double(const VectorXd&)> posterior_logdensity_fn(
    const TrainedEstimator& est, const MatrixXd& observations,
    const std::function<double(const VectorXd&)>& prior_logdensity) {
  return [&est, observations, prior_logdensity](const VectorXd& theta) {
    double lp = prior_logdensity(theta);
    if (!std::isfinite(lp)) return -std::numeric_limits<double>::infinity();
    for (Eigen::Index m = 0; m < observations.rows(); ++m)
      lp += log_ratio(est, observations.row(m).transpose(), theta);
    return lp;
  };
}

// Amortized posterior scan over a grid. Batches all grid nodes through
// the network once per observation.
inline PosteriorGrid posterior_grid(const TrainedEstimator& est, const MatrixXd& observations,
                                    const std::function<double(const VectorXd&)>& prior_logdensity,
                                    const std::vector<GridSpec>& specs, int jobs = 1) {
  PosteriorGrid probe;
  probe.axes = detail::axes_from_specs(specs);
  const std::size_t n_nodes = probe.size();
  const Eigen::Index theta_dim = static_cast<Eigen::Index>(specs.size());
  VectorXd raw(static_cast<Eigen::Index>(n_nodes));
  parallel_for(n_nodes, jobs, [&](std::size_t i) {
    raw(static_cast<Eigen::Index>(i)) = prior_logdensity(probe.theta_at(i));
  });

  if (observations.rows() > 0) {
    if (observations.cols() != est.x_dim && est.x_dim > 0)
      throw std::invalid_argument("posterior_grid: observation length " +
                                  std::to_string(observations.cols()) + " != x_dim " +
                                  std::to_string(est.x_dim));
    MatrixXd inputs(static_cast<Eigen::Index>(n_nodes), observations.cols() + theta_dim);
    for (std::size_t i = 0; i < n_nodes; ++i)
      inputs.row(static_cast<Eigen::Index>(i)).tail(theta_dim) = probe.theta_at(i);
    for (Eigen::Index m = 0; m < observations.rows(); ++m) {
      inputs.leftCols(observations.cols()).rowwise() = observations.row(m);
      raw += estimator_log_ratios(est, inputs);
    }
  }
  return normalize_grid(probe.axes, std::move(raw));
}

struct McmcChain {
  MatrixXd samples;  // [n_samples x theta_dim]
  double acceptance_rate = 0.0;
  VectorXd proposal_scale;
  int burn_in = 0;
  int thinning = 1;
  bool low_acceptance = false;
};

// Random-walk Metropolis with a symmetric Gaussian proposal. Proposals
// outside the support (log target -inf) are rejected through the ordinary
// acceptance test. When calibrate is set, a pilot phase adapts the
// per-dimension scales toward ~30% acceptance before anything is recorded.
inline McmcChain mcmc_sample(const std::function<double(const VectorXd&)>& log_target,
                             const VectorXd& theta_init, int n_samples, VectorXd proposal_scale,
                             int burn_in, int thinning, Rng& rng, bool calibrate = true) {
  if (n_samples < 1) throw std::invalid_argument("mcmc_sample: n_samples must be >= 1");
  if (thinning < 1) throw std::invalid_argument("mcmc_sample: thinning must be >= 1");
  const Eigen::Index dim = theta_init.size();
  if (proposal_scale.size() != dim)
    throw std::invalid_argument("mcmc_sample: proposal_scale dimension mismatch");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  VectorXd theta = theta_init;
  double lp = log_target(theta);
  if (!std::isfinite(lp)) throw std::invalid_argument("mcmc_sample: init outside support");

  auto step = [&](VectorXd& state, double& state_lp, const VectorXd& scale) -> bool {
    VectorXd prop(dim);
    for (Eigen::Index d = 0; d < dim; ++d) prop(d) = state(d) + scale(d) * normal(rng);
    double prop_lp = log_target(prop);
    if (std::log(unif(rng)) < prop_lp - state_lp) {
      state = prop;
      state_lp = prop_lp;
      return true;
    }
    return false;
  };

  if (calibrate) {
    constexpr int rounds = 12, round_steps = 200;
    for (int r = 0; r < rounds; ++r) {
      int accepted = 0;
      for (int s = 0; s < round_steps; ++s) accepted += step(theta, lp, proposal_scale) ? 1 : 0;
      double rate = static_cast<double>(accepted) / round_steps;
      proposal_scale *= std::exp(1.2 * (rate - 0.3));
    }
  }

  for (int s = 0; s < burn_in; ++s) step(theta, lp, proposal_scale);

  McmcChain chain;
  chain.samples.resize(n_samples, dim);
  chain.proposal_scale = proposal_scale;
  chain.burn_in = burn_in;
  chain.thinning = thinning;
  long accepted = 0, total = 0;
  for (int i = 0; i < n_samples; ++i) {
    for (int t = 0; t < thinning; ++t) {
      accepted += step(theta, lp, proposal_scale) ? 1 : 0;
      ++total;
    }
    chain.samples.row(i) = theta;
  }
  chain.acceptance_rate = static_cast<double>(accepted) / static_cast<double>(total);
  chain.low_acceptance = chain.acceptance_rate < 0.01;
  return chain;
}

// Convenience wrapper: chain targeting the amortized posterior of a task.
inline McmcChain mcmc_posterior(const TrainedEstimator& est, const Task& task,
                                const MatrixXd& observations, int n_samples, Rng& rng,
                                int burn_in = 1000, int thinning = 10) {
  auto target = posterior_logdensity_fn(
      est, observations, [&task](const VectorXd& t) { return task.prior_logdensity(t); });
  auto specs = task.theta_grid();
  VectorXd scale(task.theta_dim());
  for (int d = 0; d < task.theta_dim(); ++d)
    scale(d) = 0.1 * (specs[static_cast<std::size_t>(d)].hi - specs[static_cast<std::size_t>(d)].lo);
  VectorXd init = task.theta_star();
  if (!std::isfinite(task.prior_logdensity(init))) init = task.prior_sample(rng);
  return mcmc_sample(target, init, n_samples, scale, burn_in, thinning, rng);
}

// Draws M_out synthetic observations from the amortized likelihood at
// theta_star by rejection on a pool of marginal samples. Acceptance uses
// the pool maximum of exp(-E) as the envelope, which preserves the target
// law restricted to the pool.
inline MatrixXd rejection_sample_likelihood(const TrainedEstimator& est, const VectorXd& theta_star,
                                            const MatrixXd& marginal_pool, int m_out, Rng& rng) {
  const Eigen::Index pool = marginal_pool.rows();
  if (pool < 2) throw std::invalid_argument("rejection_sample_likelihood: pool too small");
  if (m_out < 1) throw std::invalid_argument("rejection_sample_likelihood: m_out must be >= 1");
  MatrixXd inputs(pool, marginal_pool.cols() + theta_star.size());
  inputs.leftCols(marginal_pool.cols()) = marginal_pool;
  inputs.rightCols(theta_star.size()).rowwise() = theta_star.transpose();
  VectorXd log_w = estimator_log_ratios(est, inputs);
  const double log_envelope = log_w.maxCoeff();

  MatrixXd out(m_out, marginal_pool.cols());
  std::uniform_int_distribution<Eigen::Index> pick(0, pool - 1);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  long trials = 0;
  for (int accepted = 0; accepted < m_out;) {
    Eigen::Index i = pick(rng);
    ++trials;
    if (unif(rng) < std::exp(log_w(i) - log_envelope)) {
      out.row(accepted++) = marginal_pool.row(i);
    }
    if (trials > 100000 && static_cast<double>(accepted) / static_cast<double>(trials) < 1e-4)
      throw numeric_error("rejection sampling acceptance below 1e-4 "
                          "(model too peaked or pool too small)");
  }
  return out;
}

}  // namespace minimalist
