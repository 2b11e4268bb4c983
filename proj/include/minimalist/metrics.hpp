#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "minimalist/errors.hpp"
#include "minimalist/inference.hpp"
#include "minimalist/nn.hpp"
#include "minimalist/objectives.hpp"
#include "minimalist/simulators.hpp"
#include "minimalist/training.hpp"

namespace minimalist {

// ---------------------------------------------------------------------------
// Analytic Ornstein-Uhlenbeck transition density
// ---------------------------------------------------------------------------

namespace detail {
// (1 - exp(-2*gamma*t)) / gamma, stable through gamma -> 0 where it tends
// to 2t (the pure-diffusion limit).
inline double ou_variance_factor(double gamma, double t) {
  double u = gamma * t;
  if (u == 0.0) return 2.0 * t;
  return t * (-std::expm1(-2.0 * u) / u);
}
constexpr double kLog2Pi = 1.8378770664093453;
}  // namespace detail

// Scalar transition log-density for dx = -gamma (x - mu) dt + sqrt(2) sigma dW:
//   x_next | x_prev ~ N(a x_prev + (1-a) mu, sigma^2 (1 - a^2)/gamma),
// a = exp(-gamma dt).
inline double ou_transition_logdensity_1d(double gamma, double mu, double sigma, double dt,
                                          double x_prev, double x_next) {
  double a = std::exp(-gamma * dt);
  double var = sigma * sigma * detail::ou_variance_factor(gamma, dt);
  if (!(var > 0.0)) throw numeric_error("ou transition variance not positive");
  double r = x_next - (a * x_prev + (1.0 - a) * mu);
  return -0.5 * (detail::kLog2Pi + std::log(var) + r * r / var);
}

// Multivariate transition density of the OU process with symmetric damping,
// evaluated in the orthogonal eigenbasis gamma = r diag(G) r^T:
//   mean  = e^{-gamma dt} x_prev + (1 - e^{-gamma dt}) mu
//   Sigma = sigma^2 r diag((1 - e^{-2 G dt})/G) r^T
struct OuAnalytic {
  MatrixXd gamma;
  VectorXd mu;
  double sigma = 1.0;
  double dt = 0.0;
  MatrixXd basis;          // r
  VectorXd eigenvalues;    // G
  VectorXd decay;          // e^{-G dt}
  VectorXd variances;      // per-mode transition variances
  double log_norm = 0.0;   // -(d log 2pi + log det Sigma)/2

  OuAnalytic(MatrixXd gamma_in, VectorXd mu_in, double sigma_in, double dt_in)
      : gamma(std::move(gamma_in)), mu(std::move(mu_in)), sigma(sigma_in), dt(dt_in) {
    const Eigen::Index d = gamma.rows();
    if (gamma.cols() != d || mu.size() != d) throw std::invalid_argument("OuAnalytic: shape mismatch");
    if (!gamma.isApprox(gamma.transpose(), 1e-12))
      throw std::invalid_argument("OuAnalytic: damping must be symmetric");
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(gamma);
    basis = es.eigenvectors();
    eigenvalues = es.eigenvalues();
    decay.resize(d);
    variances.resize(d);
    double log_det = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) {
      decay(i) = std::exp(-eigenvalues(i) * dt);
      variances(i) = sigma * sigma * detail::ou_variance_factor(eigenvalues(i), dt);
      if (!(variances(i) > 0.0)) throw numeric_error("OuAnalytic: non-positive mode variance");
      log_det += std::log(variances(i));
    }
    log_norm = -0.5 * (static_cast<double>(d) * detail::kLog2Pi + log_det);
  }

  double logdensity(const VectorXd& x_prev, const VectorXd& x_next) const {
    // residual in the eigenbasis; modes are independent there
    VectorXd prev_modes = basis.transpose() * (x_prev - mu);
    VectorXd next_modes = basis.transpose() * (x_next - mu);
    double quad = 0.0;
    for (Eigen::Index i = 0; i < eigenvalues.size(); ++i) {
      double r = next_modes(i) - decay(i) * prev_modes(i);
      quad += r * r / variances(i);
    }
    return log_norm - 0.5 * quad;
  }
};

inline double ou_transition_logdensity(const OuAnalytic& oracle, const VectorXd& x_prev,
                                       const VectorXd& x_next) {
  return oracle.logdensity(x_prev, x_next);
}

// Exact log-likelihood of one ou1d feature vector (10 states recorded
// after burn-in) for parameters theta = (mu, sigma).
inline double ou1d_trajectory_loglik(const VectorXd& obs, double mu, double sigma) {
  double lp = ou_transition_logdensity_1d(OuTask1d::kGamma, mu, sigma,
                                          OuTask1d::kBurnIn + OuTask1d::kDtObs, OuTask1d::kX0,
                                          obs(0));
  for (Eigen::Index i = 1; i < obs.size(); ++i)
    lp += ou_transition_logdensity_1d(OuTask1d::kGamma, mu, sigma, OuTask1d::kDtObs, obs(i - 1),
                                      obs(i));
  return lp;
}

// Grid scan of the exact ou1d posterior over (mu, sigma).
inline PosteriorGrid ou_analytic_posterior(const OuTask1d& task, const MatrixXd& observations,
                                           const std::vector<GridSpec>& specs, int jobs = 1) {
  if (observations.cols() != task.x_dim())
    throw std::invalid_argument("ou_analytic_posterior: observation length mismatch");
  return grid_scan(
      [&task, &observations](const VectorXd& theta) {
        double lp = task.prior_logdensity(theta);
        if (!std::isfinite(lp)) return lp;
        if (theta(1) <= 0.0) return -std::numeric_limits<double>::infinity();
        for (Eigen::Index m = 0; m < observations.rows(); ++m)
          lp += ou1d_trajectory_loglik(observations.row(m).transpose(), theta(0), theta(1));
        return lp;
      },
      specs, jobs);
}

// Exact log-likelihood of a d-dimensional trajectory for damping gamma.
inline double ou_nd_trajectory_loglik(const OuTaskNd& task, const MatrixXd& gamma,
                                      const VectorXd& obs) {
  const int d = task.dim();
  VectorXd mu = VectorXd::Zero(d);
  OuAnalytic first(gamma, mu, 1.0, OuTaskNd::kBurnIn + OuTaskNd::kDtObs);
  OuAnalytic step(gamma, mu, 1.0, OuTaskNd::kDtObs);
  VectorXd prev = VectorXd::Zero(d);
  double lp = 0.0;
  for (int i = 0; i < OuTaskNd::kNObs; ++i) {
    VectorXd next = obs.segment(i * d, d);
    lp += (i == 0 ? first : step).logdensity(prev, next);
    prev = next;
  }
  return lp;
}

// Per-element marginal posterior scans for the d-dimensional OU task:
// element `index` of g varies on a 1-d grid while the others stay at the
// reference hypothesis.
inline PosteriorGrid ou_nd_analytic_marginal(const OuTaskNd& task, const MatrixXd& observations,
                                             int index, const GridSpec& spec, int jobs = 1) {
  if (index < 0 || index >= task.theta_dim())
    throw std::invalid_argument("ou_nd_analytic_marginal: bad element index");
  return grid_scan(
      [&task, &observations, index](const VectorXd& value) {
        VectorXd theta = task.theta_star();
        theta(index) = value(0);
        double lp = task.prior_logdensity(theta);
        MatrixXd gamma = task.damping(theta);
        for (Eigen::Index m = 0; m < observations.rows(); ++m)
          lp += ou_nd_trajectory_loglik(task, gamma, observations.row(m).transpose());
        return lp;
      },
      {spec}, jobs);
}

// ---------------------------------------------------------------------------
// Benchmark metrics
// ---------------------------------------------------------------------------

// Donsker-Varadhan MI estimate on held-out pairs; works for estimators of
// any objective through the log-ratio map.
inline double mi_estimate(const TrainedEstimator& est, const MatrixXd& test_joint,
                          const MatrixXd& test_indep) {
  return mi_from_log_ratios(estimator_log_ratios(est, test_joint),
                            estimator_log_ratios(est, test_indep));
}

// Jensen-Shannon divergence between two densities on the same grid:
//   (1/2) int [p log(p/m) + q log(q/m)], m = (p+q)/2, with 0 log 0 = 0.
inline double js_grid(const PosteriorGrid& p, const PosteriorGrid& q) {
  if (p.axes.size() != q.axes.size()) throw std::invalid_argument("js_grid: axis count mismatch");
  for (std::size_t d = 0; d < p.axes.size(); ++d)
    if (p.axes[d].size() != q.axes[d].size() || p.axes[d] != q.axes[d])
      throw std::invalid_argument("js_grid: axis mismatch");
  double js = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    double pi = p.density(static_cast<Eigen::Index>(i));
    double qi = q.density(static_cast<Eigen::Index>(i));
    double mi = 0.5 * (pi + qi);
    double term = 0.0;
    if (pi > 0.0) term += 0.5 * pi * std::log(pi / mi);
    if (qi > 0.0) term += 0.5 * qi * std::log(qi / mi);
    js += p.weight_at(i) * term;
  }
  return js;
}

// Discrete JS between a sample histogram and a 1-d grid density, both
// binned over the grid's range. Used to cross-validate MCMC chains
// against grid scans of the same posterior.
inline double js_hist_vs_grid(const VectorXd& samples, const PosteriorGrid& marginal,
                              int n_bins = 50) {
  if (marginal.axes.size() != 1) throw std::invalid_argument("js_hist_vs_grid: need a 1-d grid");
  const VectorXd& axis = marginal.axes[0];
  const double lo = axis(0), hi = axis(axis.size() - 1);
  VectorXd hist = VectorXd::Zero(n_bins);
  for (Eigen::Index i = 0; i < samples.size(); ++i) {
    int b = static_cast<int>((samples(i) - lo) / (hi - lo) * n_bins);
    b = std::clamp(b, 0, n_bins - 1);
    hist(b) += 1.0;
  }
  hist /= hist.sum();
  VectorXd grid_mass = VectorXd::Zero(n_bins);
  for (std::size_t i = 0; i < marginal.size(); ++i) {
    int b = static_cast<int>((axis(static_cast<Eigen::Index>(i)) - lo) / (hi - lo) * n_bins);
    b = std::clamp(b, 0, n_bins - 1);
    grid_mass(b) += marginal.weight_at(i) * marginal.density(static_cast<Eigen::Index>(i));
  }
  grid_mass /= grid_mass.sum();
  double js = 0.0;
  for (int b = 0; b < n_bins; ++b) {
    double p = hist(b), q = grid_mass(b), m = 0.5 * (p + q);
    if (p > 0.0) js += 0.5 * p * std::log(p / m);
    if (q > 0.0) js += 0.5 * q * std::log(q / m);
  }
  return js;
}

// Probability that a score from `scores_q` ranks above one from
// `scores_p`, ties counted half: the Mann-Whitney U statistic divided by
// n_p * n_q. Invariant under any strictly increasing transform.
inline double auroc(const VectorXd& scores_p, const VectorXd& scores_q) {
  if (scores_p.size() < 1 || scores_q.size() < 1) throw std::invalid_argument("auroc: empty scores");
  std::vector<double> q(scores_q.data(), scores_q.data() + scores_q.size());
  std::sort(q.begin(), q.end());
  double u = 0.0;
  for (Eigen::Index i = 0; i < scores_p.size(); ++i) {
    double p = scores_p(i);
    auto lower = std::lower_bound(q.begin(), q.end(), p);
    auto upper = std::upper_bound(lower, q.end(), p);
    u += static_cast<double>(q.end() - upper) + 0.5 * static_cast<double>(upper - lower);
  }
  return u / (static_cast<double>(scores_p.size()) * static_cast<double>(scores_q.size()));
}

// ---------------------------------------------------------------------------
// Classifier-based two-sample metrics
// ---------------------------------------------------------------------------

// Tuned defaults for the helper classifiers of the two-sample metrics.
inline TrainerConfig default_classifier_trainer(std::uint64_t seed, int n_per_class = 10000) {
  TrainerConfig tc;
  tc.learning_rate = 3e-3;
  tc.batch_size = std::min(500, std::max(50, n_per_class / 10));
  tc.max_epochs = 250;
  tc.patience = 30;
  tc.seed = seed;
  return tc;
}

struct BinaryClassifier {
  MlpParams params;
  FeatureStats stats;

  VectorXd log_ratios(const MatrixXd& rows) const {
    return forward_batch(params, stats.apply(rows));
  }
};

// Trains the standard architecture as a classifier between two sample
// sets with the cross-entropy loss at k = 1; the output approximates
// log P_1(x)/P_0(x). A tail split of each class serves as validation for
// early stopping.
inline BinaryClassifier train_binary_classifier(const MatrixXd& class1, const MatrixXd& class0,
                                                const TrainerConfig& tc, int hidden_width = 50) {
  tc.validate();
  const Eigen::Index n1 = class1.rows(), n0 = class0.rows();
  if (n1 < 10 || n0 < 10) throw std::invalid_argument("train_binary_classifier: too few samples");
  const Eigen::Index v1 = std::max<Eigen::Index>(1, n1 / 5);
  const Eigen::Index v0 = std::max<Eigen::Index>(1, n0 / 5);
  MatrixXd train1 = class1.topRows(n1 - v1), val1 = class1.bottomRows(v1);
  MatrixXd train0 = class0.topRows(n0 - v0), val0 = class0.bottomRows(v0);

  MatrixXd joined(train1.rows() + train0.rows(), class1.cols());
  joined << train1, train0;
  FeatureStats stats = FeatureStats::fit(joined);
  train1 = stats.apply(train1);
  train0 = stats.apply(train0);
  MatrixXd sval1 = stats.apply(val1), sval0 = stats.apply(val0);

  Rng init_rng = substream(tc.seed, stream_tag::weight_init);
  MlpParams params = init_mlp(static_cast<int>(class1.cols()), hidden_width, init_rng);
  RmsPropState opt = init_rmsprop(params);
  Rng loop_rng = substream(tc.seed, stream_tag::epoch_shuffle);
  double learning_rate = tc.learning_rate;

  const int bsz = std::min<int>(tc.batch_size, static_cast<int>(std::min(train1.rows(), train0.rows())));
  const int batches = static_cast<int>(std::min(train1.rows(), train0.rows())) / bsz;
  std::vector<int> ord1(static_cast<std::size_t>(train1.rows())), ord0(static_cast<std::size_t>(train0.rows()));
  std::iota(ord1.begin(), ord1.end(), 0);
  std::iota(ord0.begin(), ord0.end(), 0);

  double best_val = std::numeric_limits<double>::infinity();
  MlpParams best_params = params;
  int stale = 0;
  ForwardCache cache;
  GradientSet grads = zeros_like(params);
  for (int epoch = 1; epoch <= tc.max_epochs; ++epoch) {
    std::shuffle(ord1.begin(), ord1.end(), loop_rng);
    std::shuffle(ord0.begin(), ord0.end(), loop_rng);
    for (int b = 0; b < batches; ++b) {
      MatrixXd x1 = detail::gather_rows(train1, ord1, b * bsz, bsz);
      MatrixXd x0 = detail::gather_rows(train0, ord0, b * bsz, bsz);
      MatrixXd stacked(2 * bsz, x1.cols());
      stacked << x1, x0;
      forward_batch_cached(params, stacked, cache);
      ObjectiveValue v = bce_loss(cache.out.head(bsz), cache.out.tail(bsz), 1);
      if (!std::isfinite(v.loss)) throw numeric_error("classifier training diverged");
      VectorXd og(2 * bsz);
      og << v.grads_joint, v.grads_indep;
      backward_cached(params, stacked, cache, og, grads);
      grads.add_scaled(l2_gradient(params, tc.l2_strength), 1.0);
      rmsprop_step(params, opt, grads, learning_rate);
    }
    ObjectiveValue v =
        bce_loss(forward_batch(params, sval1), forward_batch(params, sval0), 1);
    if (v.loss < best_val) {
      best_val = v.loss;
      best_params = params;
      stale = 0;
    } else {
      ++stale;
      if (stale == std::max(1, tc.patience / 2))
        learning_rate = std::max(0.5 * learning_rate, 0.01 * tc.learning_rate);
      if (stale >= tc.patience) break;
    }
  }
  return BinaryClassifier{best_params, stats};
}

// Sample-based Jensen-Shannon divergence between two distributions known
// only through samples. Trains one classifier of p against the equal-
// proportion mixture and one of q against it, then reads each KL term off
// the Donsker-Varadhan form on held-out halves:
//   JS = (KL(p||mix) + KL(q||mix)) / 2.
inline double classifier_js(const MatrixXd& samples_p, const MatrixXd& samples_q,
                            const TrainerConfig& tc) {
  if (samples_p.rows() != samples_q.rows())
    throw std::invalid_argument("classifier_js: equal sample counts required");
  const Eigen::Index m = samples_p.rows();
  const Eigen::Index half = m / 2;
  if (half < 20) throw std::invalid_argument("classifier_js: too few samples");
  MatrixXd p_train = samples_p.topRows(half), p_held = samples_p.bottomRows(m - half);
  MatrixXd q_train = samples_q.topRows(half), q_held = samples_q.bottomRows(m - half);
  MatrixXd mix_train(2 * half, samples_p.cols());
  mix_train << p_train, q_train;
  MatrixXd mix_held(2 * (m - half), samples_p.cols());
  mix_held << p_held, q_held;

  TrainerConfig tc_b = tc;
  tc_b.seed = mix64(tc.seed, 0x6d6978);
  BinaryClassifier clf_p = train_binary_classifier(p_train, mix_train, tc);
  BinaryClassifier clf_q = train_binary_classifier(q_train, mix_train, tc_b);

  double kl_p = mi_from_log_ratios(clf_p.log_ratios(p_held), clf_p.log_ratios(mix_held));
  double kl_q = mi_from_log_ratios(clf_q.log_ratios(q_held), clf_q.log_ratios(mix_held));
  double js = 0.5 * (kl_p + kl_q);
  return std::clamp(js, 0.0, std::log(2.0));
}

// AUROC of a classifier between two sample sets, scored on held-out
// halves. 1/2 means the sets are indistinguishable.
inline double classifier_auroc(const MatrixXd& samples_p, const MatrixXd& samples_q,
                               const TrainerConfig& tc) {
  if (samples_p.rows() != samples_q.rows())
    throw std::invalid_argument("classifier_auroc: equal sample counts required");
  const Eigen::Index m = samples_p.rows();
  const Eigen::Index half = m / 2;
  if (half < 20) throw std::invalid_argument("classifier_auroc: too few samples");
  BinaryClassifier clf =
      train_binary_classifier(samples_p.topRows(half), samples_q.topRows(half), tc);
  VectorXd scores_p = clf.log_ratios(samples_p.bottomRows(m - half));
  VectorXd scores_q = clf.log_ratios(samples_q.bottomRows(m - half));
  return auroc(scores_q, scores_p);
}

struct MetricReport {
  std::string task;
  std::string objective;
  int n_budget = 0;
  int replicate = 0;
  std::string metric;  // test_mi | posterior_js | likelihood_js | likelihood_auroc
  double value = 0.0;
  double uncertainty = 0.0;
};

}  // namespace minimalist
