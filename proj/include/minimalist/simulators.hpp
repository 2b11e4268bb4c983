#pragma once

#include <atomic>
#include <cmath>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "json.hpp"
#include "minimalist/errors.hpp"
#include "minimalist/rng.hpp"

namespace minimalist {

using Eigen::MatrixXd;
using Eigen::Vector3d;
using Eigen::VectorXd;

struct GridSpec {
  double lo = 0.0;
  double hi = 1.0;
  int points = 200;

  VectorXd axis() const {
    VectorXd a(points);
    for (int i = 0; i < points; ++i)
      a(i) = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
    return a;
  }
};

// Counters filled in while generating datasets; surfaced in metadata.
struct SimStats {
  std::atomic<long> retries{0};
  std::atomic<long> bd_cap_hits{0};
};

// ---------------------------------------------------------------------------
// Trajectory samplers
// ---------------------------------------------------------------------------

// Euler-Maruyama integration of  dx = -gamma (x - mu) dt + sqrt(2) sigma dW,
// recording the state at each obs_time (flattened time-major). Observation
// times must be increasing multiples of dt_int up to rounding.
inline VectorXd euler_maruyama_ou(Rng& rng, const MatrixXd& gamma, const VectorXd& mu,
                                  const MatrixXd& sigma_amp, const VectorXd& x0, double dt_int,
                                  const std::vector<double>& obs_times) {
  if (dt_int <= 0.0) throw std::invalid_argument("euler_maruyama_ou: dt_int must be > 0");
  const Eigen::Index d = x0.size();
  if (gamma.rows() != d || gamma.cols() != d || mu.size() != d || sigma_amp.rows() != d ||
      sigma_amp.cols() != d)
    throw std::invalid_argument("euler_maruyama_ou: dimension mismatch");
  for (std::size_t i = 1; i < obs_times.size(); ++i)
    if (obs_times[i] <= obs_times[i - 1])
      throw std::invalid_argument("euler_maruyama_ou: obs_times must be increasing");

  std::normal_distribution<double> normal(0.0, 1.0);
  const double noise_scale = std::sqrt(2.0 * dt_int);
  VectorXd out(d * static_cast<Eigen::Index>(obs_times.size()));

  if (d == 1) {
    // scalar fast path; the matrix route below costs ~3x per step
    const double g = gamma(0, 0), m = mu(0), s = sigma_amp(0, 0) * noise_scale;
    double x = x0(0);
    long step = 0;
    for (std::size_t j = 0; j < obs_times.size(); ++j) {
      long target = std::lround(obs_times[j] / dt_int);
      for (; step < target; ++step) x += -g * (x - m) * dt_int + s * normal(rng);
      out(static_cast<Eigen::Index>(j)) = x;
    }
    return out;
  }

  VectorXd x = x0;
  VectorXd xi(d);
  long step = 0;
  for (std::size_t j = 0; j < obs_times.size(); ++j) {
    long target = std::lround(obs_times[j] / dt_int);
    for (; step < target; ++step) {
      for (Eigen::Index i = 0; i < d; ++i) xi(i) = normal(rng);
      x += -dt_int * (gamma * (x - mu)) + noise_scale * (sigma_amp * xi);
    }
    out.segment(static_cast<Eigen::Index>(j) * d, d) = x;
  }
  return out;
}

// Exponentially distributed waiting time at the given total event rate;
// the clock used by every Gillespie sampler below.
inline double exponential_waiting_time(Rng& rng, double total_rate) {
  std::exponential_distribution<double> expo(1.0);
  return expo(rng) / total_rate;
}

// Exact event-driven simulation of  n -> n+1 at rate n*lambda and
// n -> n-1 at rate n*delta. n = 0 is absorbing. Populations above `cap`
// hold the cap value for the rest of the trajectory (capped flag set).
inline VectorXd gillespie_birth_death(Rng& rng, double birth_rate, double death_rate, long n0,
                                      const std::vector<double>& obs_times, long cap = 1000000,
                                      bool* capped = nullptr) {
  if (birth_rate < 0 || death_rate < 0) throw std::invalid_argument("gillespie_birth_death: negative rate");
  if (n0 < 0) throw std::invalid_argument("gillespie_birth_death: negative n0");
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  VectorXd out(static_cast<Eigen::Index>(obs_times.size()));
  long n = n0;
  double t = 0.0;
  std::size_t next_obs = 0;
  bool frozen = false;
  while (next_obs < obs_times.size()) {
    double total = frozen ? 0.0 : static_cast<double>(n) * (birth_rate + death_rate);
    double t_next = (total > 0.0) ? t + exponential_waiting_time(rng, total)
                                  : std::numeric_limits<double>::infinity();
    while (next_obs < obs_times.size() && obs_times[next_obs] < t_next) {
      out(static_cast<Eigen::Index>(next_obs)) = static_cast<double>(n);
      ++next_obs;
    }
    if (next_obs >= obs_times.size()) break;
    t = t_next;
    if (unif(rng) * (birth_rate + death_rate) < birth_rate)
      ++n;
    else
      --n;
    if (n <= 0) {
      n = 0;
      frozen = true;
    }
    if (n >= cap) {
      n = cap;
      frozen = true;
      if (capped) *capped = true;
    }
  }
  return out;
}

// Gillespie simulation of S + I -> 2I at rate beta*S*I/N and I -> R at
// rate gamma*I, with N the fixed total population. Records (S, I) at each
// observation time, flattened time-major.
inline VectorXd gillespie_sir(Rng& rng, double beta, double gamma_r, long s0, long i0, long r0,
                              const std::vector<double>& obs_times) {
  if (beta < 0 || gamma_r < 0) throw std::invalid_argument("gillespie_sir: negative rate");
  if (s0 < 0 || i0 < 0 || r0 < 0) throw std::invalid_argument("gillespie_sir: negative population");
  const double n_pop = static_cast<double>(s0 + i0 + r0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  VectorXd out(2 * static_cast<Eigen::Index>(obs_times.size()));
  long s = s0, i = i0;
  double t = 0.0;
  std::size_t next_obs = 0;
  while (next_obs < obs_times.size()) {
    double rate_inf = (n_pop > 0) ? beta * static_cast<double>(s) * static_cast<double>(i) / n_pop : 0.0;
    double rate_rec = gamma_r * static_cast<double>(i);
    double total = rate_inf + rate_rec;
    double t_next = (total > 0.0) ? t + exponential_waiting_time(rng, total)
                                  : std::numeric_limits<double>::infinity();
    while (next_obs < obs_times.size() && obs_times[next_obs] < t_next) {
      out(2 * static_cast<Eigen::Index>(next_obs)) = static_cast<double>(s);
      out(2 * static_cast<Eigen::Index>(next_obs) + 1) = static_cast<double>(i);
      ++next_obs;
    }
    if (next_obs >= obs_times.size()) break;
    t = t_next;
    if (unif(rng) * total < rate_inf) {
      --s;
      ++i;
    } else {
      --i;
    }
  }
  return out;
}

inline Vector3d lorenz_deriv(const Vector3d& v, double rho, double sigma = 10.0,
                             double beta = 8.0 / 3.0) {
  return Vector3d(sigma * (v.y() - v.x()), v.x() * (rho - v.z()) - v.y(),
                  v.x() * v.y() - beta * v.z());
}

namespace detail {
inline Vector3d rk4_step(const Vector3d& v, double rho, double dt) {
  Vector3d k1 = lorenz_deriv(v, rho);
  Vector3d k2 = lorenz_deriv(v + 0.5 * dt * k1, rho);
  Vector3d k3 = lorenz_deriv(v + 0.5 * dt * k2, rho);
  Vector3d k4 = lorenz_deriv(v + dt * k3, rho);
  return v + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

// Integrates forward by `span` using fixed steps plus one partial step for
// the remainder, so observation times are hit exactly.
inline Vector3d rk4_advance(Vector3d v, double rho, double dt, double span) {
  long full = static_cast<long>(span / dt);
  for (long s = 0; s < full; ++s) v = detail::rk4_step(v, rho, dt);
  double rest = span - static_cast<double>(full) * dt;
  if (rest > 1e-15) v = detail::rk4_step(v, rho, rest);
  return v;
}
}  // namespace detail

// Classic RK4 on the Lorenz field from start point `origin` (caller adds
// any initial-condition noise). Records (x,y,z) at t0 + i*obs_spacing for
// i in [0, n_obs), flattened time-major.
inline VectorXd rk4_lorenz_from(const Vector3d& origin, double rho, double dt_int, double t0,
                                double obs_spacing, int n_obs) {
  if (dt_int <= 0.0) throw std::invalid_argument("rk4_lorenz: dt_int must be > 0");
  if (t0 < 0.0 || obs_spacing <= 0.0 || n_obs < 1)
    throw std::invalid_argument("rk4_lorenz: bad sampling schedule");
  Vector3d v = origin;
  VectorXd out(3 * n_obs);
  v = detail::rk4_advance(v, rho, dt_int, t0);
  for (int i = 0; i < n_obs; ++i) {
    if (i > 0) v = detail::rk4_advance(v, rho, dt_int, obs_spacing);
    if (!v.allFinite() || v.norm() > 1e3)
      throw numeric_error("lorenz integration left the attractor bound (dt_int too large?)");
    out.segment(3 * i, 3) = v;
  }
  return out;
}

inline VectorXd rk4_lorenz(Rng& rng, double rho, double dt_int, double t0, double obs_spacing,
                           int n_obs = 5, const Vector3d& base = Vector3d(1.0, 1.0, 1.0),
                           double init_noise = 0.1) {
  std::uniform_real_distribution<double> eta(-init_noise, init_noise);
  Vector3d origin = base;
  origin.x() += eta(rng);
  return rk4_lorenz_from(origin, rho, dt_int, t0, obs_spacing, n_obs);
}

// Symmetric matrix from the Gaussian Orthogonal Ensemble with density
// proportional to exp(-d Tr(g^2)/4): diagonal entries N(0, 2/d),
// off-diagonal N(0, 1/d).
inline MatrixXd goe_sample(Rng& rng, int d) {
  if (d < 1) throw std::invalid_argument("goe_sample: d must be >= 1");
  std::normal_distribution<double> diag(0.0, std::sqrt(2.0 / d));
  std::normal_distribution<double> off(0.0, std::sqrt(1.0 / d));
  MatrixXd g(d, d);
  for (int i = 0; i < d; ++i) {
    g(i, i) = diag(rng);
    for (int j = i + 1; j < d; ++j) g(i, j) = g(j, i) = off(rng);
  }
  return g;
}

inline double goe_logdensity(const MatrixXd& g, int d) {
  constexpr double log_2pi = 1.8378770664093453;
  double lp = 0.0;
  for (int i = 0; i < d; ++i) {
    double var = 2.0 / d;
    lp += -0.5 * g(i, i) * g(i, i) / var - 0.5 * (log_2pi + std::log(var));
    for (int j = i + 1; j < d; ++j) {
      double var_off = 1.0 / d;
      lp += -0.5 * g(i, j) * g(i, j) / var_off - 0.5 * (log_2pi + std::log(var_off));
    }
  }
  return lp;
}

// Damping-scale factor 1/(mean + 2 std) of the Tracy-Widom law for the
// lowest GOE eigenvalue; keeps I + eps(d) g positive definite with high
// probability.
inline double epsilon_of_d(int d) {
  if (d < 1) throw std::invalid_argument("epsilon_of_d: d must be >= 1");
  return 1.0 / (std::sqrt(2.0 * d) + 2.0 * std::sqrt(2.0) * std::pow(d, 1.0 / 6.0));
}

// ---------------------------------------------------------------------------
// Tasks
// ---------------------------------------------------------------------------

// A simulator bundle: prior, trajectory sampler producing a fixed-length
// feature vector, reference hypothesis, and grid specs for posterior scans.
// Tasks are immutable after construction; simulate takes an explicit RNG.
class Task {
 public:
  virtual ~Task() = default;
  virtual std::string name() const = 0;
  virtual int theta_dim() const = 0;
  virtual int x_dim() const = 0;
  virtual VectorXd prior_sample(Rng& rng) const = 0;
  virtual double prior_logdensity(const VectorXd& theta) const = 0;
  virtual VectorXd theta_star() const = 0;
  virtual std::vector<GridSpec> theta_grid() const = 0;
  virtual std::vector<double> obs_times() const = 0;
  virtual int default_m_observations() const { return 5; }
  virtual nlohmann::json params_json() const { return nlohmann::json::object(); }

  VectorXd simulate(Rng& rng, const VectorXd& theta, SimStats* stats = nullptr) const {
    return do_simulate(rng, theta, stats);
  }

 protected:
  virtual VectorXd do_simulate(Rng& rng, const VectorXd& theta, SimStats* stats) const = 0;

  void check_theta(const VectorXd& theta) const {
    if (theta.size() != theta_dim())
      throw std::invalid_argument(name() + ": theta has " + std::to_string(theta.size()) +
                                  " entries, expected " + std::to_string(theta_dim()));
  }
};

namespace detail {
// closed interval so full-support scan grids keep their endpoint nodes
inline double uniform_logdensity(double v, double lo, double hi) {
  return (v >= lo && v <= hi) ? -std::log(hi - lo) : -std::numeric_limits<double>::infinity();
}
}  // namespace detail

// theta ~ N(0,1), x = theta + N(0,1). Closed-form mutual information
// (I = log(2)/2 nats) makes this the calibration workhorse.
class GaussToyTask final : public Task {
 public:
  std::string name() const override { return "gauss_toy"; }
  int theta_dim() const override { return 1; }
  int x_dim() const override { return 1; }
  VectorXd prior_sample(Rng& rng) const override {
    std::normal_distribution<double> n(0.0, 1.0);
    VectorXd t(1);
    t(0) = n(rng);
    return t;
  }
  double prior_logdensity(const VectorXd& theta) const override {
    constexpr double log_2pi = 1.8378770664093453;
    return -0.5 * theta(0) * theta(0) - 0.5 * log_2pi;
  }
  VectorXd do_simulate(Rng& rng, const VectorXd& theta, SimStats*) const override {
    check_theta(theta);
    std::normal_distribution<double> n(0.0, 1.0);
    VectorXd x(1);
    x(0) = theta(0) + n(rng);
    return x;
  }
  VectorXd theta_star() const override {
    VectorXd t(1);
    t(0) = 1.0;
    return t;
  }
  std::vector<GridSpec> theta_grid() const override { return {{-4.0, 4.0, 201}}; }
  std::vector<double> obs_times() const override { return {0.0}; }
};

// 1-d Ornstein-Uhlenbeck with unit damping; infer stationary mean and
// noise amplitude. Trajectories start at 0, equilibrate for 2/gamma, then
// 10 states at spacing 0.5 form the feature vector.
class OuTask1d final : public Task {
 public:
  static constexpr double kGamma = 1.0;
  static constexpr double kX0 = 0.0;
  static constexpr double kBurnIn = 2.0 / kGamma;
  static constexpr double kDtObs = 0.5;
  static constexpr int kNObs = 10;
  static constexpr double kDtInt = kDtObs / 100.0;

  std::string name() const override { return "ou1d"; }
  int theta_dim() const override { return 2; }
  int x_dim() const override { return kNObs; }
  VectorXd prior_sample(Rng& rng) const override {
    std::uniform_real_distribution<double> u_mu(-10.0, 10.0), u_sigma(0.0, 2.0);
    VectorXd t(2);
    t(0) = u_mu(rng);
    t(1) = u_sigma(rng);
    return t;
  }
  double prior_logdensity(const VectorXd& theta) const override {
    check_theta(theta);
    return detail::uniform_logdensity(theta(0), -10.0, 10.0) +
           detail::uniform_logdensity(theta(1), 0.0, 2.0);
  }
  VectorXd do_simulate(Rng& rng, const VectorXd& theta, SimStats*) const override {
    check_theta(theta);
    MatrixXd gamma(1, 1), sigma(1, 1);
    gamma(0, 0) = kGamma;
    sigma(0, 0) = theta(1);
    VectorXd mu(1), x0(1);
    mu(0) = theta(0);
    x0(0) = kX0;
    return euler_maruyama_ou(rng, gamma, mu, sigma, x0, kDtInt, obs_times());
  }
  VectorXd theta_star() const override {
    VectorXd t(2);
    t(0) = 5.0;
    t(1) = 1.0;
    return t;
  }
  std::vector<GridSpec> theta_grid() const override {
    return {{-10.0, 10.0, 200}, {0.02, 2.0, 200}};
  }
  std::vector<double> obs_times() const override {
    std::vector<double> t(kNObs);
    for (int i = 0; i < kNObs; ++i) t[static_cast<std::size_t>(i)] = kBurnIn + kDtObs * (i + 1);
    return t;
  }
};

// d-dimensional Ornstein-Uhlenbeck with mu = 0 and unit noise; infer the
// symmetric damping matrix gamma = I + eps(d) g through the d(d+1)/2 free
// entries of g under a GOE prior. Draws whose gamma is not positive
// definite are rejected and redrawn.
class OuTaskNd final : public Task {
 public:
  explicit OuTaskNd(int d) : d_(d), eps_(epsilon_of_d(d)) {
    if (d < 1 || d > 8) throw std::invalid_argument("ou_nd: dimension must be in [1,8]");
  }

  static constexpr double kBurnIn = 2.0;
  static constexpr double kDtObs = 0.5;
  static constexpr int kNObs = 10;
  static constexpr double kDtInt = kDtObs / 100.0;

  std::string name() const override { return "ou_nd"; }
  int dim() const { return d_; }
  double eps() const { return eps_; }
  int theta_dim() const override { return d_ * (d_ + 1) / 2; }
  int x_dim() const override { return kNObs * d_; }

  // theta packs the upper triangle of g row-major, diagonal included.
  VectorXd pack(const MatrixXd& g) const {
    VectorXd t(theta_dim());
    int idx = 0;
    for (int i = 0; i < d_; ++i)
      for (int j = i; j < d_; ++j) t(idx++) = g(i, j);
    return t;
  }
  MatrixXd unpack(const VectorXd& theta) const {
    MatrixXd g(d_, d_);
    int idx = 0;
    for (int i = 0; i < d_; ++i)
      for (int j = i; j < d_; ++j) g(i, j) = g(j, i) = theta(idx++);
    return g;
  }
  MatrixXd damping(const VectorXd& theta) const {
    return MatrixXd::Identity(d_, d_) + eps_ * unpack(theta);
  }

  VectorXd prior_sample(Rng& rng) const override {
    for (int attempt = 0; attempt < 10000; ++attempt) {
      MatrixXd g = goe_sample(rng, d_);
      MatrixXd gamma = MatrixXd::Identity(d_, d_) + eps_ * g;
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(gamma, Eigen::EigenvaluesOnly);
      if (es.eigenvalues().minCoeff() > 0.0) return pack(g);
    }
    throw std::runtime_error("ou_nd: positive-definite prior rejection failed");
  }
  // Untruncated GOE density; the positive-definiteness truncation only
  // shifts the (unused) normalization constant.
  double prior_logdensity(const VectorXd& theta) const override {
    check_theta(theta);
    return goe_logdensity(unpack(theta), d_);
  }
  VectorXd do_simulate(Rng& rng, const VectorXd& theta, SimStats*) const override {
    check_theta(theta);
    return euler_maruyama_ou(rng, damping(theta), VectorXd::Zero(d_),
                             MatrixXd::Identity(d_, d_), VectorXd::Zero(d_), kDtInt, obs_times());
  }
  VectorXd theta_star() const override { return pack(MatrixXd::Constant(d_, d_, -1.0)); }
  std::vector<GridSpec> theta_grid() const override {
    return std::vector<GridSpec>(static_cast<std::size_t>(theta_dim()), GridSpec{-4.0, 4.0, 161});
  }
  std::vector<double> obs_times() const override {
    std::vector<double> t(kNObs);
    for (int i = 0; i < kNObs; ++i) t[static_cast<std::size_t>(i)] = kBurnIn + kDtObs * (i + 1);
    return t;
  }
  nlohmann::json params_json() const override { return {{"dim", d_}}; }

 private:
  int d_;
  double eps_;
};

// Stochastic birth-death process parametrized by drift alpha = lambda - delta
// and noise timescale beta = lambda + delta, observed as 10 population
// counts over one time unit.
class BirthDeathTask final : public Task {
 public:
  static constexpr long kN0 = 50;
  static constexpr double kDtObs = 0.1;
  static constexpr int kNObs = 10;
  static constexpr long kCap = 1000000;

  std::string name() const override { return "birth_death"; }
  int theta_dim() const override { return 2; }
  int x_dim() const override { return kNObs; }
  VectorXd prior_sample(Rng& rng) const override {
    std::uniform_real_distribution<double> u_alpha(-2.0, 2.0), u_beta(2.0, 20.0);
    VectorXd t(2);
    t(0) = u_alpha(rng);
    t(1) = u_beta(rng);
    return t;
  }
  double prior_logdensity(const VectorXd& theta) const override {
    check_theta(theta);
    return detail::uniform_logdensity(theta(0), -2.0, 2.0) +
           detail::uniform_logdensity(theta(1), 2.0, 20.0);
  }
  VectorXd do_simulate(Rng& rng, const VectorXd& theta, SimStats* stats) const override {
    check_theta(theta);
    double birth = 0.5 * (theta(1) + theta(0));
    double death = 0.5 * (theta(1) - theta(0));
    bool capped = false;
    VectorXd x = gillespie_birth_death(rng, birth, death, kN0, obs_times(), kCap, &capped);
    if (capped && stats) stats->bd_cap_hits.fetch_add(1);
    return x;
  }
  VectorXd theta_star() const override {
    VectorXd t(2);
    t(0) = 0.2;
    t(1) = 10.0;
    return t;
  }
  std::vector<GridSpec> theta_grid() const override {
    return {{-2.0, 2.0, 200}, {2.0, 20.0, 200}};
  }
  std::vector<double> obs_times() const override {
    std::vector<double> t(kNObs);
    for (int i = 0; i < kNObs; ++i) t[static_cast<std::size_t>(i)] = kDtObs * (i + 1);
    return t;
  }
};

// Susceptible-Infected-Recovered epidemic; infer the contact and recovery
// rates from 10 (S, I) snapshots of a 1000-individual population.
class SirTask final : public Task {
 public:
  static constexpr long kS0 = 990;
  static constexpr long kI0 = 10;
  static constexpr long kR0 = 0;
  static constexpr double kDtObs = 1.0;
  static constexpr int kNObs = 10;

  std::string name() const override { return "sir"; }
  int theta_dim() const override { return 2; }
  int x_dim() const override { return 2 * kNObs; }
  VectorXd prior_sample(Rng& rng) const override {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    VectorXd t(2);
    t(0) = u(rng);
    t(1) = u(rng);
    return t;
  }
  double prior_logdensity(const VectorXd& theta) const override {
    check_theta(theta);
    return detail::uniform_logdensity(theta(0), 0.0, 1.0) +
           detail::uniform_logdensity(theta(1), 0.0, 1.0);
  }
  VectorXd do_simulate(Rng& rng, const VectorXd& theta, SimStats*) const override {
    check_theta(theta);
    return gillespie_sir(rng, theta(0), theta(1), kS0, kI0, kR0, obs_times());
  }
  VectorXd theta_star() const override {
    VectorXd t(2);
    t(0) = 0.6;
    t(1) = 0.2;
    return t;
  }
  std::vector<GridSpec> theta_grid() const override {
    return {{0.005, 0.995, 199}, {0.005, 0.995, 199}};
  }
  std::vector<double> obs_times() const override {
    std::vector<double> t(kNObs);
    for (int i = 0; i < kNObs; ++i) t[static_cast<std::size_t>(i)] = kDtObs * (i + 1);
    return t;
  }
  int default_m_observations() const override { return 2; }
};

// Lorenz attractor in the chaotic regime; infer rho from 5 snapshots taken
// after a random settling time, spaced beyond the chaotic divergence time
// 2 / lambda_max with lambda_max ~ 0.905.
class LorenzTask final : public Task {
 public:
  static constexpr double kSigma = 10.0;
  static constexpr double kBeta = 8.0 / 3.0;
  static constexpr double kLyapunov = 0.905;
  static constexpr int kNObs = 5;
  static constexpr double kDtInt = 0.002;
  static constexpr double kGammaShape = 5.0;
  static constexpr double kGammaScale = 2.0;

  std::string name() const override { return "lorenz"; }
  int theta_dim() const override { return 1; }
  int x_dim() const override { return 3 * kNObs; }
  VectorXd prior_sample(Rng& rng) const override {
    std::uniform_real_distribution<double> u(30.0, 40.0);
    VectorXd t(1);
    t(0) = u(rng);
    return t;
  }
  double prior_logdensity(const VectorXd& theta) const override {
    check_theta(theta);
    return detail::uniform_logdensity(theta(0), 30.0, 40.0);
  }
  VectorXd do_simulate(Rng& rng, const VectorXd& theta, SimStats*) const override {
    check_theta(theta);
    std::gamma_distribution<double> start(kGammaShape, kGammaScale);
    double t0 = start(rng);
    return rk4_lorenz(rng, theta(0), kDtInt, t0, obs_spacing(), kNObs);
  }
  VectorXd theta_star() const override {
    VectorXd t(1);
    t(0) = 35.0;
    return t;
  }
  std::vector<GridSpec> theta_grid() const override { return {{30.0, 40.0, 200}}; }
  std::vector<double> obs_times() const override {
    std::vector<double> t(kNObs);
    for (int i = 0; i < kNObs; ++i) t[static_cast<std::size_t>(i)] = obs_spacing() * i;
    return t;
  }
  static double obs_spacing() { return 2.0 / kLyapunov; }
};

inline std::unique_ptr<Task> make_task(const std::string& name,
                                       const nlohmann::json& params = nlohmann::json::object()) {
  if (name == "gauss_toy") return std::make_unique<GaussToyTask>();
  if (name == "ou1d") return std::make_unique<OuTask1d>();
  if (name == "ou_nd") {
    int d = params.contains("dim") ? params.at("dim").get<int>() : 2;
    return std::make_unique<OuTaskNd>(d);
  }
  if (name == "birth_death") return std::make_unique<BirthDeathTask>();
  if (name == "sir") return std::make_unique<SirTask>();
  if (name == "lorenz") return std::make_unique<LorenzTask>();
  throw std::invalid_argument("unknown task: " + name +
                              " (expected gauss_toy|ou1d|ou_nd|birth_death|sir|lorenz)");
}

}  // namespace minimalist
