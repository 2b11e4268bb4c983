#pragma once

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "minimalist/nn.hpp"
#include "minimalist/rng.hpp"

namespace test_helpers {

using minimalist::MatrixXd;
using minimalist::MlpParams;
using minimalist::Rng;
using minimalist::VectorXd;

inline MlpParams random_params(int d_in, int h, Rng& rng, double scale = 0.5) {
  std::uniform_real_distribution<double> u(-scale, scale);
  MlpParams p;
  p.w1 = MatrixXd::NullaryExpr(h, d_in, [&] { return u(rng); });
  p.b1 = VectorXd::NullaryExpr(h, [&] { return u(rng); });
  p.w2 = MatrixXd::NullaryExpr(h, h, [&] { return u(rng); });
  p.b2 = VectorXd::NullaryExpr(h, [&] { return u(rng); });
  p.w_out = VectorXd::NullaryExpr(h, [&] { return u(rng); });
  p.b_out = u(rng);
  return p;
}

inline MatrixXd random_matrix(int rows, int cols, Rng& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return MatrixXd::NullaryExpr(rows, cols, [&] { return u(rng); });
}

inline VectorXd random_vector(int n, Rng& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return VectorXd::NullaryExpr(n, [&] { return u(rng); });
}

// Flat views over every scalar in a parameter set, in a fixed order.
inline std::vector<std::pair<double*, Eigen::Index>> param_views(MlpParams& p) {
  return {{p.w1.data(), p.w1.size()}, {p.b1.data(), p.b1.size()}, {p.w2.data(), p.w2.size()},
          {p.b2.data(), p.b2.size()}, {p.w_out.data(), p.w_out.size()}, {&p.b_out, 1}};
}

// Central finite difference of a scalar functional of the parameters with
// respect to one entry.
inline double central_difference(MlpParams& p, double* entry,
                                 const std::function<double(const MlpParams&)>& f,
                                 double step = 1e-5) {
  double saved = *entry;
  *entry = saved + step;
  double hi = f(p);
  *entry = saved - step;
  double lo = f(p);
  *entry = saved;
  return (hi - lo) / (2.0 * step);
}

inline bool close_rel(double a, double b, double rel, double abs_floor = 1e-8) {
  return std::abs(a - b) <= rel * std::max(std::abs(a), std::abs(b)) + abs_floor;
}

// Max relative mismatch between an analytic gradient set and finite
// differences of `loss_of_params`, over every parameter entry.
inline double max_gradient_mismatch(MlpParams params, const minimalist::GradientSet& analytic,
                                    const std::function<double(const MlpParams&)>& loss_of_params,
                                    double step = 1e-5) {
  MlpParams analytic_copy = analytic;
  auto views = param_views(params);
  auto grad_views = param_views(analytic_copy);
  double worst = 0.0;
  for (std::size_t v = 0; v < views.size(); ++v) {
    for (Eigen::Index i = 0; i < views[v].second; ++i) {
      double fd = central_difference(params, views[v].first + i, loss_of_params, step);
      double an = *(grad_views[v].first + i);
      double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
      worst = std::max(worst, std::abs(fd - an) / denom);
    }
  }
  return worst;
}

}  // namespace test_helpers
