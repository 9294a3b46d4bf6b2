#pragma once

#include <cmath>
#include <functional>

#include "proxflow/flow.hpp"

namespace testing_helpers {

using proxflow::Mat;
using proxflow::Vec;

/// Random unconditional block with nonzero biases and a non-trivial actnorm.
inline proxflow::ResidualBlock random_block(std::size_t n, std::size_t p, std::size_t h, std::size_t kappa,
                                            double gamma, proxflow::Rng& rng,
                                            proxflow::Activation act = proxflow::Activation::elu(),
                                            std::size_t cond_dim = 0) {
  proxflow::Pnn phi = proxflow::Pnn::random(n + cond_dim, p, h, kappa, act, rng);
  for (auto& layer : phi.layers()) layer.bias = 0.5 * rng.normal_matrix(layer.bias.size(), 1).col(0);
  proxflow::ActNorm an(rng.uniform_matrix(static_cast<Eigen::Index>(n), 1, 0.6, 1.4).col(0),
                       0.3 * rng.normal_matrix(static_cast<Eigen::Index>(n), 1).col(0));
  return proxflow::ResidualBlock(gamma, std::move(phi), std::move(an), cond_dim);
}

/// Central-difference Jacobian of f at x.
inline Mat fd_jacobian(const std::function<Vec(const Vec&)>& f, const Vec& x, double h = 1e-6) {
  const Vec f0 = f(x);
  Mat j(f0.size(), x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    Vec xp = x, xm = x;
    xp(k) += h;
    xm(k) -= h;
    j.col(k) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return j;
}

inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max(floor, std::max(std::abs(a), std::abs(b)));
}

/// Mean and standard error of a sample.
inline std::pair<double, double> mean_se(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  s /= static_cast<double>(v.size() - 1);
  return {m, std::sqrt(s / static_cast<double>(v.size()))};
}

}  // namespace testing_helpers
