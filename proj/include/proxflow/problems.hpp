#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "proxflow/linalg.hpp"

namespace proxflow {

/// Samples are columns throughout.
struct GaussianMixture {
  Vec weights;
  std::vector<Vec> means;
  std::vector<Mat> covs;

  std::size_t dim() const { return means.empty() ? 0 : static_cast<std::size_t>(means.front().size()); }
  std::size_t size() const { return means.size(); }
  /// Weights nonnegative and summing to 1 (1e-12), covariances SPD, shapes consistent.
  void validate() const;
  Vec mean() const;
};

Mat gmm_sample(const GaussianMixture& mix, std::size_t count, Rng& rng);
/// Log-density per column (log-sum-exp over components).
Vec gmm_logpdf(const GaussianMixture& mix, const Mat& x);
double gmm_logpdf(const GaussianMixture& mix, const Vec& x);

/// y = F(x) + eta, eta ~ N(0, noise_std^2 I).
struct InverseProblem {
  std::string name;
  std::size_t n = 0;  // unknown x
  std::size_t d = 0;  // observation y
  double noise_std = 0.0;
  /// Linear forward matrix (d x n) where F is linear; empty otherwise.
  Mat forward_matrix;
  std::function<Mat(const Mat&)> forward;
  std::function<Mat(std::size_t, Rng&)> prior_sample;
  std::optional<GaussianMixture> prior_mixture;

  /// Joint draws; returns y (d x count) and x (n x count).
  std::pair<Mat, Mat> sample_pairs(std::size_t count, Rng& rng) const;
};

/// Unit circle convolved with N(0, 0.1^2 I), F(x) = x_1, noise 0.02.
InverseProblem circle_problem();
/// Exact posterior draws for the circle problem by rejection from the prior.
Mat circle_posterior_sample(const InverseProblem& problem, double y, std::size_t count, Rng& rng);

/// F(x) = A x with A_ii = 0.1 / i, noise 0.05, prior an equal-weight mixture
/// with means ~ U[-1, 1]^n and covariance 0.01^2 I.
InverseProblem mixture_problem(std::size_t n, std::size_t components, Rng& rng);

/// Closed-form posterior of a Gaussian-mixture prior under a linear Gaussian
/// likelihood y = A x + N(0, s^2 I).
GaussianMixture mixture_posterior(const GaussianMixture& prior, const Mat& a, double noise_std, const Vec& y);
GaussianMixture mixture_posterior(const InverseProblem& problem, const Vec& y);

/// Toy 2-D densities: eight_modes, two_moons, two_circles, checkerboard.
const std::vector<std::string>& toy_names();
Mat sample_toy(const std::string& name, std::size_t count, Rng& rng);

/// sum_i log q(x_i), q = a/(2a+2) on [-1, 1] with exp(-a dist) tails.
double relaxed_uniform_logpdf(const Vec& x, double alpha);

}  // namespace proxflow
