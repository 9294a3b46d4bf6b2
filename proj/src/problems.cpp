#include "proxflow/problems.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "proxflow/error.hpp"

namespace proxflow {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// log N(x; m, S) for every column of x, with S = L L^T.
Vec gaussian_logpdf(const Mat& x, const Vec& mean, const Eigen::LLT<Mat>& llt) {
  const double n = static_cast<double>(mean.size());
  const Mat l = llt.matrixL();
  const double half_logdet = l.diagonal().array().log().sum();
  const Mat r = llt.matrixL().solve(x.colwise() - mean);
  return (-0.5 * r.colwise().squaredNorm().array() - half_logdet - 0.5 * n * std::log(kTwoPi)).transpose();
}

Eigen::LLT<Mat> checked_llt(const Mat& s, const std::string& what) {
  Eigen::LLT<Mat> llt(s);
  if (llt.info() != Eigen::Success) throw NumericalError(what + ": matrix is not positive definite");
  return llt;
}

}  // namespace

void GaussianMixture::validate() const {
  if (means.empty()) throw InvalidArgument("GaussianMixture: no components");
  if (static_cast<std::size_t>(weights.size()) != means.size() || covs.size() != means.size())
    throw InvalidArgument("GaussianMixture: weights, means and covs must have equal length");
  const auto n = means.front().size();
  for (std::size_t k = 0; k < means.size(); ++k) {
    if (means[k].size() != n || covs[k].rows() != n || covs[k].cols() != n)
      throw InvalidArgument("GaussianMixture: component " + std::to_string(k) + " has inconsistent shape");
    if (!(weights(static_cast<Eigen::Index>(k)) >= 0.0))
      throw InvalidArgument("GaussianMixture: negative weight");
    if ((covs[k] - covs[k].transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + covs[k].cwiseAbs().maxCoeff()))
      throw InvalidArgument("GaussianMixture: covariance " + std::to_string(k) + " is not symmetric");
    checked_llt(covs[k], "GaussianMixture covariance " + std::to_string(k));
  }
  if (std::abs(weights.sum() - 1.0) > 1e-12) throw InvalidArgument("GaussianMixture: weights do not sum to 1");
}

Vec GaussianMixture::mean() const {
  Vec m = Vec::Zero(static_cast<Eigen::Index>(dim()));
  for (std::size_t k = 0; k < size(); ++k) m += weights(static_cast<Eigen::Index>(k)) * means[k];
  return m;
}

Mat gmm_sample(const GaussianMixture& mix, std::size_t count, Rng& rng) {
  mix.validate();
  const auto n = static_cast<Eigen::Index>(mix.dim());
  std::vector<Mat> factors;
  for (const auto& c : mix.covs) factors.emplace_back(Eigen::LLT<Mat>(c).matrixL());
  Mat out(n, static_cast<Eigen::Index>(count));
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    const double u = rng.uniform();
    std::size_t k = 0;
    double acc = mix.weights(0);
    while (u >= acc && k + 1 < mix.size()) acc += mix.weights(static_cast<Eigen::Index>(++k));
    out.col(j) = mix.means[k] + factors[k] * rng.normal_matrix(n, 1);
  }
  return out;
}

Vec gmm_logpdf(const GaussianMixture& mix, const Mat& x) {
  mix.validate();
  if (x.rows() != static_cast<Eigen::Index>(mix.dim())) throw InvalidArgument("gmm_logpdf: dimension mismatch");
  Mat terms(static_cast<Eigen::Index>(mix.size()), x.cols());
  for (std::size_t k = 0; k < mix.size(); ++k) {
    const double w = mix.weights(static_cast<Eigen::Index>(k));
    const double lw = w > 0.0 ? std::log(w) : -std::numeric_limits<double>::infinity();
    terms.row(static_cast<Eigen::Index>(k)) =
        (gaussian_logpdf(x, mix.means[k], checked_llt(mix.covs[k], "gmm_logpdf")).array() + lw).transpose();
  }
  Vec out(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double m = terms.col(j).maxCoeff();
    out(j) = std::isfinite(m) ? m + std::log((terms.col(j).array() - m).exp().sum()) : m;
  }
  return out;
}

double gmm_logpdf(const GaussianMixture& mix, const Vec& x) { return gmm_logpdf(mix, Mat(x))(0); }

std::pair<Mat, Mat> InverseProblem::sample_pairs(std::size_t count, Rng& rng) const {
  Mat x = prior_sample(count, rng);
  Mat y = forward(x) + noise_std * rng.normal_matrix(static_cast<Eigen::Index>(d), x.cols());
  return {std::move(y), std::move(x)};
}

InverseProblem circle_problem() {
  InverseProblem p;
  p.name = "circle";
  p.n = 2;
  p.d = 1;
  p.noise_std = 0.02;
  p.forward_matrix = Mat(1, 2);
  p.forward_matrix << 1.0, 0.0;
  p.forward = [](const Mat& x) -> Mat { return x.topRows(1); };
  p.prior_sample = [](std::size_t count, Rng& rng) {
    Mat x(2, static_cast<Eigen::Index>(count));
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double th = rng.uniform(0.0, kTwoPi);
      x(0, j) = std::cos(th) + 0.1 * rng.normal();
      x(1, j) = std::sin(th) + 0.1 * rng.normal();
    }
    return x;
  };
  return p;
}

Mat circle_posterior_sample(const InverseProblem& problem, double y, std::size_t count, Rng& rng) {
  const double s2 = problem.noise_std * problem.noise_std;
  Mat out(2, static_cast<Eigen::Index>(count));
  Eigen::Index filled = 0;
  std::size_t tries = 0;
  while (filled < out.cols()) {
    const Mat x = problem.prior_sample(4096, rng);
    for (Eigen::Index j = 0; j < x.cols() && filled < out.cols(); ++j) {
      const double r = y - x(0, j);
      if (rng.uniform() < std::exp(-0.5 * r * r / s2)) out.col(filled++) = x.col(j);
    }
    if (++tries > 100000) throw NumericalError("circle_posterior_sample: acceptance rate too low for y");
  }
  return out;
}

InverseProblem mixture_problem(std::size_t n, std::size_t components, Rng& rng) {
  if (n == 0 || components == 0) throw InvalidArgument("mixture_problem: n and components must be positive");
  InverseProblem p;
  p.name = "mixture";
  p.n = n;
  p.d = n;
  p.noise_std = 0.05;
  const auto m = static_cast<Eigen::Index>(n);
  Vec diag(m);
  for (Eigen::Index i = 0; i < m; ++i) diag(i) = 0.1 / static_cast<double>(i + 1);
  p.forward_matrix = diag.asDiagonal();
  GaussianMixture mix;
  mix.weights = Vec::Constant(static_cast<Eigen::Index>(components), 1.0 / static_cast<double>(components));
  for (std::size_t k = 0; k < components; ++k) {
    mix.means.push_back(rng.uniform_matrix(m, 1, -1.0, 1.0).col(0));
    mix.covs.push_back(1e-4 * Mat::Identity(m, m));
  }
  // Equal weights 1/K may not sum to 1 exactly in floating point.
  mix.weights /= mix.weights.sum();
  const Mat a = p.forward_matrix;
  p.forward = [a](const Mat& x) -> Mat { return a * x; };
  p.prior_sample = [mix](std::size_t count, Rng& r) { return gmm_sample(mix, count, r); };
  p.prior_mixture = std::move(mix);
  return p;
}

GaussianMixture mixture_posterior(const GaussianMixture& prior, const Mat& a, double noise_std, const Vec& y) {
  prior.validate();
  const auto n = static_cast<Eigen::Index>(prior.dim());
  if (a.cols() != n || a.rows() != y.size()) throw InvalidArgument("mixture_posterior: shape mismatch");
  if (!(noise_std > 0.0)) throw InvalidArgument("mixture_posterior: noise_std must be positive");
  const double s2 = noise_std * noise_std;
  const Mat ata = a.transpose() * a / s2;
  const Vec aty = a.transpose() * y / s2;

  GaussianMixture post;
  Vec logw(static_cast<Eigen::Index>(prior.size()));
  for (std::size_t k = 0; k < prior.size(); ++k) {
    const auto prior_llt = checked_llt(prior.covs[k], "mixture_posterior prior covariance");
    const Mat prec = prior_llt.solve(Mat::Identity(n, n)) + ata;
    Eigen::LLT<Mat> prec_llt(prec);
    if (prec_llt.info() != Eigen::Success) throw NumericalError("mixture_posterior: posterior precision singular");
    Mat cov = prec_llt.solve(Mat::Identity(n, n));
    cov = 0.5 * (cov + cov.transpose());
    post.means.push_back(cov * (prior_llt.solve(prior.means[k]) + aty));
    post.covs.push_back(std::move(cov));

    Mat marg = a * prior.covs[k] * a.transpose();
    marg.diagonal().array() += s2;
    const double w = prior.weights(static_cast<Eigen::Index>(k));
    logw(static_cast<Eigen::Index>(k)) =
        (w > 0.0 ? std::log(w) : -std::numeric_limits<double>::infinity()) +
        gaussian_logpdf(Mat(y), a * prior.means[k], checked_llt(marg, "mixture_posterior marginal"))(0);
  }
  const double m = logw.maxCoeff();
  if (!std::isfinite(m)) throw NumericalError("mixture_posterior: observation has zero likelihood");
  post.weights = (logw.array() - m).exp();
  post.weights /= post.weights.sum();
  return post;
}

GaussianMixture mixture_posterior(const InverseProblem& problem, const Vec& y) {
  if (!problem.prior_mixture || problem.forward_matrix.size() == 0)
    throw InvalidArgument("mixture_posterior: problem needs a mixture prior and a linear forward map");
  return mixture_posterior(*problem.prior_mixture, problem.forward_matrix, problem.noise_std, y);
}

const std::vector<std::string>& toy_names() {
  static const std::vector<std::string> names{"eight_modes", "two_moons", "two_circles", "checkerboard"};
  return names;
}

Mat sample_toy(const std::string& name, std::size_t count, Rng& rng) {
  if (count == 0) throw InvalidArgument("sample_toy: count must be positive");
  Mat x(2, static_cast<Eigen::Index>(count));
  if (name == "eight_modes") {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double th = kTwoPi * static_cast<double>(rng.below(8)) / 8.0;
      x(0, j) = 2.0 * std::cos(th) + 0.15 * rng.normal();
      x(1, j) = 2.0 * std::sin(th) + 0.15 * rng.normal();
    }
  } else if (name == "two_moons") {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double th = rng.uniform(0.0, std::numbers::pi);
      if (rng.below(2) == 0) {
        x(0, j) = std::cos(th);
        x(1, j) = std::sin(th);
      } else {
        x(0, j) = 1.0 - std::cos(th);
        x(1, j) = 0.5 - std::sin(th);
      }
      x(0, j) += 0.1 * rng.normal();
      x(1, j) += 0.1 * rng.normal();
    }
  } else if (name == "two_circles") {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double r = (rng.below(2) == 0 ? 1.0 : 2.0) + 0.08 * rng.normal();
      const double th = rng.uniform(0.0, kTwoPi);
      x(0, j) = r * std::cos(th);
      x(1, j) = r * std::sin(th);
    }
  } else if (name == "checkerboard") {
    // 8 dark cells of the 4x4 board on [-2, 2]^2: (i + j) even.
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const auto cell = rng.below(8);
      const auto row = static_cast<double>(cell / 2);
      const auto col = static_cast<double>(2 * (cell % 2) + (cell / 2) % 2);
      x(0, j) = -2.0 + col + rng.uniform();
      x(1, j) = -2.0 + row + rng.uniform();
    }
  } else {
    throw InvalidArgument("sample_toy: unknown density '" + name +
                          "' (expected eight_modes, two_moons, two_circles or checkerboard)");
  }
  return x;
}

double relaxed_uniform_logpdf(const Vec& x, double alpha) {
  if (!(alpha > 0.0)) throw InvalidArgument("relaxed_uniform_logpdf: alpha must be positive");
  const double base = std::log(alpha / (2.0 * alpha + 2.0));
  double acc = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) acc += base - alpha * std::max(0.0, std::abs(x(i)) - 1.0);
  return acc;
}

}  // namespace proxflow
