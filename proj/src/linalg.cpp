#include "proxflow/linalg.hpp"

#include <cmath>
#include <numbers>

#include "proxflow/error.hpp"

namespace proxflow {

std::size_t Rng::below(std::size_t n) {
  if (n == 0) throw InvalidArgument("Rng::below: empty range");
  // Rejection sampling keeps the result exactly uniform.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t r;
  do {
    r = engine_();
  } while (r >= limit);
  return static_cast<std::size_t>(r % n);
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(a);
  has_spare_ = true;
  return r * std::cos(a);
}

Mat Rng::normal_matrix(Eigen::Index rows, Eigen::Index cols) {
  Mat m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal();
  return m;
}

Mat Rng::uniform_matrix(Eigen::Index rows, Eigen::Index cols, double lo, double hi) {
  Mat m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = uniform(lo, hi);
  return m;
}

namespace linalg {

double orth_defect(const Mat& t) {
  if (is_wide(t)) {
    const Mat g = t * t.transpose();
    return (g - Mat::Identity(g.rows(), g.cols())).norm();
  }
  const Mat g = t.transpose() * t;
  return (g - Mat::Identity(g.rows(), g.cols())).norm();
}

Mat polar_step(const Mat& y) {
  Mat s = y.transpose() * y;
  s.diagonal().array() += 1.0;
  Eigen::LLT<Mat> llt(s);
  if (llt.info() != Eigen::Success) throw NumericalError("polar_step: I + Y^T Y is not invertible");
  // Y S^{-1} = (S^{-1} Y^T)^T since S is symmetric.
  return 2.0 * llt.solve(y.transpose()).transpose();
}

PolarResult polar_iterate(const Mat& t_tilde, const PolarOptions& opts) {
  if (!(opts.tol > 0.0)) throw InvalidArgument("polar_project: tol must be positive");
  if (t_tilde.size() == 0) throw InvalidArgument("polar_project: empty matrix");
  if (!t_tilde.allFinite()) throw NumericalError("polar_project: non-finite input");

  const bool wide = is_wide(t_tilde);
  Mat y = wide ? Mat(t_tilde.transpose()) : t_tilde;

  {
    Eigen::LLT<Mat> gram(y.transpose() * y);
    if (gram.info() != Eigen::Success)
      throw NumericalError("polar_project: input is rank deficient");
  }

  PolarResult out;
  double defect = orth_defect(y);
  std::size_t extra = 0;
  while (defect > opts.tol || extra < opts.extra_steps) {
    if (defect <= opts.tol) ++extra;
    if (out.steps == opts.max_iter) {
      if (defect <= opts.tol) break;
      throw ConvergenceError("polar_project did not converge", defect, out.steps);
    }
    y = polar_step(y);
    ++out.steps;
    defect = orth_defect(y);
  }
  out.defect = defect;
  out.value = wide ? Mat(y.transpose()) : std::move(y);
  return out;
}

Mat polar_project(const Mat& t_tilde, double tol, std::size_t max_iter) {
  return polar_iterate(t_tilde, {tol, max_iter, 0}).value;
}

double lu_logabsdet(const Mat& m) {
  if (m.rows() != m.cols()) throw InvalidArgument("lu_logabsdet: matrix must be square");
  if (m.size() == 0) return 0.0;
  Eigen::PartialPivLU<Mat> lu(m);
  const auto diag = lu.matrixLU().diagonal();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < diag.size(); ++i) {
    if (diag(i) == 0.0) return -std::numeric_limits<double>::infinity();
    acc += std::log(std::abs(diag(i)));
  }
  return acc;
}

}  // namespace linalg
}  // namespace proxflow
