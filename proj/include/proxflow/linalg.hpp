#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>

#include <Eigen/Dense>

namespace proxflow {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Deterministic random stream. Equal seeds give bitwise-equal sequences on
/// every platform: the engine is mt19937_64 and the transforms are our own.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n);

  /// Standard normal via Box-Muller; the second variate is cached.
  double normal();

  Mat normal_matrix(Eigen::Index rows, Eigen::Index cols);
  Mat uniform_matrix(Eigen::Index rows, Eigen::Index cols, double lo, double hi);

  /// Independent child stream, e.g. one per worker or per data source.
  Rng split() { return Rng(engine_() ^ 0x9E3779B97F4A7C15ULL); }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

namespace linalg {

struct PolarOptions {
  double tol = 1e-10;
  std::size_t max_iter = 50;
  /// Steps applied after the defect first drops below tol. One extra step
  /// makes the derivative of the unrolled iteration match the derivative of
  /// the exact projection to second order.
  std::size_t extra_steps = 0;
};

struct PolarResult {
  Mat value;
  std::size_t steps = 0;
  double defect = 0.0;
};

/// True when the matrix is wider than tall; such matrices are projected to
/// row-orthonormality (R R^T = I) instead of column-orthonormality.
inline bool is_wide(const Mat& m) { return m.rows() < m.cols(); }

/// ||T^T T - I||_F for tall/square T, ||T T^T - I||_F for wide T.
double orth_defect(const Mat& t);

/// One step Y -> 2 Y (I + Y^T Y)^{-1} for tall/square Y.
Mat polar_step(const Mat& y);

/// Polar iteration with explicit step control; throws ConvergenceError.
PolarResult polar_iterate(const Mat& t_tilde, const PolarOptions& opts);

/// Orthogonal projection onto the Stiefel manifold (the U factor of the
/// polar decomposition), computed by the iteration Y <- 2Y(I + Y^T Y)^{-1}.
/// Stops at the first iterate whose orth_defect is <= tol.
Mat polar_project(const Mat& t_tilde, double tol = 1e-10, std::size_t max_iter = 50);

/// log|det m| via partial-pivot LU. Returns -infinity for an exactly singular
/// matrix (a zero pivot).
double lu_logabsdet(const Mat& m);

inline bool is_singular_logdet(double v) { return v == -std::numeric_limits<double>::infinity(); }

}  // namespace linalg
}  // namespace proxflow
