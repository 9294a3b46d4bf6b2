#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "proxflow/error.hpp"
#include "proxflow/linalg.hpp"

using namespace proxflow;

namespace {

Mat svd_polar(const Mat& m) {
  Eigen::JacobiSVD<Mat> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return svd.matrixU() * svd.matrixV().transpose();
}

// Laplace expansion along the first row.
double cofactor_det(const Mat& m) {
  if (m.rows() == 1) return m(0, 0);
  double acc = 0.0;
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    Mat minor(m.rows() - 1, m.cols() - 1);
    for (Eigen::Index r = 1; r < m.rows(); ++r) {
      Eigen::Index c2 = 0;
      for (Eigen::Index c = 0; c < m.cols(); ++c)
        if (c != j) minor(r - 1, c2++) = m(r, c);
    }
    acc += ((j % 2) ? -1.0 : 1.0) * m(0, j) * cofactor_det(minor);
  }
  return acc;
}

}  // namespace

TEST(PolarProject, IdentityIsFixed) {
  const Mat i = Mat::Identity(3, 3);
  EXPECT_LE((linalg::polar_project(i) - i).norm(), 1e-15);
}

TEST(PolarProject, ScaledIdentityMapsToIdentity) {
  const Mat r = linalg::polar_project(2.0 * Mat::Identity(2, 2));
  EXPECT_LE((r - Mat::Identity(2, 2)).norm(), 1e-12);
}

TEST(PolarProject, WideGaussianMatchesSvdOracle) {
  Rng rng(1);
  const Mat m = rng.normal_matrix(64, 128);
  const Mat r = linalg::polar_project(m, 1e-10, 50);
  EXPECT_LE((r * r.transpose() - Mat::Identity(64, 64)).norm(), 1e-10);
  EXPECT_LE((r - svd_polar(m)).norm(), 1e-8);
}

TEST(PolarProject, TallGaussianMatchesSvdOracle) {
  Rng rng(2);
  const Mat m = rng.normal_matrix(128, 20);
  const Mat r = linalg::polar_project(m);
  EXPECT_LE(linalg::orth_defect(r), 1e-10);
  EXPECT_LE((r.transpose() * r - Mat::Identity(20, 20)).norm(), 1e-10);
  EXPECT_LE((r - svd_polar(m)).norm(), 1e-8);
}

TEST(PolarProject, Idempotent) {
  Rng rng(3);
  for (int k = 0; k < 5; ++k) {
    const Mat r = linalg::polar_project(rng.normal_matrix(12, 7));
    EXPECT_LE(linalg::orth_defect(linalg::polar_project(r)), 1e-10);
    EXPECT_LE((linalg::polar_project(r) - r).norm(), 1e-10);
  }
}

TEST(PolarProject, LeftOrthogonalInvariance) {
  Rng rng(4);
  for (int k = 0; k < 10; ++k) {
    const Mat x = rng.normal_matrix(9, 5);
    const Mat q = svd_polar(rng.normal_matrix(9, 9));
    EXPECT_LE((linalg::polar_project(q * x) - q * linalg::polar_project(x)).norm(), 1e-8);
  }
}

TEST(PolarProject, RankDeficientFails) {
  Mat m = Mat::Zero(4, 3);
  m(0, 0) = 1.0;
  m(1, 1) = 1.0;
  EXPECT_THROW(linalg::polar_project(m), NumericalError);
}

TEST(PolarProject, NonConvergenceCarriesDefect) {
  Rng rng(5);
  const Mat m = 50.0 * rng.normal_matrix(10, 10);
  try {
    linalg::polar_project(m, 1e-10, 2);
    FAIL() << "expected ConvergenceError";
  } catch (const ConvergenceError& e) {
    EXPECT_GT(e.residual(), 1e-10);
    EXPECT_EQ(e.iterations(), 2u);
  }
}

TEST(PolarProject, RejectsBadTolerance) {
  EXPECT_THROW(linalg::polar_project(Mat::Identity(2, 2), 0.0, 10), InvalidArgument);
}

TEST(OrthDefect, Examples) {
  EXPECT_EQ(linalg::orth_defect(Mat::Identity(4, 4)), 0.0);
  EXPECT_NEAR(linalg::orth_defect(2.0 * Mat::Identity(2, 2)), 3.0 * std::sqrt(2.0), 1e-12);
  // Wide matrices measure R R^T.
  Mat w = Mat::Zero(2, 3);
  w(0, 0) = 1.0;
  w(1, 2) = 1.0;
  EXPECT_EQ(linalg::orth_defect(w), 0.0);
}

TEST(LuLogAbsDet, Examples) {
  EXPECT_EQ(linalg::lu_logabsdet(Mat::Identity(5, 5)), 0.0);
  Mat d = Mat::Zero(2, 2);
  d(0, 0) = 2.0;
  d(1, 1) = 0.5;
  EXPECT_NEAR(linalg::lu_logabsdet(d), 0.0, 1e-15);
}

TEST(LuLogAbsDet, MatchesCofactorExpansion) {
  Rng rng(6);
  for (int k = 0; k < 20; ++k) {
    const Mat m = rng.normal_matrix(4, 4);
    EXPECT_NEAR(linalg::lu_logabsdet(m), std::log(std::abs(cofactor_det(m))), 1e-10);
  }
}

TEST(LuLogAbsDet, SingularSentinel) {
  Mat m = Mat::Ones(3, 3);
  const double v = linalg::lu_logabsdet(m);
  EXPECT_TRUE(linalg::is_singular_logdet(v));
  EXPECT_THROW(linalg::lu_logabsdet(Mat::Ones(2, 3)), InvalidArgument);
}

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 1000; ++i) {
    const double x = a.normal(), y = b.normal();
    EXPECT_EQ(std::memcmp(&x, &y, sizeof(double)), 0);
    if (c.normal() != x) differs = true;
  }
  EXPECT_TRUE(differs);
  EXPECT_EQ(Rng(7).normal_matrix(3, 4), Rng(7).normal_matrix(3, 4));
}

TEST(Rng, UniformAndBelowRanges) {
  Rng r(9);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LT(r.below(7), 7u);
  }
}

TEST(Rng, NormalMoments) {
  Rng r(10);
  const Mat z = r.normal_matrix(1, 200000);
  EXPECT_NEAR(z.mean(), 0.0, 0.01);
  EXPECT_NEAR((z.array() - z.mean()).square().mean(), 1.0, 0.02);
}
