#include <gtest/gtest.h>

#include <algorithm>

#include "proxflow/error.hpp"
#include "proxflow/flow.hpp"
#include "proxflow/pnn.hpp"

using namespace proxflow;

namespace {

Pnn identity_pnn(Eigen::Index n, Rng& rng, Vec bias) {
  ProxBlock layer(rng.normal_matrix(n, n), std::move(bias), Activation::identity());
  return Pnn(static_cast<std::size_t>(n), 1, {layer});
}

double max_r_ratio(const Pnn& pnn, Rng& rng, int pairs) {
  const auto n = static_cast<Eigen::Index>(pnn.base_dim());
  const Mat x1 = 2.0 * rng.normal_matrix(n, pairs);
  const Mat x2 = x1 + rng.normal_matrix(n, pairs).cwiseProduct(rng.uniform_matrix(n, pairs, 0.0, 1.0));
  const Mat d = pnn.r_forward(x1) - pnn.r_forward(x2);
  double worst = 0.0;
  for (int j = 0; j < pairs; ++j) worst = std::max(worst, d.col(j).norm() / (x1.col(j) - x2.col(j)).norm());
  return worst;
}

}  // namespace

TEST(Averagedness, Values) {
  Rng rng(1);
  EXPECT_DOUBLE_EQ(averagedness(Pnn::random(2, 1, 2, 1, Activation::elu(), rng)), 0.5);
  EXPECT_DOUBLE_EQ(averagedness(Pnn::random(2, 1, 2, 3, Activation::elu(), rng)), 0.75);
  EXPECT_DOUBLE_EQ(ResidualBlock::gamma_bound(3), 2.0);
  EXPECT_TRUE(std::isinf(ResidualBlock::gamma_bound(1)));
}

TEST(PnnForward, IdentityActivationOrthogonalIsIdentity) {
  Rng rng(2);
  const Pnn pnn = identity_pnn(3, rng, Vec::Zero(3));
  const Vec x = rng.normal_matrix(3, 1).col(0);
  EXPECT_LE((pnn_forward(pnn, x).y - x).norm(), 1e-14);
}

TEST(PnnForward, IdentityActivationAddsTransposedBias) {
  Rng rng(3);
  const Vec b = rng.normal_matrix(3, 1).col(0);
  const Pnn pnn = identity_pnn(3, rng, b);
  const Vec x = rng.normal_matrix(3, 1).col(0);
  const Mat& t = pnn.layers()[0].t;
  EXPECT_LE((pnn_forward(pnn, x).y - (x + t.transpose() * b)).norm(), 1e-14);
}

TEST(PnnForward, DimensionMismatchFails) {
  Rng rng(4);
  const Pnn pnn = Pnn::random(3, 1, 4, 2, Activation::elu(), rng);
  EXPECT_THROW(pnn_forward(pnn, Vec::Zero(2)), InvalidArgument);
}

TEST(Pnn, WidenMatrixIsStiefel) {
  Rng rng(5);
  const Pnn pnn = Pnn::random(3, 4, 5, 1, Activation::elu(), rng);
  const Mat& a = pnn.widen_matrix();
  EXPECT_EQ(a.rows(), 12);
  EXPECT_LE((a.transpose() * a - Mat::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Pnn, LayerWidthMismatchFails) {
  Rng rng(6);
  ProxBlock a(rng.normal_matrix(3, 4), Vec::Zero(3), Activation::elu());
  ProxBlock b(rng.normal_matrix(3, 5), Vec::Zero(3), Activation::elu());
  EXPECT_THROW(Pnn(2, 2, {a, b}), InvalidArgument);
  EXPECT_THROW(ProxBlock(rng.normal_matrix(3, 4), Vec::Zero(2), Activation::elu()), InvalidArgument);
}

TEST(RForward, Examples) {
  Rng rng(7);
  const Pnn pnn = identity_pnn(4, rng, Vec::Zero(4));
  const Vec x = rng.normal_matrix(4, 1).col(0);
  EXPECT_LE((r_forward(pnn, x) - x).norm(), 1e-14);
  Pnn zb = Pnn::random(4, 2, 6, 3, Activation::elu(), rng);
  EXPECT_EQ(r_forward(zb, Vec::Zero(4)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(RForward, NonexpansiveOnSampledPairs) {
  Rng rng(8);
  for (const std::size_t p : {1u, 3u}) {
    for (int trial = 0; trial < 3; ++trial) {
      Pnn pnn = Pnn::random(3, p, 7, 3, trial == 2 ? Activation::tanh() : Activation::elu(), rng);
      for (auto& l : pnn.layers()) l.bias = rng.normal_matrix(7, 1).col(0);
      EXPECT_LE(max_r_ratio(pnn, rng, 2000), 1.0 + 1e-9) << "p=" << p;
    }
  }
}

TEST(ProxBlock, HalfAveraged) {
  Rng rng(9);
  for (const Eigen::Index h : {2, 5, 9}) {
    ProxBlock layer(rng.normal_matrix(h, 5), rng.normal_matrix(h, 1).col(0), Activation::elu());
    const Mat x1 = rng.normal_matrix(5, 1000), x2 = rng.normal_matrix(5, 1000);
    const Mat r1 = 2.0 * layer.apply(x1) - x1, r2 = 2.0 * layer.apply(x2) - x2;
    for (int j = 0; j < 1000; ++j) EXPECT_LE((r1.col(j) - r2.col(j)).norm(), (x1.col(j) - x2.col(j)).norm() * (1 + 1e-12));
  }
}

TEST(Activation, StableContract) {
  Rng rng(10);
  for (const auto act : {Activation::elu(), Activation::elu(0.3), Activation::tanh(), Activation::identity()}) {
    EXPECT_EQ(act.value(0.0), 0.0);
    std::vector<double> xs(10000);
    for (auto& x : xs) x = 5.0 * rng.normal();
    std::sort(xs.begin(), xs.end());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double d = act.deriv(xs[i]);
      EXPECT_GE(d, 0.0);
      EXPECT_LE(d, 1.0);
      if (i > 0) EXPECT_LE(act.value(xs[i - 1]), act.value(xs[i]));
    }
  }
}

TEST(Activation, ParseAndValidate) {
  EXPECT_EQ(Activation::parse("tanh"), Activation::tanh());
  EXPECT_EQ(Activation::parse("elu", 0.5), Activation::elu(0.5));
  EXPECT_THROW(Activation::parse("relu6"), InvalidArgument);
  EXPECT_THROW(Activation::elu(1.5), InvalidArgument);
}

TEST(Pnn, ProjectionKeepsBothOrientations) {
  Rng rng(11);
  const Pnn wide = Pnn::random(4, 2, 3, 2, Activation::elu(), rng);
  const Pnn tall = Pnn::random(4, 2, 12, 2, Activation::elu(), rng);
  for (const auto& l : wide.layers()) EXPECT_LE((l.t * l.t.transpose() - Mat::Identity(3, 3)).norm(), 1e-10);
  for (const auto& l : tall.layers()) EXPECT_LE((l.t.transpose() * l.t - Mat::Identity(8, 8)).norm(), 1e-10);
}
