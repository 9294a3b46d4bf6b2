#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>
#include <numeric>

#include "proxflow/error.hpp"
#include "proxflow/metrics.hpp"

using namespace proxflow;

namespace {

double brute_w2(const Mat& p, const Mat& q) {
  std::vector<int> perm(static_cast<std::size_t>(p.cols()));
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < p.cols(); ++i) acc += (p.col(i) - q.col(perm[static_cast<std::size_t>(i)])).squaredNorm();
    best = std::min(best, acc);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return std::sqrt(best / static_cast<double>(p.cols()));
}

}  // namespace

TEST(Kl, HandExample) {
  EXPECT_NEAR(kl_from_histograms({0.75, 0.25}, {0.5, 0.5}), 0.75 * std::log(1.5) + 0.25 * std::log(0.5), 1e-15);
  EXPECT_NEAR(kl_from_histograms({0.75, 0.25}, {0.5, 0.5}), 0.13081, 1e-5);
}

TEST(Kl, HandExampleFromSamples) {
  // Bins [0, 0.5) and [0.5, 1] on a fixed box.
  Mat p(1, 4), q(1, 4);
  p << 0.1, 0.2, 0.3, 0.9;
  q << 0.1, 0.2, 0.7, 0.9;
  GridSpec g;
  g.bins = {2};
  g.lo = Vec::Zero(1);
  g.hi = Vec::Ones(1);
  const auto r = empirical_kl(p, q, g);
  EXPECT_NEAR(r.value, 0.13081, 1e-5);
  EXPECT_EQ(r.out_of_box, 0u);
  EXPECT_EQ(r.eps_bins, 0u);
}

TEST(Kl, IdenticalSetsGiveZero) {
  Rng rng(1);
  const Mat x = rng.normal_matrix(2, 500);
  GridSpec g;
  g.bins = {16, 16};
  EXPECT_EQ(empirical_kl(x, x, g).value, 0.0);
}

TEST(Kl, EmptyReferenceBinUsesEps) {
  Mat p(1, 2), q(1, 2);
  p << 0.9, 0.95;
  q << 0.1, 0.2;
  GridSpec g;
  g.bins = {2};
  g.lo = Vec::Zero(1);
  g.hi = Vec::Ones(1);
  const auto r = empirical_kl(p, q, g);
  EXPECT_NEAR(r.value, std::log(1.0 / kKlEps), 1e-12);
  EXPECT_EQ(r.eps_bins, 1u);
}

TEST(Kl, OutOfBoxClampedAndCounted) {
  Mat p(1, 3);
  p << -5.0, 0.5, 7.0;
  GridSpec g;
  g.bins = {4};
  g.lo = Vec::Zero(1);
  g.hi = Vec::Ones(1);
  std::size_t out = 0;
  const auto h = histogram(p, g, &out);
  EXPECT_EQ(out, 2u);
  EXPECT_DOUBLE_EQ(h[0], 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(h[3], 1.0 / 3.0);
}

TEST(Kl, DefaultBoxIsPaddedHullOfReference) {
  Mat q(1, 3);
  q << 0.0, 1.0, 10.0;
  GridSpec g;
  g.bins = {10};
  const auto r = empirical_kl(q, q, g);
  EXPECT_DOUBLE_EQ(r.lo(0), -0.5);
  EXPECT_DOUBLE_EQ(r.hi(0), 10.5);
}

TEST(Kl, NonnegativeWithoutEpsBins) {
  Rng rng(2);
  GridSpec g;
  g.bins = {8, 8};
  for (int t = 0; t < 20; ++t) {
    const Mat p = rng.normal_matrix(2, 300);
    const Mat q = 1.3 * rng.normal_matrix(2, 3000);
    const auto r = empirical_kl(p, q, g);
    if (r.eps_bins == 0) EXPECT_GE(r.value, 0.0);
  }
}

TEST(Kl, Errors) {
  GridSpec g;
  g.bins = {4};
  EXPECT_THROW(empirical_kl(Mat(1, 0), Mat::Zero(1, 3), g), InvalidArgument);
  EXPECT_THROW(empirical_kl(Mat::Zero(2, 3), Mat::Zero(2, 3), g), InvalidArgument);
  g.bins = {0};
  EXPECT_THROW(empirical_kl(Mat::Zero(1, 3), Mat::Zero(1, 3), g), InvalidArgument);
  g.bins = {3};
  g.lo = Vec::Ones(1);
  g.hi = Vec::Ones(1);
  EXPECT_THROW(empirical_kl(Mat::Zero(1, 3), Mat::Zero(1, 3), g), InvalidArgument);
}

TEST(W2, Examples) {
  Mat a = Mat::Zero(2, 1), b(2, 1);
  b << 3.0, 4.0;
  EXPECT_DOUBLE_EQ(empirical_w2(a, b), 5.0);
  Rng rng(3);
  const Mat x = rng.normal_matrix(3, 40);
  EXPECT_EQ(empirical_w2(x, x), 0.0);
}

TEST(W2, MatchesPermutationBruteForce) {
  Rng rng(4);
  for (int t = 0; t < 30; ++t) {
    const Mat p = rng.normal_matrix(2, 5), q = rng.normal_matrix(2, 5);
    EXPECT_NEAR(empirical_w2(p, q), brute_w2(p, q), 1e-14);
  }
}

TEST(W2, MetricProperties) {
  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    const Mat a = rng.normal_matrix(3, 30), b = rng.normal_matrix(3, 30), c = 2.0 * rng.normal_matrix(3, 30);
    EXPECT_EQ(empirical_w2(a, b), empirical_w2(b, a));
    EXPECT_LE(empirical_w2(a, c), empirical_w2(a, b) + empirical_w2(b, c) + 1e-9);
    const Vec shift = rng.normal_matrix(3, 1).col(0);
    EXPECT_NEAR(empirical_w2(a.colwise() + shift, b.colwise() + shift), empirical_w2(a, b), 1e-12);
  }
}

TEST(W2, Guards) {
  EXPECT_THROW(empirical_w2(Mat::Zero(2, 3), Mat::Zero(2, 4)), InvalidArgument);
  EXPECT_THROW(empirical_w2(Mat::Zero(2, 2001), Mat::Zero(2, 2001)), InvalidArgument);
  EXPECT_THROW(solve_assignment(Mat::Zero(2, 3)), InvalidArgument);
}

TEST(Assignment, KnownOptimum) {
  Mat c(3, 3);
  c << 4, 1, 3, 2, 0, 5, 3, 2, 2;
  const auto m = solve_assignment(c);
  double total = 0.0;
  for (std::size_t i = 0; i < 3; ++i) total += c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(m[i]));
  EXPECT_EQ(total, 5.0);
}

TEST(Report, JsonContract) {
  const auto j = nlohmann::json::parse(metric_report_json("kl", 0.5, 100, {64, 64}, 3));
  EXPECT_EQ(j["metric"], "kl");
  EXPECT_EQ(j["value"], 0.5);
  EXPECT_EQ(j["n"], 100);
  EXPECT_EQ(j["grid"], nlohmann::json::array({64, 64}));
  EXPECT_EQ(j["out_of_box"], 3);
}
