#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <nlohmann/json.hpp>

#include "helpers.hpp"
#include "proxflow/error.hpp"
#include "proxflow/train.hpp"

using namespace proxflow;
using testing_helpers::random_block;

namespace {

ProxFlow small_flow(Rng& rng, std::size_t k = 2, double gamma = 1.5) {
  ProxFlow flow(2);
  for (std::size_t i = 0; i < k; ++i) flow.add_block(random_block(2, 2, 3, 3, gamma, rng));
  return flow;
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.K = 2;
  c.p = 2;
  c.h = 4;
  c.batch_b = 64;
  c.epochs_e = 2;
  c.steps_s = 10;
  c.lr_tau = 1e-2;
  c.seed = 3;
  return c;
}

}  // namespace

TEST(Loss, EmptyFlowAtOrigin) {
  const ProxFlow flow(2);
  const auto r = nll_loss(flow, Mat::Zero(2, 5), nullptr, {});
  EXPECT_NEAR(r.loss, std::log(2.0 * std::numbers::pi), 1e-15);
  EXPECT_EQ(r.penalty, 0.0);
  EXPECT_TRUE(r.grads.empty());
}

TEST(Penalty, ZeroWhenProjected) {
  Rng rng(1);
  ProxFlow flow = small_flow(rng);
  // Put every t_tilde on the manifold.
  for (auto& b : flow.blocks())
    for (auto& l : b.phi().layers()) l.t_tilde = l.t;
  EXPECT_LE(orth_penalty(flow, 1.0), 1e-20);
  for (auto& l : flow.blocks()[0].phi().layers()) l.t_tilde *= 2.0;
  // |4 I_3 - I_3|_F^2 = 27 for each of the three wide 3 x 4 layers.
  EXPECT_NEAR(orth_penalty(flow, 0.5), 0.5 * 3 * 27.0, 1e-9);
}

TEST(Loss, GradientMatchesFiniteDifferences) {
  Rng rng(2);
  ProxFlow flow = small_flow(rng);
  for (auto& b : flow.blocks())
    for (auto& l : b.phi().layers()) l.t_tilde += 0.1 * rng.normal_matrix(l.t_tilde.rows(), l.t_tilde.cols());
  set_params(flow, get_params(flow));
  const Mat x = rng.normal_matrix(2, 7);
  LossOptions lo;
  lo.penalty_weight = 0.3;
  const auto r = nll_loss(flow, x, nullptr, lo);
  const auto params = get_params(flow);
  const double h = 1e-6;
  for (std::size_t i = 0; i < params.size(); ++i)
    for (Eigen::Index k = 0; k < params[i].size(); ++k) {
      auto p = params, m = params;
      p[i].data()[k] += h;
      m[i].data()[k] -= h;
      ProxFlow fp = flow, fm = flow;
      set_params(fp, p);
      set_params(fm, m);
      const double fd = (nll_loss(fp, x, nullptr, lo).loss - nll_loss(fm, x, nullptr, lo).loss) / (2 * h);
      EXPECT_LE(std::abs(fd - r.grads[i].data()[k]), 1e-4 * std::max(1.0, std::abs(fd)))
          << param_names(flow)[i] << " entry " << k;
    }
}

TEST(Loss, ChunkedBatchMatchesSingleChunk) {
  Rng rng(3);
  const ProxFlow flow = small_flow(rng);
  const Mat x = rng.normal_matrix(2, 600);
  const auto whole = nll_loss(flow, x, nullptr, {});
  double acc = 0.0;
  for (int j = 0; j < 600; j += 200) acc += nll_loss(flow, x.middleCols(j, 200), nullptr, {}).nll / 3.0;
  EXPECT_NEAR(whole.nll, acc, 1e-12);
}

TEST(Loss, EstimatorModeNeedsRng) {
  Rng rng(4);
  const ProxFlow flow = small_flow(rng);
  LossOptions lo;
  lo.record.mode = LogdetMode::estimator;
  EXPECT_THROW(nll_loss(flow, Mat::Zero(2, 3), nullptr, lo), InvalidArgument);
  EXPECT_TRUE(std::isfinite(nll_loss(flow, Mat::Zero(2, 3), nullptr, lo, &rng).loss));
}

TEST(Adam, FirstStepMovesByLearningRate) {
  AdamState st;
  std::vector<Mat> p{Mat::Constant(1, 2, 1.0)};
  const std::vector<Mat> g{(Mat(1, 2) << 3.0, -0.5).finished()};
  adam_step(st, p, g, 0.1);
  EXPECT_NEAR(p[0](0, 0), 0.9, 1e-8);
  EXPECT_NEAR(p[0](0, 1), 1.1, 1e-7);
}

TEST(Adam, MaskedTensorUntouched) {
  AdamState st;
  std::vector<Mat> p{Mat::Constant(1, 1, 1.0), Mat::Constant(1, 1, 1.0)};
  const std::vector<Mat> g{Mat::Constant(1, 1, 1.0), Mat::Constant(1, 1, 1.0)};
  const std::vector<bool> mask{false, true};
  adam_step(st, p, g, 0.1, &mask);
  EXPECT_EQ(p[0](0, 0), 1.0);
  EXPECT_NE(p[1](0, 0), 1.0);
}

TEST(Adam, ConvergesOnQuadratic) {
  AdamState st;
  std::vector<Mat> p{Mat::Constant(3, 1, 5.0)};
  const Vec target = (Vec(3) << 1.0, -2.0, 0.5).finished();
  for (int i = 0; i < 3000; ++i) adam_step(st, p, {Mat(p[0] - target)}, 0.05);
  EXPECT_LE((p[0] - target).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(Clip, RescalesToMaxNorm) {
  std::vector<Mat> g{Mat::Constant(1, 1, 3.0), Mat::Constant(1, 1, 4.0)};
  EXPECT_DOUBLE_EQ(clip_global_norm(g, 1.0), 5.0);
  EXPECT_NEAR(std::hypot(g[0](0, 0), g[1](0, 0)), 1.0, 1e-15);
  std::vector<Mat> small{Mat::Constant(1, 1, 0.1)};
  clip_global_norm(small, 1.0);
  EXPECT_EQ(small[0](0, 0), 0.1);
}

TEST(TrainLoop, DeterministicForSeed) {
  const TrainConfig c = tiny_config();
  const auto a = train_loop(c, make_sampler(c));
  const auto b = train_loop(c, make_sampler(c));
  ASSERT_EQ(a.history.size(), 20u);
  for (std::size_t i = 0; i < a.history.size(); ++i) EXPECT_EQ(a.history[i].loss, b.history[i].loss);
  EXPECT_EQ(checkpoint_json(a.flow), checkpoint_json(b.flow));
}

TEST(TrainLoop, LossDecreasesOnToyData) {
  TrainConfig c = tiny_config();
  c.problem = "eight_modes";
  c.steps_s = 100;
  std::size_t epochs = 0;
  TrainHooks hooks;
  hooks.on_epoch = [&](std::size_t, const ProxFlow&) { ++epochs; };
  const auto r = train_loop(c, make_sampler(c), hooks);
  EXPECT_EQ(epochs, 2u);
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 10; ++i) {
    first += r.history[i].loss;
    last += r.history[r.history.size() - 1 - i].loss;
  }
  EXPECT_LT(last, first);
}

TEST(TrainLoop, ConditionalProblemRuns) {
  TrainConfig c = TrainConfig::preset("circle");
  c.K = 1;
  c.p = 2;
  c.h = 6;
  c.batch_b = 32;
  c.epochs_e = 1;
  c.steps_s = 3;
  const auto r = train_loop(c, make_sampler(c));
  EXPECT_TRUE(r.flow.conditional());
  EXPECT_EQ(r.history.size(), 3u);
}

TEST(TrainLoop, WrongSamplerDimensionRejected) {
  const TrainConfig c = tiny_config();
  BatchSampler bad = [](std::size_t count, Rng& rng) { return std::make_pair(Mat(), rng.normal_matrix(3, count)); };
  EXPECT_THROW(train_loop(c, bad), InvalidArgument);
}

TEST(Config, ValidationNamesField) {
  TrainConfig c;
  c.gamma = 2.0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = TrainConfig{};
  c.problem = "spirals";
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = TrainConfig{};
  c.K = 0;
  try {
    c.validate();
    FAIL();
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("'K'"), std::string::npos);
  }
  for (const char* name : {"toy", "circle", "mixture"}) EXPECT_NO_THROW(TrainConfig::preset(name).validate());
  EXPECT_THROW(TrainConfig::preset("tiny"), InvalidArgument);
}

TEST(Config, JsonRoundTripAndUnknownKey) {
  TrainConfig c = TrainConfig::preset("mixture");
  c.seed = 77;
  c.lr_tau = 0.1 + 0.2;
  EXPECT_EQ(TrainConfig::from_json(c.to_json()), c);
  const auto j = nlohmann::json::parse(c.to_json());
  EXPECT_EQ(j.size(), TrainConfig::field_names().size());
  EXPECT_THROW(TrainConfig::from_json(R"({"learning_rate": 0.1})"), InvalidArgument);
  EXPECT_THROW(TrainConfig::from_json("{"), InvalidArgument);
  EXPECT_THROW(TrainConfig::from_json(R"({"K": "ten"})"), InvalidArgument);
  const TrainConfig partial = TrainConfig::from_json(R"({"K": 3})", c);
  EXPECT_EQ(partial.K, 3u);
  EXPECT_EQ(partial.seed, 77u);
}

TEST(Checkpoint, RoundTripIsExact) {
  Rng rng(5);
  ProxFlow flow = small_flow(rng, 3);
  for (auto& b : flow.blocks())
    for (auto& l : b.phi().layers()) l.t_tilde += 0.05 * rng.normal_matrix(l.t_tilde.rows(), l.t_tilde.cols());
  set_params(flow, get_params(flow));
  const TrainConfig c = tiny_config();
  TrainConfig back;
  const ProxFlow loaded = flow_from_checkpoint(checkpoint_json(flow, &c), &back);
  EXPECT_EQ(back, c);
  const Mat x = rng.normal_matrix(2, 50);
  EXPECT_LE((flow_forward(loaded, x) - flow_forward(flow, x)).cwiseAbs().maxCoeff(), 1e-15);
  const auto pa = get_params(flow), pb = get_params(loaded);
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i], pb[i]);
  EXPECT_EQ(checkpoint_json(loaded, &c), checkpoint_json(flow, &c));
}

TEST(Checkpoint, ConditionalTrainingKeepsConditionNorm) {
  TrainConfig c = TrainConfig::preset("circle");
  c.K = 1;
  c.p = 1;
  c.h = 3;
  c.batch_b = 32;
  c.epochs_e = 1;
  c.steps_s = 3;
  const TrainResult res = train_loop(c, make_sampler(c));
  ASSERT_TRUE(res.flow.cond_norm().initialized);
  const std::string text = checkpoint_json(res.flow, &c);
  EXPECT_TRUE(nlohmann::json::parse(text).contains("cond_norm"));
  const ProxFlow loaded = flow_from_checkpoint(text);
  EXPECT_EQ(loaded.cond_norm().scale, res.flow.cond_norm().scale);
  EXPECT_EQ(loaded.cond_norm().shift, res.flow.cond_norm().shift);
  Rng rng(2);
  const Mat x = rng.normal_matrix(2, 10), y = rng.normal_matrix(1, 10);
  EXPECT_EQ(flow_forward(loaded, x, &y), flow_forward(res.flow, x, &y));
}

TEST(Checkpoint, KeysAndErrors) {
  Rng rng(6);
  const auto j = nlohmann::json::parse(checkpoint_json(small_flow(rng, 1)));
  for (const char* key : {"version", "config", "blocks"}) EXPECT_TRUE(j.contains(key)) << key;
  const auto& b = j["blocks"][0];
  EXPECT_TRUE(b.contains("actnorm") && b.contains("gamma") && b.contains("pnn"));
  EXPECT_TRUE(b["pnn"]["layers"][0].contains("T_tilde"));
  EXPECT_THROW(flow_from_checkpoint("not json"), InvalidArgument);
  EXPECT_THROW(flow_from_checkpoint(R"({"version": 2, "blocks": []})"), InvalidArgument);
  EXPECT_THROW(flow_from_checkpoint(R"({"version": 1})"), InvalidArgument);
}

TEST(History, CsvFormat) {
  EXPECT_EQ(history_csv({{0, 1.5, 0.25}, {1, 1.0, 0.0}}), "step,loss,penalty\n0,1.5,0.25\n1,1,0\n");
}
