#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "proxflow/flow.hpp"

namespace proxflow {

struct TrainConfig {
  // Table-style hyperparameters.
  std::size_t n = 2;
  std::size_t d = 0;
  std::size_t K = 20;
  std::size_t p = 64;
  std::size_t h = 64;
  double gamma = 1.99;
  std::size_t batch_b = 200;
  std::size_t epochs_e = 20;
  std::size_t steps_s = 2000;
  double lr_tau = 1e-3;

  double penalty_weight = 1.0;
  std::uint64_t seed = 0;
  double inverse_tol = 1e-9;
  std::size_t inverse_max_iter = 10000;
  double polar_tol = 1e-10;
  std::size_t polar_max_iter = 50;
  std::string logdet_mode = "exact";  // exact | estimator

  // Artifact knobs.
  std::size_t kappa = 3;
  std::string activation = "elu";
  double activation_alpha = 1.0;
  std::string problem = "two_moons";
  std::string projection = "unrolled";  // unrolled | straight_through
  double clip_norm = 100.0;
  std::size_t probe_count = 1;
  std::size_t components = 5;
  std::uint64_t problem_seed = 0;

  /// Throws InvalidArgument naming the first offending field.
  void validate() const;

  /// toy, circle or mixture.
  static TrainConfig preset(const std::string& name);
  static const std::vector<std::string>& field_names();

  std::string to_json() const;
  /// Starts from defaults (or `base`) and overrides the given keys; unknown
  /// keys are rejected.
  static TrainConfig from_json(const std::string& text);
  static TrainConfig from_json(const std::string& text, const TrainConfig& base);

  bool operator==(const TrainConfig&) const = default;
};

FlowShape flow_shape(const TrainConfig& cfg);
linalg::PolarOptions polar_options(const TrainConfig& cfg);
FlowRecordOptions record_options(const TrainConfig& cfg);
SolverOptions solver_options(const TrainConfig& cfg);

/// lambda * sum_k |T_tilde_k^T T_tilde_k - I|_F^2 (orientation-adjusted).
double orth_penalty(const ProxFlow& flow, double weight);

struct LossResult {
  double loss = 0.0;
  double nll = 0.0;
  double penalty = 0.0;
  /// Parameter gradients in get_params order.
  std::vector<Mat> grads;
};

struct LossOptions {
  double penalty_weight = 1.0;
  FlowRecordOptions record{};
};

/// -mean log p(x_i) + penalty. Samples are columns; cond (d x B) for
/// conditional flows. Estimator mode draws probes from `rng`.
LossResult nll_loss(const ProxFlow& flow, const Mat& x, const Mat* cond, const LossOptions& opts,
                    Rng* rng = nullptr);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  std::vector<Mat> m;
  std::vector<Mat> v;
};

/// One bias-corrected Adam update. Entries with mask[i] == false are left
/// untouched (their moments stay zero).
void adam_step(AdamState& state, std::vector<Mat>& params, const std::vector<Mat>& grads, double lr,
               const std::vector<bool>* mask = nullptr);

/// Rescales grads to global norm <= max_norm. Returns the norm before clipping.
double clip_global_norm(std::vector<Mat>& grads, double max_norm, const std::vector<bool>* mask = nullptr);

struct LossRecord {
  std::size_t step = 0;
  double loss = 0.0;
  double penalty = 0.0;
};

/// Draws a training batch: returns (cond, x), cond empty for unconditional data.
using BatchSampler = std::function<std::pair<Mat, Mat>(std::size_t count, Rng& rng)>;

/// Data source named by cfg.problem.
BatchSampler make_sampler(const TrainConfig& cfg);

struct TrainHooks {
  std::function<void(std::size_t epoch, const ProxFlow&)> on_epoch;
  std::function<void(const LossRecord&)> on_step;
  std::function<void(const std::string&)> log;
};

struct TrainResult {
  ProxFlow flow;
  std::vector<LossRecord> history;
  std::size_t clipped_steps = 0;
};

/// Deterministic given cfg.seed.
TrainResult train_loop(const TrainConfig& cfg, const BatchSampler& sampler, const TrainHooks& hooks = {});

std::string history_csv(const std::vector<LossRecord>& history);

// ---------------------------------------------------------------------------
// Checkpoints.

std::string checkpoint_json(const ProxFlow& flow, const TrainConfig* cfg = nullptr);
/// Restores a flow; fills `cfg` when the checkpoint carries a config.
ProxFlow flow_from_checkpoint(const std::string& text, TrainConfig* cfg = nullptr);
void save_checkpoint(const std::string& path, const ProxFlow& flow, const TrainConfig* cfg = nullptr);
ProxFlow load_checkpoint(const std::string& path, TrainConfig* cfg = nullptr);

}  // namespace proxflow
