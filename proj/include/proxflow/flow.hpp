#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "proxflow/linalg.hpp"
#include "proxflow/pnn.hpp"
#include "proxflow/tape.hpp"

namespace proxflow {

/// Per-dimension affine layer y = s * x + b, initialized from data.
struct ActNorm {
  Vec scale;
  Vec shift;
  bool initialized = false;

  ActNorm() = default;
  explicit ActNorm(std::size_t dim);
  ActNorm(Vec scale, Vec shift);

  static ActNorm identity(std::size_t dim);

  std::size_t dim() const { return static_cast<std::size_t>(scale.size()); }
  /// Sets s, b so that the given batch (columns) maps to mean 0, variance 1.
  void initialize(const Mat& batch);
  Mat apply(const Mat& x) const;
  Mat invert(const Mat& y) const;
  /// sum_i log|s_i|.
  double logdet() const;
};

struct SolverOptions {
  double tol = 1e-9;
  std::size_t max_iter = 10000;
  /// When set, receives the max-norm step size of every iteration.
  std::vector<double>* history = nullptr;
};

/// L(x) = actnorm(x + gamma * Phi_2(y, x)). With cond_dim == 0 the block is
/// unconditional and Phi_2 = Phi.
class ResidualBlock {
 public:
  ResidualBlock() = default;
  /// Throws InvalidArgument unless 0 < gamma < (kappa+1)/(kappa-1).
  ResidualBlock(double gamma, Pnn phi, ActNorm actnorm, std::size_t cond_dim = 0);

  /// (kappa+1)/(kappa-1); +infinity for kappa == 1.
  static double gamma_bound(std::size_t kappa);

  double gamma() const { return gamma_; }
  const Pnn& phi() const { return phi_; }
  Pnn& phi() { return phi_; }
  const ActNorm& actnorm() const { return actnorm_; }
  ActNorm& actnorm() { return actnorm_; }
  std::size_t cond_dim() const { return cond_dim_; }
  std::size_t dim() const { return phi_.base_dim() - cond_dim_; }
  double averagedness() const { return phi_.averagedness(); }
  /// gamma t / (1 + gamma - gamma t): the Lipschitz constant of the inverse
  /// iteration and the norm bound of the Neumann-series matrix.
  double contraction() const;

  /// Residual part x + gamma Phi_2(y, x), before actnorm. Columns are samples.
  Mat residual(const Mat& x, const Mat* cond) const;
  /// Phi_2(y, x).
  Mat phi2(const Mat& x, const Mat* cond) const;
  /// R_2(y, x) = Phi_2(y, x)/t - (1-t)/t x.
  Mat r2(const Mat& x, const Mat* cond) const;

 private:
  double gamma_ = 1.0;
  Pnn phi_;
  ActNorm actnorm_;
  std::size_t cond_dim_ = 0;
};

/// Composition T = L_K o ... o L_1 with a standard normal base on R^dim.
class ProxFlow {
 public:
  ProxFlow() = default;
  explicit ProxFlow(std::size_t dim, std::size_t cond_dim = 0) : dim_(dim), cond_dim_(cond_dim) {}

  std::size_t dim() const { return dim_; }
  std::size_t cond_dim() const { return cond_dim_; }
  bool conditional() const { return cond_dim_ > 0; }
  std::size_t size() const { return blocks_.size(); }

  void add_block(ResidualBlock block);
  const std::vector<ResidualBlock>& blocks() const { return blocks_; }
  std::vector<ResidualBlock>& blocks() { return blocks_; }

  /// Per-dimension standardization of the condition, applied before any
  /// block sees it. Fitted from the first training batch and then frozen;
  /// identity while uninitialized. Block-level functions take raw conditions.
  const ActNorm& cond_norm() const { return cond_norm_; }
  void set_cond_norm(ActNorm norm);
  /// The normalized condition, stored in `store`. nullptr passes through.
  const Mat* prepare_cond(const Mat* cond, Mat& store) const;

 private:
  std::size_t dim_ = 0;
  std::size_t cond_dim_ = 0;
  std::vector<ResidualBlock> blocks_;
  ActNorm cond_norm_;
};

struct FlowShape {
  std::size_t dim = 2;
  std::size_t cond_dim = 0;
  std::size_t blocks = 1;
  std::size_t widen = 1;
  std::size_t hidden = 2;
  std::size_t kappa = 3;
  double gamma = 1.0;
  Activation act = Activation::elu();
  /// Identity actnorm marked initialized; otherwise left for data init.
  bool actnorm_identity = true;
};

ProxFlow make_flow(const FlowShape& shape, Rng& rng);

// ---------------------------------------------------------------------------
// Parameters. Slot layout per block: gamma, (t_tilde, bias) per layer,
// actnorm scale, actnorm shift. gamma is differentiable but not trained.

std::vector<Mat> get_params(const ProxFlow& flow);
/// Writes parameters back and re-projects every t_tilde.
void set_params(ProxFlow& flow, const std::vector<Mat>& params,
                const linalg::PolarOptions& opts = default_projection());
std::vector<std::string> param_names(const ProxFlow& flow);
std::vector<bool> trainable_mask(const ProxFlow& flow);
std::size_t block_param_count(const ResidualBlock& block);

// ---------------------------------------------------------------------------
// Single blocks.

Vec block_forward(const ResidualBlock& block, const Vec& x);
Mat block_forward_batch(const ResidualBlock& block, const Mat& x, const Mat* cond = nullptr);

/// Fixed-point inverse. Undoes actnorm, then iterates
/// x <- v/(1+g-gt) - (gt/(1+g-gt)) R(x) from x = v/(1+g-gt) until the
/// max-norm step is <= tol. Columns are solved independently.
Vec block_invert(const ResidualBlock& block, const Vec& y, double tol = 1e-9, std::size_t max_iter = 10000);
Mat block_invert_batch(const ResidualBlock& block, const Mat& y, const Mat* cond, const SolverOptions& opts);

/// log|det dL/dx| from the dense Jacobian (n vjps) and LU.
double logdet_exact(const ResidualBlock& block, const Vec& x, const Vec* cond = nullptr);

/// Closed form sum_i log(1 + gamma sigma'_i(T x + b)) for a one-layer,
/// unwidened, unconditional block with row-orthonormal T.
double logdet_single_layer(const ResidualBlock& block, const Vec& x);

/// Survival-reweighted truncation law for the Neumann series.
struct EstimatorConfig {
  /// Q is geometric on {1, 2, ...}: P(Q = k) = s (1-s)^{k-1}.
  double q_success = 0.5;
  std::size_t probe_count = 1;
  std::uint64_t seed = 0;

  /// p_k = P(Q >= k) = (1-s)^{k-1}; p_0 = 1.
  double survival(std::size_t k) const;
  std::size_t draw(Rng& rng) const;
  void validate() const;
};

/// One Russian-roulette estimate of log|det dL/dx| per probe.
std::vector<double> logdet_estimate_samples(const ResidualBlock& block, const Vec& x, const EstimatorConfig& cfg,
                                            const Vec* cond = nullptr);
/// Mean over cfg.probe_count probes.
double logdet_estimate(const ResidualBlock& block, const Vec& x, const EstimatorConfig& cfg,
                       const Vec* cond = nullptr);

/// Per-probe estimates of d log|det dL/dx| / d theta in block slot order.
std::vector<std::vector<Mat>> logdet_estimate_grad_samples(const ResidualBlock& block, const Vec& x,
                                                           const EstimatorConfig& cfg, const Vec* cond = nullptr);
std::vector<Mat> logdet_estimate_grad(const ResidualBlock& block, const Vec& x, const EstimatorConfig& cfg,
                                      const Vec* cond = nullptr);

/// Exact parameter gradient of log|det dL/dx| via a tangent-assembled
/// Jacobian on the tape (block slot order).
std::vector<Mat> logdet_exact_grad(const ResidualBlock& block, const Vec& x, const Vec* cond = nullptr,
                                   const RecordOptions& opts = {});

// ---------------------------------------------------------------------------
// Tape recording.

enum class LogdetMode { exact, estimator };

struct FlowRecordOptions {
  RecordOptions record{};
  LogdetMode mode = LogdetMode::exact;
  EstimatorConfig estimator{};
};

struct BlockNodes {
  ad::Var out;
  /// 1 x B row of block log-determinants (actnorm included).
  ad::Var logdet;
};

struct FlowNodes {
  ad::Var z;
  ad::Var logdet;
  ad::Var logdensity;
};

/// Records one block for a batch x (n x B). In exact mode the per-sample
/// Jacobian is propagated as forward tangents and its log-determinant is a
/// node. In estimator mode `rng` supplies probes and truncation indices; the
/// logdet node then carries the estimate as its value and the Russian-roulette
/// gradient estimator as its derivative.
BlockNodes record_block(ad::Tape& tape, const ResidualBlock& block, SlotCursor& slots, ad::Var x, const Mat* cond,
                        const FlowRecordOptions& opts, Rng* rng = nullptr);

FlowNodes record_flow(ad::Tape& tape, const ProxFlow& flow, SlotCursor& slots, ad::Var x, const Mat* cond,
                      const FlowRecordOptions& opts, Rng* rng = nullptr);

/// -(n/2) log(2 pi) - |z|^2 / 2 per column.
Vec standard_normal_logpdf(const Mat& z);

// ---------------------------------------------------------------------------
// Whole flows.

struct ForwardResult {
  Mat z;
  Vec logdensity;
};

/// z = T(x) and log p(x) = log p_Z(z) + sum of exact block log-dets.
ForwardResult flow_forward_logdensity(const ProxFlow& flow, const Mat& x, const Mat* cond = nullptr);
std::pair<Vec, double> flow_forward_logdensity(const ProxFlow& flow, const Vec& x);

Mat flow_forward(const ProxFlow& flow, const Mat& x, const Mat* cond = nullptr);
Mat flow_inverse(const ProxFlow& flow, const Mat& z, const Mat* cond = nullptr, const SolverOptions& opts = {});

/// count draws of T^{-1}(z), z ~ N(0, I).
Mat flow_sample(const ProxFlow& flow, std::size_t count, Rng& rng, const SolverOptions& opts = {});

/// Data-dependent actnorm initialization, block by block. A conditional flow
/// also fits its condition standardization here if it has none yet.
void initialize_actnorm(ProxFlow& flow, const Mat& x, const Mat* cond = nullptr);

/// Number of worker threads for parallel maps (PROXFLOW_THREADS, default
/// hardware concurrency).
std::size_t worker_threads();

}  // namespace proxflow
