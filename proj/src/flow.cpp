#include "proxflow/flow.hpp"

#include <cmath>
#include <cstdlib>
#include <limits>
#include <numbers>
#include <string>
#include <thread>

#include "parallel.hpp"
#include "proxflow/error.hpp"

namespace proxflow {
namespace {

constexpr std::size_t kChunk = 256;

Mat identity_blocks(Eigen::Index n, Eigen::Index batch) {
  Mat out = Mat::Zero(n, n * batch);
  for (Eigen::Index i = 0; i < batch; ++i) out.middleCols(i * n, n).setIdentity();
  return out;
}

Mat stack_rows(const Mat& top, const Mat& bottom) {
  Mat out(top.rows() + bottom.rows(), bottom.cols());
  out << top, bottom;
  return out;
}

Mat gather_cols(const Mat& m, const std::vector<Eigen::Index>& idx) {
  Mat out(m.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = m.col(idx[j]);
  return out;
}

void require_cond(const ResidualBlock& block, const Mat& x, const Mat* cond) {
  if (x.rows() != static_cast<Eigen::Index>(block.dim()))
    throw InvalidArgument("residual block: state dimension " + std::to_string(x.rows()) + " != " +
                          std::to_string(block.dim()));
  if (block.cond_dim() == 0) {
    if (cond != nullptr && cond->rows() != 0)
      throw InvalidArgument("residual block: unconditional block received a condition");
    return;
  }
  if (cond == nullptr) throw InvalidArgument("residual block: conditional block needs a condition");
  if (cond->rows() != static_cast<Eigen::Index>(block.cond_dim()) || cond->cols() != x.cols())
    throw InvalidArgument("residual block: condition shape " + std::to_string(cond->rows()) + "x" +
                          std::to_string(cond->cols()) + " does not match (" + std::to_string(block.cond_dim()) +
                          ", " + std::to_string(x.cols()) + ")");
}

void require_initialized(const ResidualBlock& block) {
  if (!block.actnorm().initialized)
    throw InvalidArgument("residual block: actnorm is not initialized (train or load a checkpoint first)");
}

const Mat* opt_mat(const Vec* v, Mat& storage) {
  if (v == nullptr) return nullptr;
  storage = *v;
  return &storage;
}

}  // namespace

// ---------------------------------------------------------------------------
// ActNorm

ActNorm::ActNorm(std::size_t dim)
    : scale(Vec::Ones(static_cast<Eigen::Index>(dim))), shift(Vec::Zero(static_cast<Eigen::Index>(dim))) {}

ActNorm::ActNorm(Vec scale_, Vec shift_) : scale(std::move(scale_)), shift(std::move(shift_)), initialized(true) {
  if (scale.size() != shift.size()) throw InvalidArgument("ActNorm: scale and shift lengths differ");
  for (Eigen::Index i = 0; i < scale.size(); ++i)
    if (!(std::abs(scale(i)) > 0.0) || !std::isfinite(scale(i)))
      throw InvalidArgument("ActNorm: scale entries must be finite and nonzero");
}

ActNorm ActNorm::identity(std::size_t dim) {
  ActNorm a(dim);
  a.initialized = true;
  return a;
}

void ActNorm::initialize(const Mat& batch) {
  if (batch.cols() == 0) throw InvalidArgument("ActNorm::initialize: empty batch");
  if (batch.rows() != scale.size()) throw InvalidArgument("ActNorm::initialize: dimension mismatch");
  const Vec mean = batch.rowwise().mean();
  const Vec var = (batch.colwise() - mean).array().square().rowwise().mean();
  for (Eigen::Index i = 0; i < scale.size(); ++i) {
    const double sd = std::max(std::sqrt(var(i)), 1e-6);
    scale(i) = 1.0 / sd;
    shift(i) = -mean(i) / sd;
  }
  initialized = true;
}

Mat ActNorm::apply(const Mat& x) const { return (scale.asDiagonal() * x).colwise() + shift; }

Mat ActNorm::invert(const Mat& y) const {
  return scale.cwiseInverse().asDiagonal() * (y.colwise() - shift);
}

double ActNorm::logdet() const { return scale.array().abs().log().sum(); }

// ---------------------------------------------------------------------------
// ResidualBlock / ProxFlow

ResidualBlock::ResidualBlock(double gamma, Pnn phi, ActNorm actnorm, std::size_t cond_dim)
    : gamma_(gamma), phi_(std::move(phi)), actnorm_(std::move(actnorm)), cond_dim_(cond_dim) {
  if (cond_dim_ >= phi_.base_dim())
    throw InvalidArgument("ResidualBlock: condition dimension must be smaller than the PNN input dimension");
  if (actnorm_.dim() != dim())
    throw InvalidArgument("ResidualBlock: actnorm dimension " + std::to_string(actnorm_.dim()) + " != " +
                          std::to_string(dim()));
  const double bound = gamma_bound(phi_.kappa());
  if (!(gamma_ > 0.0) || !std::isfinite(gamma_) || !(gamma_ < bound))
    throw InvalidArgument("ResidualBlock: gamma = " + std::to_string(gamma_) + " violates 0 < gamma < " +
                          std::to_string(bound) + " for kappa = " + std::to_string(phi_.kappa()));
}

double ResidualBlock::gamma_bound(std::size_t kappa) {
  if (kappa <= 1) return std::numeric_limits<double>::infinity();
  const auto k = static_cast<double>(kappa);
  return (k + 1.0) / (k - 1.0);
}

double ResidualBlock::contraction() const {
  const double t = averagedness();
  return gamma_ * t / (1.0 + gamma_ - gamma_ * t);
}

Mat ResidualBlock::phi2(const Mat& x, const Mat* cond) const {
  require_cond(*this, x, cond);
  if (cond_dim_ == 0) return phi_.forward(x);
  return phi_.forward(stack_rows(*cond, x)).bottomRows(static_cast<Eigen::Index>(dim()));
}

Mat ResidualBlock::residual(const Mat& x, const Mat* cond) const { return x + gamma_ * phi2(x, cond); }

Mat ResidualBlock::r2(const Mat& x, const Mat* cond) const {
  const double t = averagedness();
  return phi2(x, cond) / t - ((1.0 - t) / t) * x;
}

void ProxFlow::add_block(ResidualBlock block) {
  if (block.dim() != dim_ || block.cond_dim() != cond_dim_)
    throw InvalidArgument("ProxFlow::add_block: block dimensions (" + std::to_string(block.cond_dim()) + ", " +
                          std::to_string(block.dim()) + ") do not match flow (" + std::to_string(cond_dim_) +
                          ", " + std::to_string(dim_) + ")");
  blocks_.push_back(std::move(block));
}

void ProxFlow::set_cond_norm(ActNorm norm) {
  if (norm.initialized && norm.dim() != cond_dim_)
    throw InvalidArgument("ProxFlow::set_cond_norm: dimension " + std::to_string(norm.dim()) + " != cond_dim " +
                          std::to_string(cond_dim_));
  cond_norm_ = std::move(norm);
}

const Mat* ProxFlow::prepare_cond(const Mat* cond, Mat& store) const {
  if (cond == nullptr || !cond_norm_.initialized) return cond;
  if (cond->rows() != static_cast<Eigen::Index>(cond_dim_)) return cond;  // blocks report the mismatch
  store = cond_norm_.apply(*cond);
  return &store;
}

ProxFlow make_flow(const FlowShape& shape, Rng& rng) {
  if (shape.dim == 0) throw InvalidArgument("make_flow: dimension must be positive");
  ProxFlow flow(shape.dim, shape.cond_dim);
  for (std::size_t k = 0; k < shape.blocks; ++k) {
    Pnn phi = Pnn::random(shape.dim + shape.cond_dim, shape.widen, shape.hidden, shape.kappa, shape.act, rng);
    ActNorm an = shape.actnorm_identity ? ActNorm::identity(shape.dim) : ActNorm(shape.dim);
    flow.add_block(ResidualBlock(shape.gamma, std::move(phi), std::move(an), shape.cond_dim));
  }
  return flow;
}

// ---------------------------------------------------------------------------
// Parameters

std::size_t block_param_count(const ResidualBlock& block) { return 3 + 2 * block.phi().kappa(); }

std::vector<Mat> get_params(const ProxFlow& flow) {
  std::vector<Mat> out;
  for (const auto& block : flow.blocks()) {
    out.push_back(Mat::Constant(1, 1, block.gamma()));
    for (const auto& layer : block.phi().layers()) {
      out.push_back(layer.t_tilde);
      out.push_back(layer.bias);
    }
    out.push_back(block.actnorm().scale);
    out.push_back(block.actnorm().shift);
  }
  return out;
}

void set_params(ProxFlow& flow, const std::vector<Mat>& params, const linalg::PolarOptions& opts) {
  std::size_t expected = 0;
  for (const auto& block : flow.blocks()) expected += block_param_count(block);
  if (params.size() != expected)
    throw InvalidArgument("set_params: expected " + std::to_string(expected) + " tensors, got " +
                          std::to_string(params.size()));
  std::size_t i = 0;
  auto shape_check = [&](const Mat& dst_like, const Mat& src) {
    if (dst_like.rows() != src.rows() || dst_like.cols() != src.cols())
      throw InvalidArgument("set_params: shape mismatch at tensor " + std::to_string(i));
  };
  for (auto& block : flow.blocks()) {
    const double gamma = params[i++](0, 0);
    Pnn phi = block.phi();
    for (auto& layer : phi.layers()) {
      shape_check(layer.t_tilde, params[i]);
      layer.t_tilde = params[i++];
      shape_check(layer.bias, params[i]);
      layer.bias = params[i++].col(0);
      layer.project(opts);
    }
    ActNorm an = block.actnorm();
    shape_check(an.scale, params[i]);
    an.scale = params[i++].col(0);
    shape_check(an.shift, params[i]);
    an.shift = params[i++].col(0);
    block = ResidualBlock(gamma, std::move(phi), std::move(an), block.cond_dim());
  }
}

std::vector<std::string> param_names(const ProxFlow& flow) {
  std::vector<std::string> out;
  for (std::size_t k = 0; k < flow.size(); ++k) {
    const std::string pre = "block" + std::to_string(k) + ".";
    out.push_back(pre + "gamma");
    for (std::size_t l = 0; l < flow.blocks()[k].phi().kappa(); ++l) {
      out.push_back(pre + "layer" + std::to_string(l) + ".T_tilde");
      out.push_back(pre + "layer" + std::to_string(l) + ".b");
    }
    out.push_back(pre + "actnorm.s");
    out.push_back(pre + "actnorm.b");
  }
  return out;
}

std::vector<bool> trainable_mask(const ProxFlow& flow) {
  std::vector<bool> out;
  for (const auto& block : flow.blocks()) {
    out.push_back(false);
    for (std::size_t l = 0; l < block.phi().kappa(); ++l) {
      out.push_back(true);
      out.push_back(true);
    }
    out.push_back(true);
    out.push_back(true);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Forward / inverse

Mat block_forward_batch(const ResidualBlock& block, const Mat& x, const Mat* cond) {
  require_initialized(block);
  return block.actnorm().apply(block.residual(x, cond));
}

Vec block_forward(const ResidualBlock& block, const Vec& x) { return block_forward_batch(block, Mat(x)).col(0); }

Mat block_invert_batch(const ResidualBlock& block, const Mat& y, const Mat* cond, const SolverOptions& opts) {
  require_initialized(block);
  require_cond(block, y, cond);
  if (!(opts.tol > 0.0)) throw InvalidArgument("block_invert: tol must be positive");

  const double t = block.averagedness();
  const double g = block.gamma();
  const double den = 1.0 + g - g * t;
  const double c = g * t / den;

  const Mat v = block.actnorm().invert(y) / den;
  Mat x = v;
  std::vector<Eigen::Index> active(static_cast<std::size_t>(y.cols()));
  for (Eigen::Index j = 0; j < y.cols(); ++j) active[static_cast<std::size_t>(j)] = j;

  Mat xa = x, va = v, ca;
  if (cond != nullptr) ca = *cond;
  bool regather = false;
  double worst = 0.0;
  for (std::size_t iter = 0; iter < opts.max_iter && !active.empty(); ++iter) {
    if (regather) {
      xa = gather_cols(x, active);
      va = gather_cols(v, active);
      if (cond != nullptr) ca = gather_cols(*cond, active);
      regather = false;
    }
    const Mat next = va - c * block.r2(xa, cond != nullptr ? &ca : nullptr);
    const Eigen::RowVectorXd step = (next - xa).cwiseAbs().colwise().maxCoeff();
    worst = step.maxCoeff();
    if (!std::isfinite(worst)) throw NumericalError("block_invert: iteration produced non-finite values");
    if (opts.history != nullptr) opts.history->push_back(worst);

    std::vector<Eigen::Index> still;
    for (std::size_t j = 0; j < active.size(); ++j) {
      x.col(active[j]) = next.col(static_cast<Eigen::Index>(j));
      if (step(static_cast<Eigen::Index>(j)) > opts.tol) still.push_back(active[j]);
    }
    if (still.size() != active.size()) {
      active = std::move(still);
      regather = true;
    } else {
      xa = next;
    }
  }
  if (!active.empty())
    throw ConvergenceError("block_invert: fixed-point iteration did not converge for sample " +
                               std::to_string(active.front()),
                           worst, opts.max_iter);
  return x;
}

Vec block_invert(const ResidualBlock& block, const Vec& y, double tol, std::size_t max_iter) {
  SolverOptions opts;
  opts.tol = tol;
  opts.max_iter = max_iter;
  return block_invert_batch(block, Mat(y), nullptr, opts).col(0);
}

// ---------------------------------------------------------------------------
// Recording

BlockNodes record_block(ad::Tape& tape, const ResidualBlock& block, SlotCursor& slots, ad::Var x, const Mat* cond,
                        const FlowRecordOptions& opts, Rng* rng) {
  const Mat& xv = tape.value(x);
  require_cond(block, xv, cond);
  const auto n = static_cast<Eigen::Index>(block.dim());
  const auto d = static_cast<Eigen::Index>(block.cond_dim());
  const Eigen::Index batch = xv.cols();
  const bool exact = opts.mode == LogdetMode::exact;
  if (!exact && rng == nullptr) throw InvalidArgument("record_block: estimator mode needs an Rng");

  const ad::Var gamma = tape.param(Mat::Constant(1, 1, block.gamma()), slots.take());
  const ad::Var joint = d > 0 ? tape.vstack(tape.constant(*cond), x) : x;

  Mat probe;
  Mat x_tangent;
  if (exact) {
    x_tangent = identity_blocks(n, batch);
  } else {
    probe = rng->normal_matrix(n, batch);
    x_tangent = probe;
  }
  const ad::Var joint_tangent =
      tape.constant(d > 0 ? stack_rows(Mat::Zero(d, x_tangent.cols()), x_tangent) : x_tangent);
  const std::size_t directions = exact ? static_cast<std::size_t>(n) : 1;
  const PnnNodes pn = record_pnn(tape, block.phi(), slots, joint, joint_tangent, directions, opts.record);

  const ad::Var phi2 = d > 0 ? tape.rows(pn.output, static_cast<std::size_t>(d), static_cast<std::size_t>(n))
                             : pn.output;
  const ad::Var dphi2 = d > 0 ? tape.rows(pn.tangent, static_cast<std::size_t>(d), static_cast<std::size_t>(n))
                              : pn.tangent;
  const ad::Var h = tape.add(x, tape.scale_by(gamma, phi2));
  const ad::Var s = tape.param(block.actnorm().scale, slots.take());
  const ad::Var b = tape.param(block.actnorm().shift, slots.take());

  BlockNodes out;
  out.out = tape.add_bias(tape.scale_rows(h, s), b);

  if (exact) {
    const ad::Var jac = tape.add(tape.constant(x_tangent), tape.scale_by(gamma, dphi2));
    out.logdet = tape.batch_logabsdet(tape.scale_rows(jac, s));
    return out;
  }

  // Russian-roulette estimator. M = c grad R, c = g t / (1 + g - g t),
  // grad R = (grad Phi_2)/t - (1-t)/t I.
  const double t = block.averagedness();
  const double c = block.contraction();
  const ad::Var den = tape.add_scalar(tape.scale(gamma, 1.0 - t), 1.0);
  const ad::Var a1 = tape.hadamard(gamma, tape.reciprocal(den));
  const ad::Var a2 = tape.scale(a1, 1.0 - t);
  const ad::Var mv = tape.sub(tape.scale_by(a1, dphi2), tape.scale_by(a2, tape.constant(probe)));

  const EstimatorConfig& cfg = opts.estimator;
  std::vector<std::size_t> q(static_cast<std::size_t>(batch));
  std::size_t q_max = 0;
  for (auto& qi : q) {
    qi = cfg.draw(*rng);
    q_max = std::max(q_max, qi);
  }

  Mat u = probe;       // (M^T)^k v
  Mat w = probe;       // sum_k (-1)^k / p_k (M^T)^k v, k = 0 term
  Eigen::RowVectorXd est = Eigen::RowVectorXd::Zero(batch);
  for (std::size_t k = 1; k <= q_max; ++k) {
    const Mat jt_u = tape.backward(phi2, u, x).wrt(x);
    u = c * (jt_u / t - ((1.0 - t) / t) * u);
    const double pk = cfg.survival(k);
    const double sign = (k % 2 == 1) ? 1.0 : -1.0;
    for (Eigen::Index i = 0; i < batch; ++i) {
      if (k > q[static_cast<std::size_t>(i)]) {
        u.col(i).setZero();
        continue;
      }
      est(i) += sign / static_cast<double>(k) * u.col(i).dot(probe.col(i)) / pk;
      w.col(i) += (-sign) / pk * u.col(i);
    }
  }

  const ad::Var surrogate = tape.col_sum(tape.hadamard(mv, tape.constant(w)));
  const Mat correction = est - tape.value(surrogate);
  const ad::Var series = tape.add(surrogate, tape.constant(correction));
  const ad::Var nlog = tape.scale(tape.log(den), static_cast<double>(n));
  const ad::Var an = tape.sum(tape.log_abs(s));
  out.logdet = tape.add_bias(tape.add_bias(series, nlog), an);
  return out;
}

FlowNodes record_flow(ad::Tape& tape, const ProxFlow& flow, SlotCursor& slots, ad::Var x, const Mat* cond,
                      const FlowRecordOptions& opts, Rng* rng) {
  FlowNodes out;
  Mat cstore;
  cond = flow.prepare_cond(cond, cstore);
  ad::Var cur = x;
  for (std::size_t k = 0; k < flow.size(); ++k) {
    BlockNodes bn;
    try {
      bn = record_block(tape, flow.blocks()[k], slots, cur, cond, opts, rng);
    } catch (const NumericalError& e) {
      throw NumericalError("block " + std::to_string(k) + ": " + e.what());
    }
    if (!tape.value(bn.out).allFinite() || !tape.value(bn.logdet).allFinite())
      throw NumericalError("block " + std::to_string(k) + " produced non-finite values");
    cur = bn.out;
    out.logdet = out.logdet.valid() ? tape.add(out.logdet, bn.logdet) : bn.logdet;
  }
  out.z = cur;
  const double n = static_cast<double>(flow.dim());
  const ad::Var base =
      tape.add_scalar(tape.scale(tape.col_sqnorm(cur), -0.5), -0.5 * n * std::log(2.0 * std::numbers::pi));
  out.logdensity = out.logdet.valid() ? tape.add(base, out.logdet) : base;
  return out;
}

// ---------------------------------------------------------------------------
// Log-determinants

double logdet_exact(const ResidualBlock& block, const Vec& x, const Vec* cond) {
  require_initialized(block);
  Mat cstore;
  const Mat* c = opt_mat(cond, cstore);
  ad::Tape tape;
  const ad::Var xin = tape.input(Mat(x));
  SlotCursor slots;
  FlowRecordOptions opts;
  const BlockNodes bn = record_block(tape, block, slots, xin, c, opts);
  return linalg::lu_logabsdet(ad::jacobian(tape, xin, bn.out));
}

double logdet_single_layer(const ResidualBlock& block, const Vec& x) {
  const Pnn& phi = block.phi();
  if (phi.kappa() != 1 || phi.widen() != 1 || block.cond_dim() != 0)
    throw InvalidArgument("logdet_single_layer: needs kappa = 1, p = 1 and no condition");
  const ProxBlock& layer = phi.layers().front();
  if (layer.hidden() > layer.width())
    throw InvalidArgument("logdet_single_layer: T must have orthonormal rows (hidden <= n)");
  if (x.size() != layer.width()) throw InvalidArgument("logdet_single_layer: dimension mismatch");
  require_initialized(block);
  const Vec u = layer.t * x + layer.bias;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < u.size(); ++i) acc += std::log1p(block.gamma() * layer.act.deriv(u(i)));
  return acc + block.actnorm().logdet();
}

double EstimatorConfig::survival(std::size_t k) const {
  if (k <= 1) return 1.0;
  return std::pow(1.0 - q_success, static_cast<double>(k - 1));
}

std::size_t EstimatorConfig::draw(Rng& rng) const {
  std::size_t k = 1;
  while (rng.uniform() >= q_success && k < 10000) ++k;
  return k;
}

void EstimatorConfig::validate() const {
  if (!(q_success > 0.0 && q_success < 1.0))
    throw InvalidArgument("EstimatorConfig: q_success must lie in (0, 1) so that P(Q = k) > 0 for all k");
  if (probe_count == 0) throw InvalidArgument("EstimatorConfig: probe_count must be positive");
}

std::vector<double> logdet_estimate_samples(const ResidualBlock& block, const Vec& x, const EstimatorConfig& cfg,
                                            const Vec* cond) {
  cfg.validate();
  require_initialized(block);
  Rng rng(cfg.seed);
  const auto probes = static_cast<Eigen::Index>(cfg.probe_count);
  Mat cstore;
  if (cond != nullptr) cstore = cond->replicate(1, probes);
  ad::Tape tape;
  const ad::Var xin = tape.input(x.replicate(1, probes));
  SlotCursor slots;
  FlowRecordOptions opts;
  opts.mode = LogdetMode::estimator;
  opts.estimator = cfg;
  const BlockNodes bn = record_block(tape, block, slots, xin, cond != nullptr ? &cstore : nullptr, opts, &rng);
  const Mat& row = tape.value(bn.logdet);
  return {row.data(), row.data() + row.size()};
}

double logdet_estimate(const ResidualBlock& block, const Vec& x, const EstimatorConfig& cfg, const Vec* cond) {
  const auto s = logdet_estimate_samples(block, x, cfg, cond);
  double acc = 0.0;
  for (double v : s) acc += v;
  return acc / static_cast<double>(s.size());
}

std::vector<std::vector<Mat>> logdet_estimate_grad_samples(const ResidualBlock& block, const Vec& x,
                                                           const EstimatorConfig& cfg, const Vec* cond) {
  cfg.validate();
  require_initialized(block);
  Rng rng(cfg.seed);
  Mat cstore;
  const Mat* c = opt_mat(cond, cstore);
  FlowRecordOptions opts;
  opts.mode = LogdetMode::estimator;
  opts.estimator = cfg;
  std::vector<std::vector<Mat>> out;
  out.reserve(cfg.probe_count);
  for (std::size_t p = 0; p < cfg.probe_count; ++p) {
    ad::Tape tape;
    const ad::Var xin = tape.input(Mat(x));
    SlotCursor slots;
    const BlockNodes bn = record_block(tape, block, slots, xin, c, opts, &rng);
    out.push_back(tape.backward(bn.logdet, Mat::Ones(1, 1)).params());
  }
  return out;
}

std::vector<Mat> logdet_estimate_grad(const ResidualBlock& block, const Vec& x, const EstimatorConfig& cfg,
                                      const Vec* cond) {
  auto samples = logdet_estimate_grad_samples(block, x, cfg, cond);
  std::vector<Mat> mean = samples.front();
  for (std::size_t p = 1; p < samples.size(); ++p)
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += samples[p][i];
  for (auto& m : mean) m /= static_cast<double>(samples.size());
  return mean;
}

std::vector<Mat> logdet_exact_grad(const ResidualBlock& block, const Vec& x, const Vec* cond,
                                   const RecordOptions& record) {
  require_initialized(block);
  Mat cstore;
  const Mat* c = opt_mat(cond, cstore);
  ad::Tape tape;
  const ad::Var xin = tape.input(Mat(x));
  SlotCursor slots;
  FlowRecordOptions opts;
  opts.record = record;
  const BlockNodes bn = record_block(tape, block, slots, xin, c, opts);
  return ad::grad_of_scalar_of_jacobian(tape, tape.sum(bn.logdet));
}

// ---------------------------------------------------------------------------
// Whole flows

std::size_t worker_threads() {
  if (const char* env = std::getenv("PROXFLOW_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

Vec standard_normal_logpdf(const Mat& z) {
  const double n = static_cast<double>(z.rows());
  return (-0.5 * z.colwise().squaredNorm().array() - 0.5 * n * std::log(2.0 * std::numbers::pi)).transpose();
}

ForwardResult flow_forward_logdensity(const ProxFlow& flow, const Mat& x, const Mat* cond) {
  if (x.rows() != static_cast<Eigen::Index>(flow.dim()))
    throw InvalidArgument("flow_forward_logdensity: input dimension " + std::to_string(x.rows()) + " != " +
                          std::to_string(flow.dim()));
  if (!x.allFinite()) throw InvalidArgument("flow_forward_logdensity: input contains non-finite values");
  for (const auto& block : flow.blocks()) require_initialized(block);
  if (flow.conditional() && (cond == nullptr || cond->cols() != x.cols()))
    throw InvalidArgument("flow_forward_logdensity: conditional flow needs one condition column per sample");

  ForwardResult out{Mat(x.rows(), x.cols()), Vec(x.cols())};
  detail::parallel_chunks(static_cast<std::size_t>(x.cols()), kChunk, worker_threads(),
                          [&](std::size_t begin, std::size_t count) {
                            const auto b = static_cast<Eigen::Index>(begin);
                            const auto m = static_cast<Eigen::Index>(count);
                            ad::Tape tape;
                            const ad::Var xin = tape.input(x.middleCols(b, m));
                            Mat cchunk;
                            if (cond != nullptr && flow.conditional()) cchunk = cond->middleCols(b, m);
                            SlotCursor slots;
                            const FlowNodes fn = record_flow(tape, flow, slots, xin,
                                                             flow.conditional() ? &cchunk : nullptr, {});
                            out.z.middleCols(b, m) = tape.value(fn.z);
                            out.logdensity.segment(b, m) = tape.value(fn.logdensity).transpose();
                          });
  return out;
}

std::pair<Vec, double> flow_forward_logdensity(const ProxFlow& flow, const Vec& x) {
  auto r = flow_forward_logdensity(flow, Mat(x));
  return {r.z.col(0), r.logdensity(0)};
}

Mat flow_forward(const ProxFlow& flow, const Mat& x, const Mat* cond) {
  Mat cstore;
  cond = flow.prepare_cond(cond, cstore);
  Mat cur = x;
  for (const auto& block : flow.blocks()) cur = block_forward_batch(block, cur, cond);
  return cur;
}

Mat flow_inverse(const ProxFlow& flow, const Mat& z, const Mat* cond, const SolverOptions& opts) {
  if (z.rows() != static_cast<Eigen::Index>(flow.dim()))
    throw InvalidArgument("flow_inverse: dimension mismatch");
  Mat cstore;
  cond = flow.prepare_cond(cond, cstore);
  Mat out(z.rows(), z.cols());
  detail::parallel_chunks(static_cast<std::size_t>(z.cols()), kChunk, opts.history ? 1 : worker_threads(),
                          [&](std::size_t begin, std::size_t count) {
                            const auto b = static_cast<Eigen::Index>(begin);
                            const auto m = static_cast<Eigen::Index>(count);
                            Mat cur = z.middleCols(b, m);
                            Mat cchunk;
                            if (cond != nullptr) cchunk = cond->middleCols(b, m);
                            for (std::size_t k = flow.size(); k-- > 0;) {
                              try {
                                cur = block_invert_batch(flow.blocks()[k], cur,
                                                         cond != nullptr ? &cchunk : nullptr, opts);
                              } catch (const ConvergenceError& e) {
                                throw ConvergenceError("block " + std::to_string(k) + ", chunk starting at sample " +
                                                           std::to_string(begin) + ": " + e.what(),
                                                       e.residual(), e.iterations());
                              }
                            }
                            out.middleCols(b, m) = cur;
                          });
  return out;
}

Mat flow_sample(const ProxFlow& flow, std::size_t count, Rng& rng, const SolverOptions& opts) {
  if (flow.conditional()) throw InvalidArgument("flow_sample: conditional flow needs a condition (cond_sample)");
  const Mat z = rng.normal_matrix(static_cast<Eigen::Index>(flow.dim()), static_cast<Eigen::Index>(count));
  return flow_inverse(flow, z, nullptr, opts);
}

void initialize_actnorm(ProxFlow& flow, const Mat& x, const Mat* cond) {
  if (flow.conditional() && cond != nullptr && !flow.cond_norm().initialized &&
      cond->rows() == static_cast<Eigen::Index>(flow.cond_dim())) {
    ActNorm norm(flow.cond_dim());
    norm.initialize(*cond);
    flow.set_cond_norm(std::move(norm));
  }
  Mat cstore;
  cond = flow.prepare_cond(cond, cstore);
  Mat cur = x;
  for (auto& block : flow.blocks()) {
    const Mat h = block.residual(cur, cond);
    block.actnorm().initialize(h);
    cur = block.actnorm().apply(h);
  }
}

}  // namespace proxflow
