#include "proxflow/pnn.hpp"

#include <cmath>
#include <string>

#include "proxflow/error.hpp"

namespace proxflow {
namespace {

Mat apply_act(const Mat& u, const Activation& act) {
  Mat out(u.rows(), u.cols());
  for (Eigen::Index i = 0; i < u.size(); ++i) out.data()[i] = act.value(u.data()[i]);
  return out;
}

ad::Var record_projection(ad::Tape& tape, const ProxBlock& layer, std::size_t slot, const RecordOptions& opts) {
  const ad::Var raw = tape.param(layer.t_tilde, slot);
  if (opts.projection == ProjectionGrad::straight_through) return tape.straight_through(raw, layer.t);
  const bool wide = linalg::is_wide(layer.t_tilde);
  ad::Var y = wide ? tape.transpose(raw) : raw;
  for (std::size_t s = 0; s < layer.polar_steps; ++s) y = tape.polar_step(y);
  return wide ? tape.transpose(y) : y;
}

}  // namespace

ProxBlock::ProxBlock(Mat t_tilde_, Vec bias_, Activation act_, const linalg::PolarOptions& opts)
    : t_tilde(std::move(t_tilde_)), bias(std::move(bias_)), act(act_) {
  if (bias.size() != t_tilde.rows())
    throw InvalidArgument("ProxBlock: bias length " + std::to_string(bias.size()) + " != hidden size " +
                          std::to_string(t_tilde.rows()));
  project(opts);
}

void ProxBlock::project(const linalg::PolarOptions& opts) {
  auto res = linalg::polar_iterate(t_tilde, opts);
  t = std::move(res.value);
  polar_steps = res.steps;
}

Mat ProxBlock::apply(const Mat& z) const {
  Mat u = t * z;
  u.colwise() += bias;
  return t.transpose() * apply_act(u, act);
}

Pnn::Pnn(std::size_t base_dim, std::size_t widen, std::vector<ProxBlock> layers)
    : base_dim_(base_dim), widen_(widen), layers_(std::move(layers)) {
  if (base_dim_ == 0) throw InvalidArgument("Pnn: base dimension must be positive");
  if (widen_ == 0) throw InvalidArgument("Pnn: widening factor p must be positive");
  if (layers_.empty()) throw InvalidArgument("Pnn: needs at least one layer");
  const auto w = static_cast<Eigen::Index>(width());
  for (std::size_t k = 0; k < layers_.size(); ++k)
    if (layers_[k].width() != w)
      throw InvalidArgument("Pnn: layer " + std::to_string(k) + " has width " +
                            std::to_string(layers_[k].width()) + ", expected p*n = " + std::to_string(w));
  const auto m = static_cast<Eigen::Index>(base_dim_);
  widen_matrix_ = Mat::Zero(w, m);
  const double s = 1.0 / std::sqrt(static_cast<double>(widen_));
  for (std::size_t j = 0; j < widen_; ++j)
    widen_matrix_.middleRows(static_cast<Eigen::Index>(j) * m, m) = s * Mat::Identity(m, m);
}

Pnn Pnn::random(std::size_t base_dim, std::size_t widen, std::size_t hidden, std::size_t kappa,
                Activation act, Rng& rng) {
  if (hidden == 0 || kappa == 0) throw InvalidArgument("Pnn::random: hidden size and kappa must be positive");
  const auto w = static_cast<Eigen::Index>(base_dim * widen);
  std::vector<ProxBlock> layers;
  layers.reserve(kappa);
  for (std::size_t k = 0; k < kappa; ++k) {
    ProxBlock layer(rng.normal_matrix(static_cast<Eigen::Index>(hidden), w),
                    Vec::Zero(static_cast<Eigen::Index>(hidden)), act);
    // Start training on the manifold.
    layer.t_tilde = layer.t;
    layer.project();
    layers.push_back(std::move(layer));
  }
  return Pnn(base_dim, widen, std::move(layers));
}

double Pnn::averagedness() const {
  const auto k = static_cast<double>(kappa());
  return k / (k + 1.0);
}

double averagedness(const Pnn& pnn) { return pnn.averagedness(); }

Mat Pnn::forward(const Mat& x) const {
  if (x.rows() != static_cast<Eigen::Index>(base_dim_))
    throw InvalidArgument("Pnn: input dimension " + std::to_string(x.rows()) + " != " + std::to_string(base_dim_));
  Mat z = widen_matrix_ * x;
  for (const auto& layer : layers_) z = layer.apply(z);
  return widen_matrix_.transpose() * z;
}

Mat Pnn::r_forward(const Mat& x) const {
  const double t = averagedness();
  return forward(x) / t - ((1.0 - t) / t) * x;
}

PnnNodes record_pnn(ad::Tape& tape, const Pnn& pnn, SlotCursor& slots, ad::Var input, ad::Var tangent,
                    std::size_t directions, const RecordOptions& opts) {
  if (tape.value(input).rows() != static_cast<Eigen::Index>(pnn.base_dim()))
    throw InvalidArgument("record_pnn: input dimension mismatch");
  const ad::Var a = tape.constant(pnn.widen_matrix());
  const ad::Var at = tape.constant(pnn.widen_matrix().transpose());

  ad::Var z = tape.matmul(a, input);
  ad::Var dz = tangent.valid() ? tape.matmul(a, tangent) : ad::Var{};
  for (const auto& layer : pnn.layers()) {
    const ad::Var t = record_projection(tape, layer, slots.take(), opts);
    const ad::Var b = tape.param(layer.bias, slots.take());
    const ad::Var tt = tape.transpose(t);
    const ad::Var u = tape.add_bias(tape.matmul(t, z), b);
    if (dz.valid()) {
      ad::Var d = tape.activation_deriv(u, layer.act);
      if (directions > 1) d = tape.repeat_cols(d, directions);
      dz = tape.matmul(tt, tape.hadamard(d, tape.matmul(t, dz)));
    }
    z = tape.matmul(tt, tape.activation(u, layer.act));
  }
  PnnNodes out;
  out.output = tape.matmul(at, z);
  if (dz.valid()) out.tangent = tape.matmul(at, dz);
  return out;
}

PnnTrace pnn_forward(const Pnn& pnn, const Vec& x, const RecordOptions& opts) {
  if (x.size() != static_cast<Eigen::Index>(pnn.base_dim()))
    throw InvalidArgument("pnn_forward: input dimension " + std::to_string(x.size()) + " != " +
                          std::to_string(pnn.base_dim()));
  PnnTrace trace;
  trace.input = trace.tape.input(Mat(x));
  SlotCursor slots;
  trace.output = record_pnn(trace.tape, pnn, slots, trace.input, {}, 0, opts).output;
  trace.y = trace.tape.value(trace.output).col(0);
  return trace;
}

Vec r_forward(const Pnn& pnn, const Vec& x) { return pnn.r_forward(Mat(x)).col(0); }

}  // namespace proxflow
