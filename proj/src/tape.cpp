#include "proxflow/tape.hpp"

#include <cmath>
#include <string>

#include "proxflow/error.hpp"

namespace proxflow::ad {
namespace {

void require(bool ok, const char* what) {
  if (!ok) throw InvalidArgument(std::string("tape: ") + what);
}

template <class F>
Mat map(const Mat& m, F&& f) {
  Mat out(m.rows(), m.cols());
  const double* src = m.data();
  double* dst = out.data();
  for (Eigen::Index i = 0; i < m.size(); ++i) dst[i] = f(src[i]);
  return out;
}

void accumulate(Mat& slot, const Mat& contribution) {
  if (slot.size() == 0)
    slot = contribution;
  else
    slot += contribution;
}

}  // namespace

Mat Adjoints::wrt(Var v) const {
  const Mat& a = adj_.at(v.id);
  if (a.size() != 0) return a;
  const Mat& val = tape_->value(v);
  return Mat::Zero(val.rows(), val.cols());
}

std::vector<Mat> Adjoints::params() const {
  std::vector<Mat> out(tape_->param_slots());
  for (std::size_t id = 0; id < tape_->nodes_.size(); ++id) {
    const auto& node = tape_->nodes_[id];
    if (node.op != Op::param) continue;
    Mat& slot = out[node.i0];
    if (slot.size() == 0) slot = Mat::Zero(node.value.rows(), node.value.cols());
    if (adj_[id].size() != 0) slot += adj_[id];
  }
  return out;
}

void Tape::check(Var v) const {
  if (!v.valid() || v.id >= nodes_.size()) throw InvalidArgument("tape: invalid variable handle");
}

double Tape::scalar(Var v) const {
  const Mat& m = value(v);
  require(m.rows() == 1 && m.cols() == 1, "scalar(): node is not 1x1");
  return m(0, 0);
}

Var Tape::push(Node node) {
  compute(node);
  nodes_.push_back(std::move(node));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::input(Mat value) { return push({.op = Op::input, .value = std::move(value)}); }
Var Tape::constant(Mat value) { return push({.op = Op::constant, .value = std::move(value)}); }

Var Tape::param(Mat value, std::size_t slot) {
  param_slots_ = std::max(param_slots_, slot + 1);
  return push({.op = Op::param, .i0 = slot, .value = std::move(value)});
}

Var Tape::matmul(Var a, Var b) {
  check(a), check(b);
  require(value(a).cols() == value(b).rows(), "matmul shape mismatch");
  return push({.op = Op::matmul, .a = a.id, .b = b.id});
}

Var Tape::transpose(Var a) {
  check(a);
  return push({.op = Op::transpose, .a = a.id});
}

Var Tape::add(Var a, Var b) {
  check(a), check(b);
  require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(), "add shape mismatch");
  return push({.op = Op::add, .a = a.id, .b = b.id});
}

Var Tape::sub(Var a, Var b) {
  check(a), check(b);
  require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(), "sub shape mismatch");
  return push({.op = Op::sub, .a = a.id, .b = b.id});
}

Var Tape::scale(Var a, double c) {
  check(a);
  return push({.op = Op::scale, .a = a.id, .c = c});
}

Var Tape::scale_by(Var s, Var a) {
  check(s), check(a);
  require(value(s).size() == 1, "scale_by expects a 1x1 scale");
  return push({.op = Op::scale_by, .a = s.id, .b = a.id});
}

Var Tape::add_scalar(Var a, double c) {
  check(a);
  return push({.op = Op::add_scalar, .a = a.id, .c = c});
}

Var Tape::add_identity(Var a, double c) {
  check(a);
  require(value(a).rows() == value(a).cols(), "add_identity expects a square matrix");
  return push({.op = Op::add_identity, .a = a.id, .c = c});
}

Var Tape::add_bias(Var a, Var b) {
  check(a), check(b);
  require(value(b).cols() == 1 && value(b).rows() == value(a).rows(), "add_bias shape mismatch");
  return push({.op = Op::add_bias, .a = a.id, .b = b.id});
}

Var Tape::scale_rows(Var a, Var s) {
  check(a), check(s);
  require(value(s).cols() == 1 && value(s).rows() == value(a).rows(), "scale_rows shape mismatch");
  return push({.op = Op::scale_rows, .a = a.id, .b = s.id});
}

Var Tape::hadamard(Var a, Var b) {
  check(a), check(b);
  require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(), "hadamard shape mismatch");
  return push({.op = Op::hadamard, .a = a.id, .b = b.id});
}

Var Tape::activation(Var a, Activation act) {
  check(a);
  return push({.op = Op::activation, .a = a.id, .act = act});
}

Var Tape::activation_deriv(Var a, Activation act) {
  check(a);
  return push({.op = Op::activation_deriv, .a = a.id, .act = act});
}

Var Tape::repeat_cols(Var a, std::size_t r) {
  check(a);
  require(r >= 1, "repeat_cols needs r >= 1");
  return push({.op = Op::repeat_cols, .a = a.id, .i0 = r});
}

Var Tape::rows(Var a, std::size_t start, std::size_t count) {
  check(a);
  require(start + count <= static_cast<std::size_t>(value(a).rows()), "rows out of range");
  return push({.op = Op::rows, .a = a.id, .i0 = start, .i1 = count});
}

Var Tape::vstack(Var top, Var bottom) {
  check(top), check(bottom);
  require(value(top).cols() == value(bottom).cols(), "vstack column mismatch");
  return push({.op = Op::vstack, .a = top.id, .b = bottom.id});
}

Var Tape::polar_step(Var y) {
  check(y);
  require(!linalg::is_wide(value(y)), "polar_step expects a tall or square matrix");
  return push({.op = Op::polar_step, .a = y.id});
}

Var Tape::straight_through(Var raw, Mat projected) {
  check(raw);
  require(projected.rows() == value(raw).rows() && projected.cols() == value(raw).cols(),
          "straight_through shape mismatch");
  return push({.op = Op::straight_through, .a = raw.id, .aux = std::move(projected)});
}

Var Tape::batch_logabsdet(Var blocks) {
  check(blocks);
  const Mat& v = value(blocks);
  require(v.rows() > 0 && v.cols() % v.rows() == 0, "batch_logabsdet expects n x (n B)");
  return push({.op = Op::batch_logabsdet, .a = blocks.id});
}

Var Tape::sum(Var a) {
  check(a);
  return push({.op = Op::sum, .a = a.id});
}

Var Tape::col_sum(Var a) {
  check(a);
  return push({.op = Op::col_sum, .a = a.id});
}

Var Tape::col_sqnorm(Var a) {
  check(a);
  return push({.op = Op::col_sqnorm, .a = a.id});
}

Var Tape::sum_squares(Var a) {
  check(a);
  return push({.op = Op::sum_squares, .a = a.id});
}

Var Tape::log(Var a) {
  check(a);
  return push({.op = Op::log, .a = a.id});
}

Var Tape::log_abs(Var a) {
  check(a);
  return push({.op = Op::log_abs, .a = a.id});
}

Var Tape::reciprocal(Var a) {
  check(a);
  return push({.op = Op::reciprocal, .a = a.id});
}

void Tape::compute(Node& n) const {
  switch (n.op) {
    case Op::input:
    case Op::constant:
    case Op::param:
      return;
    case Op::matmul:
      n.value = val(n.a) * val(n.b);
      return;
    case Op::transpose:
      n.value = val(n.a).transpose();
      return;
    case Op::add:
      n.value = val(n.a) + val(n.b);
      return;
    case Op::sub:
      n.value = val(n.a) - val(n.b);
      return;
    case Op::scale:
      n.value = n.c * val(n.a);
      return;
    case Op::scale_by:
      n.value = val(n.a)(0, 0) * val(n.b);
      return;
    case Op::add_scalar:
      n.value = val(n.a).array() + n.c;
      return;
    case Op::add_identity:
      n.value = val(n.a);
      n.value.diagonal().array() += n.c;
      return;
    case Op::add_bias:
      n.value = val(n.a).colwise() + val(n.b).col(0);
      return;
    case Op::scale_rows:
      n.value = val(n.b).col(0).asDiagonal() * val(n.a);
      return;
    case Op::hadamard:
      n.value = val(n.a).cwiseProduct(val(n.b));
      return;
    case Op::activation: {
      const Activation act = n.act;
      n.value = map(val(n.a), [act](double x) { return act.value(x); });
      return;
    }
    case Op::activation_deriv: {
      const Activation act = n.act;
      n.value = map(val(n.a), [act](double x) { return act.deriv(x); });
      return;
    }
    case Op::repeat_cols: {
      const Mat& a = val(n.a);
      const auto r = static_cast<Eigen::Index>(n.i0);
      n.value.resize(a.rows(), a.cols() * r);
      for (Eigen::Index j = 0; j < a.cols(); ++j)
        for (Eigen::Index k = 0; k < r; ++k) n.value.col(j * r + k) = a.col(j);
      return;
    }
    case Op::rows:
      n.value = val(n.a).middleRows(static_cast<Eigen::Index>(n.i0), static_cast<Eigen::Index>(n.i1));
      return;
    case Op::vstack: {
      const Mat& top = val(n.a);
      const Mat& bottom = val(n.b);
      n.value.resize(top.rows() + bottom.rows(), top.cols());
      n.value << top, bottom;
      return;
    }
    case Op::polar_step: {
      const Mat& y = val(n.a);
      n.value = linalg::polar_step(y);
      Mat s = y.transpose() * y;
      s.diagonal().array() += 1.0;
      n.aux = s.llt().solve(Mat::Identity(s.rows(), s.cols()));
      return;
    }
    case Op::straight_through:
      n.value = n.aux;
      return;
    case Op::batch_logabsdet: {
      const Mat& j = val(n.a);
      const Eigen::Index dim = j.rows();
      const Eigen::Index batch = j.cols() / dim;
      n.value.resize(1, batch);
      n.aux.resize(dim, j.cols());
      for (Eigen::Index i = 0; i < batch; ++i) {
        const Mat block = j.middleCols(i * dim, dim);
        const double ld = linalg::lu_logabsdet(block);
        if (!std::isfinite(ld))
          throw NumericalError("batch_logabsdet: singular Jacobian in column block " + std::to_string(i));
        n.value(0, i) = ld;
        n.aux.middleCols(i * dim, dim) = block.partialPivLu().inverse().transpose();
      }
      return;
    }
    case Op::sum:
      n.value = Mat::Constant(1, 1, val(n.a).sum());
      return;
    case Op::col_sum:
      n.value = val(n.a).colwise().sum();
      return;
    case Op::col_sqnorm:
      n.value = val(n.a).colwise().squaredNorm();
      return;
    case Op::sum_squares:
      n.value = Mat::Constant(1, 1, val(n.a).squaredNorm());
      return;
    case Op::log:
      n.value = val(n.a).array().log();
      return;
    case Op::log_abs:
      n.value = val(n.a).array().abs().log();
      return;
    case Op::reciprocal:
      n.value = val(n.a).array().inverse();
      return;
  }
}

Adjoints Tape::backward(Var output, const Mat& cotangent, Var floor) const {
  check(output);
  const Mat& out = value(output);
  if (cotangent.rows() != out.rows() || cotangent.cols() != out.cols())
    throw InvalidArgument("backward: cotangent shape " + std::to_string(cotangent.rows()) + "x" +
                          std::to_string(cotangent.cols()) + " does not match output " +
                          std::to_string(out.rows()) + "x" + std::to_string(out.cols()));

  std::vector<Mat> adj(nodes_.size());
  adj[output.id] = cotangent;
  const std::int64_t stop = floor.valid() ? static_cast<std::int64_t>(floor.id) : -1;

  for (std::int64_t id = output.id; id > stop; --id) {
    const Mat& g = adj[static_cast<std::size_t>(id)];
    if (g.size() == 0) continue;
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    switch (n.op) {
      case Op::input:
      case Op::constant:
      case Op::param:
        break;
      case Op::matmul:
        accumulate(adj[n.a], g * val(n.b).transpose());
        accumulate(adj[n.b], val(n.a).transpose() * g);
        break;
      case Op::transpose:
        accumulate(adj[n.a], g.transpose());
        break;
      case Op::add:
        accumulate(adj[n.a], g);
        accumulate(adj[n.b], g);
        break;
      case Op::sub:
        accumulate(adj[n.a], g);
        accumulate(adj[n.b], -g);
        break;
      case Op::scale:
        accumulate(adj[n.a], n.c * g);
        break;
      case Op::scale_by:
        accumulate(adj[n.a], Mat::Constant(1, 1, g.cwiseProduct(val(n.b)).sum()));
        accumulate(adj[n.b], val(n.a)(0, 0) * g);
        break;
      case Op::add_scalar:
      case Op::add_identity:
        accumulate(adj[n.a], g);
        break;
      case Op::add_bias:
        accumulate(adj[n.a], g);
        accumulate(adj[n.b], g.rowwise().sum());
        break;
      case Op::scale_rows:
        accumulate(adj[n.a], val(n.b).col(0).asDiagonal() * g);
        accumulate(adj[n.b], g.cwiseProduct(val(n.a)).rowwise().sum());
        break;
      case Op::hadamard:
        accumulate(adj[n.a], g.cwiseProduct(val(n.b)));
        accumulate(adj[n.b], g.cwiseProduct(val(n.a)));
        break;
      case Op::activation: {
        const Activation act = n.act;
        accumulate(adj[n.a], g.cwiseProduct(map(val(n.a), [act](double x) { return act.deriv(x); })));
        break;
      }
      case Op::activation_deriv: {
        const Activation act = n.act;
        accumulate(adj[n.a], g.cwiseProduct(map(val(n.a), [act](double x) { return act.second(x); })));
        break;
      }
      case Op::repeat_cols: {
        const Mat& a = val(n.a);
        const auto r = static_cast<Eigen::Index>(n.i0);
        Mat ga = Mat::Zero(a.rows(), a.cols());
        for (Eigen::Index j = 0; j < a.cols(); ++j)
          for (Eigen::Index k = 0; k < r; ++k) ga.col(j) += g.col(j * r + k);
        accumulate(adj[n.a], ga);
        break;
      }
      case Op::rows: {
        const Mat& a = val(n.a);
        Mat ga = Mat::Zero(a.rows(), a.cols());
        ga.middleRows(static_cast<Eigen::Index>(n.i0), static_cast<Eigen::Index>(n.i1)) = g;
        accumulate(adj[n.a], ga);
        break;
      }
      case Op::vstack: {
        const Eigen::Index top = val(n.a).rows();
        accumulate(adj[n.a], g.topRows(top));
        accumulate(adj[n.b], g.bottomRows(g.rows() - top));
        break;
      }
      case Op::polar_step: {
        // Y' = 2 Y W with W = (I + Y^T Y)^{-1}.
        const Mat& y = val(n.a);
        const Mat& w = n.aux;
        const Mat gw = -2.0 * w * (y.transpose() * g) * w;
        accumulate(adj[n.a], 2.0 * g * w + y * (gw + gw.transpose()));
        break;
      }
      case Op::straight_through:
        accumulate(adj[n.a], g);
        break;
      case Op::batch_logabsdet: {
        const Eigen::Index dim = n.aux.rows();
        Mat ga(dim, n.aux.cols());
        for (Eigen::Index i = 0; i < g.cols(); ++i)
          ga.middleCols(i * dim, dim) = g(0, i) * n.aux.middleCols(i * dim, dim);
        accumulate(adj[n.a], ga);
        break;
      }
      case Op::sum: {
        const Mat& a = val(n.a);
        accumulate(adj[n.a], Mat::Constant(a.rows(), a.cols(), g(0, 0)));
        break;
      }
      case Op::col_sum: {
        const Mat& a = val(n.a);
        accumulate(adj[n.a], Mat::Ones(a.rows(), 1) * g);
        break;
      }
      case Op::col_sqnorm: {
        const Mat& a = val(n.a);
        accumulate(adj[n.a], 2.0 * a.cwiseProduct(Mat::Ones(a.rows(), 1) * g));
        break;
      }
      case Op::sum_squares:
        accumulate(adj[n.a], 2.0 * g(0, 0) * val(n.a));
        break;
      case Op::log:
      case Op::log_abs:
        accumulate(adj[n.a], g.cwiseQuotient(val(n.a)));
        break;
      case Op::reciprocal:
        accumulate(adj[n.a], -g.cwiseProduct(n.value.cwiseProduct(n.value)));
        break;
    }
  }
  return Adjoints(*this, std::move(adj));
}

Tape Tape::replayed() const {
  Tape copy = *this;
  for (Node& n : copy.nodes_) copy.compute(n);
  return copy;
}

VjpResult vjp(const Tape& tape, Var input, Var output, const Mat& cotangent) {
  Adjoints adj = tape.backward(output, cotangent);
  return {adj.wrt(input), adj.params()};
}

Mat jacobian(const Tape& tape, Var input, Var output) {
  const Mat& out = tape.value(output);
  const Mat& in = tape.value(input);
  if (out.cols() != 1 || in.cols() != 1) throw InvalidArgument("jacobian: expects single-column input and output");
  const Eigen::Index m = out.rows();
  if (static_cast<std::size_t>(m) > kMaxJacobianDim || static_cast<std::size_t>(in.rows()) > kMaxJacobianDim)
    throw InvalidArgument("jacobian: dimension " + std::to_string(m) + " exceeds the dense guard of " +
                          std::to_string(kMaxJacobianDim) + "; use the stochastic log-det estimator");
  Mat jac(m, in.rows());
  for (Eigen::Index i = 0; i < m; ++i) {
    Mat e = Mat::Zero(m, 1);
    e(i, 0) = 1.0;
    jac.row(i) = tape.backward(output, e, input).wrt(input).transpose();
  }
  return jac;
}

std::vector<Mat> grad_of_scalar_of_jacobian(const Tape& tape, Var scalar) {
  const double v = tape.scalar(scalar);
  if (!std::isfinite(v)) throw NumericalError("grad_of_scalar_of_jacobian: Jacobian is singular");
  return tape.backward(scalar, Mat::Ones(1, 1)).params();
}

}  // namespace proxflow::ad
