#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include "proxflow/activation.hpp"
#include "proxflow/linalg.hpp"

/// Reverse-mode differentiation over a closed vocabulary of matrix
/// primitives. Batches are stored column-wise: a batch of B vectors in R^m is
/// an m x B matrix.
///
/// Second-order quantities (parameter gradients of log|det J|) are obtained
/// by recording forward tangents as ordinary nodes: the Jacobian becomes a
/// node on the tape, and a single reverse sweep differentiates through it.
/// The only primitive that needs a second derivative for this is
/// activation_deriv, whose adjoint uses Activation::second.
namespace proxflow::ad {

struct Var {
  std::uint32_t id = std::numeric_limits<std::uint32_t>::max();
  bool valid() const { return id != std::numeric_limits<std::uint32_t>::max(); }
};

enum class Op : std::uint8_t {
  input,
  constant,
  param,
  matmul,
  transpose,
  add,
  sub,
  scale,
  scale_by,
  add_scalar,
  add_identity,
  add_bias,
  scale_rows,
  hadamard,
  activation,
  activation_deriv,
  repeat_cols,
  rows,
  vstack,
  polar_step,
  straight_through,
  batch_logabsdet,
  sum,
  col_sum,
  col_sqnorm,
  sum_squares,
  log,
  log_abs,
  reciprocal,
};

class Tape;

/// Result of one reverse sweep.
class Adjoints {
 public:
  /// Adjoint of v; a zero matrix of v's shape when v was not reached.
  Mat wrt(Var v) const;
  /// Parameter adjoints indexed by slot.
  std::vector<Mat> params() const;

 private:
  friend class Tape;
  Adjoints(const Tape& tape, std::vector<Mat> adj) : tape_(&tape), adj_(std::move(adj)) {}
  const Tape* tape_;
  std::vector<Mat> adj_;
};

class Tape {
 public:
  Var input(Mat value);
  Var constant(Mat value);
  /// A differentiable parameter bound to a slot of the caller's parameter list.
  Var param(Mat value, std::size_t slot);

  Var matmul(Var a, Var b);
  Var transpose(Var a);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var scale(Var a, double c);
  /// s * a with s a 1x1 node.
  Var scale_by(Var s, Var a);
  Var add_scalar(Var a, double c);
  /// a + c I for square a.
  Var add_identity(Var a, double c);
  /// a + b 1^T with b a column vector.
  Var add_bias(Var a, Var b);
  /// diag(s) a with s a column vector.
  Var scale_rows(Var a, Var s);
  Var hadamard(Var a, Var b);
  Var activation(Var a, Activation act);
  Var activation_deriv(Var a, Activation act);
  /// Column i of a becomes columns i*r .. i*r+r-1.
  Var repeat_cols(Var a, std::size_t r);
  Var rows(Var a, std::size_t start, std::size_t count);
  Var vstack(Var top, Var bottom);
  /// Y -> 2 Y (I + Y^T Y)^{-1} for tall or square Y.
  Var polar_step(Var y);
  /// Forward value `projected`, backward passes the adjoint to `raw` unchanged.
  Var straight_through(Var raw, Mat projected);
  /// n x (n B) blocks J_1 .. J_B -> 1 x B row of log|det J_i|.
  Var batch_logabsdet(Var blocks);
  Var sum(Var a);
  Var col_sum(Var a);
  Var col_sqnorm(Var a);
  Var sum_squares(Var a);
  Var log(Var a);
  Var log_abs(Var a);
  Var reciprocal(Var a);

  const Mat& value(Var v) const { return nodes_.at(v.id).value; }
  double scalar(Var v) const;
  std::size_t size() const { return nodes_.size(); }
  std::size_t param_slots() const { return param_slots_; }
  Op op(Var v) const { return nodes_.at(v.id).op; }

  /// Reverse sweep seeded with `cotangent` at `output`. Nodes with id <= floor
  /// (when given) receive adjoints but do not propagate them further.
  Adjoints backward(Var output, const Mat& cotangent, Var floor = {}) const;

  /// A copy of the tape with every non-leaf value recomputed from the leaves.
  Tape replayed() const;

 private:
  friend class Adjoints;

  struct Node {
    Op op;
    std::uint32_t a = 0;
    std::uint32_t b = 0;
    double c = 0.0;
    std::size_t i0 = 0;
    std::size_t i1 = 0;
    Activation act{};
    Mat value;
    Mat aux;
  };

  Var push(Node node);
  void compute(Node& node) const;
  const Mat& val(std::uint32_t id) const { return nodes_[id].value; }
  void check(Var v) const;

  std::vector<Node> nodes_;
  std::size_t param_slots_ = 0;
};

struct VjpResult {
  Mat input_grad;
  std::vector<Mat> param_grads;
};

/// v^T d(output)/d(input) and v^T d(output)/d(params).
VjpResult vjp(const Tape& tape, Var input, Var output, const Mat& cotangent);

inline constexpr std::size_t kMaxJacobianDim = 256;

/// Dense Jacobian of a vector-valued output with respect to a single-column
/// input, assembled from one vjp per output coordinate. Throws for outputs
/// larger than kMaxJacobianDim; use the stochastic estimator there.
Mat jacobian(const Tape& tape, Var input, Var output);

/// Parameter gradient of a 1x1 node built from batch_logabsdet on a
/// tangent-assembled Jacobian.
std::vector<Mat> grad_of_scalar_of_jacobian(const Tape& tape, Var scalar);

}  // namespace proxflow::ad
