#pragma once

#include <cstddef>
#include <vector>

#include "proxflow/activation.hpp"
#include "proxflow/linalg.hpp"
#include "proxflow/tape.hpp"

namespace proxflow {

/// How parameter gradients pass through T = P_St(T_tilde).
enum class ProjectionGrad {
  unrolled,          ///< differentiate the recorded polar iteration
  straight_through,  ///< treat the projection as identity in the backward pass
};

/// Projection settings for trained matrices. One extra polar step after
/// convergence keeps the unrolled derivative accurate.
inline linalg::PolarOptions default_projection() { return {1e-10, 50, 1}; }

/// One proximal layer B(z) = T^T sigma(T z + b), T = P_St(t_tilde) of shape
/// hidden x width. Wide T is row-orthonormal, tall T column-orthonormal.
struct ProxBlock {
  Mat t_tilde;
  Mat t;
  Vec bias;
  Activation act;
  std::size_t polar_steps = 0;

  ProxBlock() = default;
  ProxBlock(Mat t_tilde, Vec bias, Activation act,
            const linalg::PolarOptions& opts = default_projection());

  /// Recompute t from t_tilde.
  void project(const linalg::PolarOptions& opts = default_projection());

  Eigen::Index hidden() const { return t.rows(); }
  Eigen::Index width() const { return t.cols(); }

  Mat apply(const Mat& z) const;
};

/// Proximal neural network Psi(x) = A^T (B_kappa o ... o B_1)(A x) with the
/// widening adapter A = p^{-1/2} (I; ...; I) in St(p m, m).
class Pnn {
 public:
  Pnn() = default;
  Pnn(std::size_t base_dim, std::size_t widen, std::vector<ProxBlock> layers);

  /// Gaussian T_tilde projected once onto the manifold, zero biases.
  static Pnn random(std::size_t base_dim, std::size_t widen, std::size_t hidden, std::size_t kappa,
                    Activation act, Rng& rng);

  std::size_t base_dim() const { return base_dim_; }
  std::size_t widen() const { return widen_; }
  std::size_t width() const { return base_dim_ * widen_; }
  std::size_t kappa() const { return layers_.size(); }
  /// kappa / (kappa + 1).
  double averagedness() const;

  const Mat& widen_matrix() const { return widen_matrix_; }
  const std::vector<ProxBlock>& layers() const { return layers_; }
  std::vector<ProxBlock>& layers() { return layers_; }

  /// Batched evaluation; columns of x are points in R^base_dim.
  Mat forward(const Mat& x) const;
  /// R(x) = Psi(x)/t - (1-t)/t x, nonexpansive whenever Psi is t-averaged.
  Mat r_forward(const Mat& x) const;

 private:
  std::size_t base_dim_ = 0;
  std::size_t widen_ = 1;
  std::vector<ProxBlock> layers_;
  Mat widen_matrix_;
};

double averagedness(const Pnn& pnn);

/// Hands out consecutive parameter slots while a model is recorded.
struct SlotCursor {
  std::size_t next = 0;
  std::size_t take() { return next++; }
};

struct RecordOptions {
  ProjectionGrad projection = ProjectionGrad::unrolled;
};

struct PnnNodes {
  ad::Var output;
  /// Propagated forward tangent; invalid when no tangent was supplied.
  ad::Var tangent;
};

/// Records Psi on the tape. Slots are taken in layer order as
/// (t_tilde, bias). `tangent` holds `directions` tangent columns per input
/// column, ordered sample-major.
PnnNodes record_pnn(ad::Tape& tape, const Pnn& pnn, SlotCursor& slots, ad::Var input,
                    ad::Var tangent = {}, std::size_t directions = 0, const RecordOptions& opts = {});

struct PnnTrace {
  Vec y;
  ad::Tape tape;
  ad::Var input;
  ad::Var output;
};

/// Single-point forward pass that keeps its tape for vjp and jacobian.
PnnTrace pnn_forward(const Pnn& pnn, const Vec& x, const RecordOptions& opts = {});

Vec r_forward(const Pnn& pnn, const Vec& x);

}  // namespace proxflow
