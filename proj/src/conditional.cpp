#include "proxflow/conditional.hpp"

#include <string>

#include "proxflow/error.hpp"

namespace proxflow {
namespace {

void require_conditional(const ProxFlow& flow, Eigen::Index y_rows) {
  if (!flow.conditional()) throw InvalidArgument("conditional flow expected (cond_dim = 0)");
  if (y_rows != static_cast<Eigen::Index>(flow.cond_dim()))
    throw InvalidArgument("condition has " + std::to_string(y_rows) + " entries, flow expects " +
                          std::to_string(flow.cond_dim()));
}

void require_block_cond(const ResidualBlock& block, const Vec& y) {
  if (block.cond_dim() == 0) throw InvalidArgument("conditional block expected (cond_dim = 0)");
  if (y.size() != static_cast<Eigen::Index>(block.cond_dim()))
    throw InvalidArgument("condition has " + std::to_string(y.size()) + " entries, block expects " +
                          std::to_string(block.cond_dim()));
}

}  // namespace

ProxFlow make_cond_flow(const FlowShape& shape, Rng& rng) {
  if (shape.cond_dim == 0) throw InvalidArgument("make_cond_flow: cond_dim must be positive");
  return make_flow(shape, rng);
}

Vec cond_block_forward(const ResidualBlock& block, const Vec& y, const Vec& x) {
  require_block_cond(block, y);
  const Mat c = y;
  return block_forward_batch(block, Mat(x), &c).col(0);
}

Vec cond_block_invert(const ResidualBlock& block, const Vec& y, const Vec& z, double tol, std::size_t max_iter) {
  require_block_cond(block, y);
  const Mat c = y;
  SolverOptions opts;
  opts.tol = tol;
  opts.max_iter = max_iter;
  return block_invert_batch(block, Mat(z), &c, opts).col(0);
}

double cond_logdensity(const ProxFlow& flow, const Vec& y, const Vec& x) {
  return cond_logdensity(flow, Mat(y), Mat(x))(0);
}

Vec cond_logdensity(const ProxFlow& flow, const Mat& y, const Mat& x) {
  require_conditional(flow, y.rows());
  if (y.cols() != x.cols()) throw InvalidArgument("cond_logdensity: y and x column counts differ");
  return flow_forward_logdensity(flow, x, &y).logdensity;
}

Mat cond_forward(const ProxFlow& flow, const Vec& y, const Mat& x) {
  require_conditional(flow, y.size());
  const Mat c = y.replicate(1, x.cols());
  return flow_forward(flow, x, &c);
}

Mat cond_sample(const ProxFlow& flow, const Vec& y, std::size_t count, Rng& rng, const SolverOptions& opts) {
  require_conditional(flow, y.size());
  const auto m = static_cast<Eigen::Index>(count);
  const Mat z = rng.normal_matrix(static_cast<Eigen::Index>(flow.dim()), m);
  const Mat c = y.replicate(1, m);
  return flow_inverse(flow, z, &c, opts);
}

ResidualBlock embed_unconditional(const ResidualBlock& block, std::size_t cond_dim) {
  if (block.cond_dim() != 0) throw InvalidArgument("embed_unconditional: block is already conditional");
  if (cond_dim == 0) throw InvalidArgument("embed_unconditional: cond_dim must be positive");
  const Pnn& src = block.phi();
  const auto n = static_cast<Eigen::Index>(src.base_dim());
  const auto d = static_cast<Eigen::Index>(cond_dim);
  const auto p = static_cast<Eigen::Index>(src.widen());
  std::vector<ProxBlock> layers;
  for (const auto& layer : src.layers()) {
    if (layer.hidden() > layer.width())
      throw InvalidArgument("embed_unconditional: needs hidden <= p n (row-orthonormal T)");
    Mat tt = Mat::Zero(layer.t_tilde.rows(), p * (d + n));
    for (Eigen::Index j = 0; j < p; ++j) tt.middleCols(j * (d + n) + d, n) = layer.t_tilde.middleCols(j * n, n);
    layers.emplace_back(std::move(tt), layer.bias, layer.act);
  }
  Pnn phi(src.base_dim() + cond_dim, src.widen(), std::move(layers));
  return ResidualBlock(block.gamma(), std::move(phi), block.actnorm(), cond_dim);
}

ProxFlow embed_unconditional(const ProxFlow& flow, std::size_t cond_dim) {
  ProxFlow out(flow.dim(), cond_dim);
  for (const auto& block : flow.blocks()) out.add_block(embed_unconditional(block, cond_dim));
  return out;
}

}  // namespace proxflow
