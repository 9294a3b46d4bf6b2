#pragma once

#include <cstddef>

#include "proxflow/flow.hpp"

/// Conditional flows act on (y, x): each block is x -> actnorm(x + gamma
/// Phi_2(y, x)) where Phi is a PNN over R^{d+n} and Phi_2 its last n outputs.
/// The generic flow code handles the condition; these are the per-sample entry
/// points plus a few helpers.
namespace proxflow {

ProxFlow make_cond_flow(const FlowShape& shape, Rng& rng);

Vec cond_block_forward(const ResidualBlock& block, const Vec& y, const Vec& x);
Vec cond_block_invert(const ResidualBlock& block, const Vec& y, const Vec& z, double tol = 1e-9,
                      std::size_t max_iter = 10000);

/// log p(x | y): base density at T(y, x) plus x-Jacobian log-dets.
double cond_logdensity(const ProxFlow& flow, const Vec& y, const Vec& x);
/// Batched; column i of x is paired with column i of y.
Vec cond_logdensity(const ProxFlow& flow, const Mat& y, const Mat& x);

/// count draws of T(y, .)^{-1}(z), z ~ N(0, I_n), all at the same y.
Mat cond_sample(const ProxFlow& flow, const Vec& y, std::size_t count, Rng& rng, const SolverOptions& opts = {});

/// Forward map x -> T(y, x) at a fixed y.
Mat cond_forward(const ProxFlow& flow, const Vec& y, const Mat& x);

/// Conditional block that ignores y and reproduces `block` in x: every T gets
/// zero columns at the y-positions of the widened joint vector. Needs wide
/// (row-orthonormal) T, i.e. hidden <= p n, or the embedded T loses rank.
ResidualBlock embed_unconditional(const ResidualBlock& block, std::size_t cond_dim);
ProxFlow embed_unconditional(const ProxFlow& flow, std::size_t cond_dim);

}  // namespace proxflow
