#include "proxflow/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>
#include <string>

#include "proxflow/error.hpp"

namespace proxflow {
namespace {

void resolve_box(const Mat& ref, GridSpec& grid) {
  const auto dim = ref.rows();
  if (grid.bins.size() != static_cast<std::size_t>(dim))
    throw InvalidArgument("grid has " + std::to_string(grid.bins.size()) + " bin counts for " +
                          std::to_string(dim) + "-dimensional samples");
  for (auto b : grid.bins)
    if (b == 0) throw InvalidArgument("grid bin counts must be >= 1");
  if (grid.lo.size() == 0 && grid.hi.size() == 0) {
    grid.lo = ref.rowwise().minCoeff();
    grid.hi = ref.rowwise().maxCoeff();
    const Vec span = (grid.hi - grid.lo).cwiseMax(1e-12);
    grid.lo -= grid.pad * span;
    grid.hi += grid.pad * span;
  }
  if (grid.lo.size() != dim || grid.hi.size() != dim) throw InvalidArgument("grid box has wrong dimension");
  for (Eigen::Index i = 0; i < dim; ++i)
    if (!(grid.hi(i) > grid.lo(i))) throw InvalidArgument("grid box is degenerate");
}

}  // namespace

double kl_from_histograms(const std::vector<double>& h, const std::vector<double>& g, double eps) {
  if (h.size() != g.size()) throw InvalidArgument("kl_from_histograms: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    if (h[i] <= 0.0) continue;
    acc += h[i] * std::log(h[i] / (g[i] > 0.0 ? g[i] : eps));
  }
  return acc;
}

std::vector<double> histogram(const Mat& x, const GridSpec& grid, std::size_t* out_of_box) {
  const auto dim = x.rows();
  std::size_t total = 1;
  for (auto b : grid.bins) total *= b;
  std::vector<double> h(total, 0.0);
  std::size_t clamped = 0;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    std::size_t idx = 0;
    bool outside = false;
    for (Eigen::Index i = 0; i < dim; ++i) {
      const auto nb = grid.bins[static_cast<std::size_t>(i)];
      // map to [0, 1] then to a bin
      const double u = (x(i, j) - grid.lo(i)) / (grid.hi(i) - grid.lo(i));
      if (u < 0.0 || u > 1.0 || !std::isfinite(u)) outside = true;
      auto b = static_cast<long long>(std::floor(u * static_cast<double>(nb)));
      b = std::clamp<long long>(b, 0, static_cast<long long>(nb) - 1);
      idx = idx * nb + static_cast<std::size_t>(b);
    }
    if (outside) ++clamped;
    h[idx] += 1.0;
  }
  for (auto& v : h) v /= static_cast<double>(x.cols());
  if (out_of_box != nullptr) *out_of_box = clamped;
  return h;
}

KlResult empirical_kl(const Mat& p, const Mat& q, const GridSpec& grid_in) {
  if (p.cols() == 0 || q.cols() == 0) throw InvalidArgument("empirical_kl: empty sample set");
  if (p.rows() != q.rows()) throw InvalidArgument("empirical_kl: dimension mismatch");
  GridSpec grid = grid_in;
  resolve_box(q, grid);
  std::size_t op = 0, oq = 0;
  const auto h = histogram(p, grid, &op);
  const auto g = histogram(q, grid, &oq);
  KlResult r;
  r.value = kl_from_histograms(h, g);
  r.out_of_box = op + oq;
  for (std::size_t i = 0; i < h.size(); ++i)
    if (h[i] > 0.0 && g[i] <= 0.0) ++r.eps_bins;
  r.lo = grid.lo;
  r.hi = grid.hi;
  return r;
}

// Shortest augmenting path with potentials (Jonker-Volgenant style), O(N^3).
std::vector<std::size_t> solve_assignment(const Mat& cost) {
  const auto n = static_cast<std::size_t>(cost.rows());
  if (cost.cols() != cost.rows()) throw InvalidArgument("solve_assignment: cost matrix must be square");
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based arrays; column 0 is a sentinel.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = match[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(static_cast<Eigen::Index>(i0 - 1), static_cast<Eigen::Index>(j - 1)) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> row_to_col(n);
  for (std::size_t j = 1; j <= n; ++j) row_to_col[match[j] - 1] = j - 1;
  return row_to_col;
}

double empirical_w2(const Mat& p, const Mat& q) {
  if (p.cols() != q.cols()) throw InvalidArgument("empirical_w2: sample counts differ");
  if (p.rows() != q.rows()) throw InvalidArgument("empirical_w2: dimension mismatch");
  if (p.cols() == 0) throw InvalidArgument("empirical_w2: empty sample set");
  if (static_cast<std::size_t>(p.cols()) > kMaxAssignment)
    throw InvalidArgument("empirical_w2: N = " + std::to_string(p.cols()) + " exceeds the exact-assignment limit " +
                          std::to_string(kMaxAssignment));
  const Eigen::Index n = p.cols();
  Mat cost(n, n);
  for (Eigen::Index j = 0; j < n; ++j) cost.col(j) = (p.colwise() - q.col(j)).colwise().squaredNorm().transpose();
  const auto match = solve_assignment(cost);
  // Summing the matched costs in sorted order makes w2(p, q) == w2(q, p) bitwise.
  std::vector<double> matched(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i)
    matched[static_cast<std::size_t>(i)] = cost(i, static_cast<Eigen::Index>(match[static_cast<std::size_t>(i)]));
  std::sort(matched.begin(), matched.end());
  double acc = 0.0;
  for (double c : matched) acc += c;
  return std::sqrt(acc / static_cast<double>(n));
}

std::string metric_report_json(const std::string& metric, double value, std::size_t n,
                               const std::vector<std::size_t>& grid, std::size_t out_of_box) {
  nlohmann::ordered_json j;
  j["metric"] = metric;
  j["value"] = value;
  j["n"] = n;
  j["grid"] = grid;
  j["out_of_box"] = out_of_box;
  return j.dump();
}

}  // namespace proxflow
