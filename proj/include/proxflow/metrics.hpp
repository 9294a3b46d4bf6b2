#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "proxflow/linalg.hpp"

namespace proxflow {

/// Histogram grid over an axis-aligned box. An empty box means "hull of the
/// reference samples padded by `pad` on each side".
struct GridSpec {
  std::vector<std::size_t> bins;
  Vec lo;
  Vec hi;
  double pad = 0.05;
};

struct KlResult {
  double value = 0.0;
  /// Samples of either set that fell outside the box and were clamped.
  std::size_t out_of_box = 0;
  /// Bins where h > 0 met an empty reference bin (eps substituted).
  std::size_t eps_bins = 0;
  Vec lo;
  Vec hi;
};

inline constexpr double kKlEps = 1e-8;

/// sum_i h_i log(h_i / g_i) for normalized histograms; h_i = 0 bins add 0,
/// g_i = 0 with h_i > 0 uses g_i = eps.
double kl_from_histograms(const std::vector<double>& h, const std::vector<double>& g, double eps = kKlEps);

/// KL(hist(p) || hist(q)); samples are columns. The default box comes from q.
KlResult empirical_kl(const Mat& p, const Mat& q, const GridSpec& grid);

/// Normalized histogram of `x` on `grid` (box must be set). Returns counts of
/// clamped samples through `out_of_box`.
std::vector<double> histogram(const Mat& x, const GridSpec& grid, std::size_t* out_of_box = nullptr);

inline constexpr std::size_t kMaxAssignment = 2000;

/// Exact minimum-cost perfect matching on a square cost matrix; returns the
/// column assigned to each row.
std::vector<std::size_t> solve_assignment(const Mat& cost);

/// sqrt(min over permutations of (1/N) sum |x_i - y_pi(i)|^2).
double empirical_w2(const Mat& p, const Mat& q);

/// {"metric":..., "value":..., "n":..., "grid":[...], "out_of_box":...}
std::string metric_report_json(const std::string& metric, double value, std::size_t n,
                               const std::vector<std::size_t>& grid, std::size_t out_of_box);

}  // namespace proxflow
