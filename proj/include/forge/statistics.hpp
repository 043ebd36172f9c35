#pragma once

#include <optional>
#include <span>
#include <vector>

namespace forge::stats {

/// Median; the mean of the two middle values for even counts. Throws
/// std::invalid_argument on empty input.
double median(std::vector<double> values);

/// Absent when fewer than two points or either variable is constant.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

/// Kendall tau-b with tie correction, O(n log n). Absent when undefined
/// (fewer than two points, or all pairs tied in x or in y).
std::optional<double> kendall_tau_b(std::span<const double> x, std::span<const double> y);

struct Tertiles {
  double edge1 = 0.0;
  double edge2 = 0.0;
  std::vector<int> bins; // 0, 1 or 2, aligned with the input
  int population[3] = {0, 0, 0};
};

/// Equal-population split after a stable sort by (value, index): the first
/// ceil(n/3) go to bin 0, the next ceil((n - ceil(n/3)) / 2) to bin 1.
/// Edges are the largest values in bins 0 and 1. Requires n >= 3.
Tertiles tertile_bins(std::span<const double> values);

/// True when every value's bin is consistent with the edges: bin 0 values are
/// <= edge1, bin 1 within [edge1, edge2], bin 2 >= edge2 (ties at an edge may
/// sit on either side).
bool bins_consistent(std::span<const double> values, std::span<const int> bins, double edge1, double edge2);

} // namespace forge::stats
