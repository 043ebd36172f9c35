#include "forge/statistics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <utility>

namespace forge::stats {

double median(std::vector<double> values) {
  if (values.empty()) {
    throw std::invalid_argument("median of empty set");
  }
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double hi = values[mid];
  if (values.size() % 2 == 1) {
    return hi;
  }
  const double lo = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return (lo + hi) / 2.0;
}

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw std::invalid_argument("pearson: length mismatch");
  }
  const std::size_t n = x.size();
  if (n < 2) {
    return std::nullopt;
  }
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    return std::nullopt;
  }
  return sxy / std::sqrt(sxx * syy);
}

namespace {

// Number of tied pairs within runs of equal values in a sorted sequence.
template <typename Eq> long long tied_pairs(std::size_t n, Eq eq) {
  long long total = 0;
  long long run = 1;
  for (std::size_t i = 1; i < n; ++i) {
    if (eq(i - 1, i)) {
      ++run;
    } else {
      total += run * (run - 1) / 2;
      run = 1;
    }
  }
  return total + run * (run - 1) / 2;
}

// Bottom-up merge sort that counts inversions (strictly greater before smaller).
long long sort_count_swaps(std::vector<double> &v) {
  const std::size_t n = v.size();
  std::vector<double> buf(n);
  long long swaps = 0;
  for (std::size_t width = 1; width < n; width *= 2) {
    for (std::size_t lo = 0; lo < n; lo += 2 * width) {
      const std::size_t mid = std::min(lo + width, n);
      const std::size_t hi = std::min(lo + 2 * width, n);
      std::size_t i = lo, j = mid, k = lo;
      while (i < mid && j < hi) {
        if (v[j] < v[i]) {
          swaps += static_cast<long long>(mid - i);
          buf[k++] = v[j++];
        } else {
          buf[k++] = v[i++];
        }
      }
      while (i < mid) {
        buf[k++] = v[i++];
      }
      while (j < hi) {
        buf[k++] = v[j++];
      }
    }
    std::swap(v, buf);
  }
  return swaps;
}

} // namespace

std::optional<double> kendall_tau_b(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw std::invalid_argument("kendall: length mismatch");
  }
  const std::size_t n = x.size();
  if (n < 2) {
    return std::nullopt;
  }
  std::vector<std::pair<double, double>> pts(n);
  for (std::size_t i = 0; i < n; ++i) {
    pts[i] = {x[i], y[i]};
  }
  std::sort(pts.begin(), pts.end());
  const long long n0 = static_cast<long long>(n) * static_cast<long long>(n - 1) / 2;
  const long long tx = tied_pairs(n, [&](std::size_t a, std::size_t b) { return pts[a].first == pts[b].first; });
  const long long txy = tied_pairs(n, [&](std::size_t a, std::size_t b) { return pts[a] == pts[b]; });
  std::vector<double> ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    ys[i] = pts[i].second;
  }
  const long long swaps = sort_count_swaps(ys);
  const long long ty = tied_pairs(n, [&](std::size_t a, std::size_t b) { return ys[a] == ys[b]; });
  if (n0 == tx || n0 == ty) {
    return std::nullopt;
  }
  // concordant - discordant, counted over pairs untied in both x and y
  const long long s = n0 - tx - ty + txy - 2 * swaps;
  return static_cast<double>(s) / std::sqrt(static_cast<double>(n0 - tx) * static_cast<double>(n0 - ty));
}

Tertiles tertile_bins(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n < 3) {
    throw std::invalid_argument("tertile_bins needs at least 3 values, got " + std::to_string(n));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  const std::size_t b0 = (n + 2) / 3;
  const std::size_t b1 = (n - b0 + 1) / 2;
  Tertiles t;
  t.bins.assign(n, 2);
  for (std::size_t r = 0; r < n; ++r) {
    const int bin = r < b0 ? 0 : (r < b0 + b1 ? 1 : 2);
    t.bins[order[r]] = bin;
    ++t.population[bin];
  }
  t.edge1 = values[order[b0 - 1]];
  t.edge2 = values[order[b0 + b1 - 1]];
  return t;
}

bool bins_consistent(std::span<const double> values, std::span<const int> bins, double edge1, double edge2) {
  if (values.size() != bins.size() || edge1 > edge2) {
    return false;
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = values[i];
    switch (bins[i]) {
    case 0:
      if (v > edge1) {
        return false;
      }
      break;
    case 1:
      if (v < edge1 || v > edge2) {
        return false;
      }
      break;
    case 2:
      if (v < edge2) {
        return false;
      }
      break;
    default:
      return false;
    }
  }
  return true;
}

} // namespace forge::stats
