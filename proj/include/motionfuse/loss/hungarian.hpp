#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "motionfuse/core/error.hpp"

namespace mfuse::loss {

// Row-major cost matrix of `rows` predictions by `cols` targets.
struct CostMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> c;

  CostMatrix() = default;
  CostMatrix(int r, int k) : rows(r), cols(k), c(static_cast<std::size_t>(r) * k, 0.0) {}
  double& operator()(int i, int j) { return c[static_cast<std::size_t>(i) * cols + j]; }
  double operator()(int i, int j) const { return c[static_cast<std::size_t>(i) * cols + j]; }
};

struct MatchAssignment {
  std::vector<std::pair<int, int>> pairs;  // (query, target), sorted by query
  double cost = 0.0;
};

namespace detail {

// Shortest augmenting path with potentials; n <= m, O(n^2 m).
inline std::vector<int> assign_rows(const CostMatrix& a) {
  const int n = a.rows, m = a.cols;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= m; ++j)
    if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

}  // namespace detail

// Minimum-cost injective matching of min(rows, cols) pairs.
inline MatchAssignment hungarian_match(const CostMatrix& cost) {
  for (double x : cost.c) check(std::isfinite(x), ErrorCode::kNonFinite, "matching cost is not finite");
  MatchAssignment out;
  if (cost.rows == 0 || cost.cols == 0) return out;
  if (cost.rows <= cost.cols) {
    const auto r = detail::assign_rows(cost);
    for (int i = 0; i < cost.rows; ++i) out.pairs.emplace_back(i, r[i]);
  } else {
    CostMatrix t(cost.cols, cost.rows);
    for (int i = 0; i < cost.rows; ++i)
      for (int j = 0; j < cost.cols; ++j) t(j, i) = cost(i, j);
    const auto r = detail::assign_rows(t);
    for (int j = 0; j < cost.cols; ++j) out.pairs.emplace_back(r[j], j);
    std::sort(out.pairs.begin(), out.pairs.end());
  }
  for (auto [i, j] : out.pairs) out.cost += cost(i, j);
  return out;
}

}  // namespace mfuse::loss
