#pragma once

#include "nebp/common.hpp"

#include <limits>
#include <vector>

namespace nebp {

template <typename T>
struct Assignment {
  std::vector<Index> row_to_col;  // -1 when unassigned
  T cost = T(0);
};

/// Minimum-cost assignment (Kuhn-Munkres with potentials, O(n^2 m)).
/// Rectangular inputs assign min(n, m) pairs; the scan order is fixed, so
/// equal-cost optima are resolved the same way on every run.
template <typename T, typename Derived>
Assignment<T> hungarian(const Eigen::MatrixBase<Derived>& cost_in) {
  const Index rows = cost_in.rows();
  const Index cols = cost_in.cols();
  Assignment<T> result;
  result.row_to_col.assign(static_cast<std::size_t>(rows), -1);
  if (rows == 0 || cols == 0) return result;
  if (!cost_in.allFinite()) throw ValidationError("hungarian: costs must be finite");

  const bool transposed = rows > cols;
  const Matrix<T> cost = transposed ? Matrix<T>(cost_in.transpose().template cast<T>())
                                    : Matrix<T>(cost_in.template cast<T>());
  const Index n = cost.rows();
  const Index m = cost.cols();
  const T inf = std::numeric_limits<T>::max();

  // 1-based potentials and matching, column 0 is a sentinel.
  std::vector<T> u(static_cast<std::size_t>(n + 1), T(0));
  std::vector<T> v(static_cast<std::size_t>(m + 1), T(0));
  std::vector<Index> match(static_cast<std::size_t>(m + 1), 0);
  std::vector<Index> way(static_cast<std::size_t>(m + 1), 0);

  for (Index i = 1; i <= n; ++i) {
    match[0] = i;
    Index j0 = 0;
    std::vector<T> minv(static_cast<std::size_t>(m + 1), inf);
    std::vector<bool> used(static_cast<std::size_t>(m + 1), false);
    do {
      used[static_cast<std::size_t>(j0)] = true;
      const Index i0 = match[static_cast<std::size_t>(j0)];
      T delta = inf;
      Index j1 = 0;
      for (Index j = 1; j <= m; ++j) {
        const auto sj = static_cast<std::size_t>(j);
        if (used[sj]) continue;
        const T cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[sj];
        if (cur < minv[sj]) {
          minv[sj] = cur;
          way[sj] = j0;
        }
        if (minv[sj] < delta) {
          delta = minv[sj];
          j1 = j;
        }
      }
      for (Index j = 0; j <= m; ++j) {
        const auto sj = static_cast<std::size_t>(j);
        if (used[sj]) {
          u[static_cast<std::size_t>(match[sj])] += delta;
          v[sj] -= delta;
        } else {
          minv[sj] -= delta;
        }
      }
      j0 = j1;
    } while (match[static_cast<std::size_t>(j0)] != 0);
    do {
      const Index j1 = way[static_cast<std::size_t>(j0)];
      match[static_cast<std::size_t>(j0)] = match[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }

  for (Index j = 1; j <= m; ++j) {
    const Index i = match[static_cast<std::size_t>(j)];
    if (i == 0) continue;
    const Index r = transposed ? j - 1 : i - 1;
    const Index c = transposed ? i - 1 : j - 1;
    result.row_to_col[static_cast<std::size_t>(r)] = c;
    result.cost += static_cast<T>(cost_in(r, c));
  }
  return result;
}

}  // namespace nebp
