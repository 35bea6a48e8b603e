#pragma once

#include <algorithm>
#include <vector>

#include "cofact/types.hpp"

namespace cofact {

/// Entrywise max(0, x): projection onto the nonnegative quadrant.
inline Matrix project_nonneg(const Matrix& x) { return x.cwiseMax(0.0); }

/*
 * Proximal operator of i_{>=0}(.) + tau * ||.||_1, entrywise max(0, x - tau).
 * The two proximal maps compose exactly for this pair.
 */
inline Matrix prox_nonneg_l1(const Matrix& x, double tau) {
  return (x.array() - tau).max(0.0).matrix();
}

namespace detail {

/*
 * Euclidean projection of one column onto {u >= 0, sum u = 1}, sort-based:
 * find the largest support size rho with sorted value above the running
 * threshold, then shift and clip. Order-insensitive among tied values.
 */
inline void project_simplex_column(Eigen::Ref<Vector> col,
                                   std::vector<double>& scratch) {
  const Index k = col.size();
  scratch.assign(col.data(), col.data() + k);
  std::sort(scratch.begin(), scratch.end(), std::greater<double>());

  double cumsum = 0.0;
  double theta = scratch[0] - 1.0;
  for (Index j = 0; j < k; ++j) {
    cumsum += scratch[static_cast<std::size_t>(j)];
    const double t = (cumsum - 1.0) / static_cast<double>(j + 1);
    if (scratch[static_cast<std::size_t>(j)] > t)
      theta = t;
    else
      break;
  }
  for (Index i = 0; i < k; ++i) col[i] = std::max(0.0, col[i] - theta);
}

}  // namespace detail

/*
 * Projects every column of x onto the probability simplex. Columns are
 * independent; the computation is deterministic and rejects non-finite
 * input (the projection would be meaningless there).
 */
inline Matrix project_simplex_columns(const Matrix& x) {
  if (x.rows() < 1)
    throw Error(ErrorCode::DimensionMismatch, "simplex projection needs k >= 1");
  if (!x.allFinite())
    throw Error(ErrorCode::NonFiniteEntry,
                "non-finite entry passed to simplex projection");
  Matrix out = x;
  std::vector<double> scratch;
  for (Index j = 0; j < out.cols(); ++j)
    detail::project_simplex_column(out.col(j), scratch);
  return out;
}

}  // namespace cofact
