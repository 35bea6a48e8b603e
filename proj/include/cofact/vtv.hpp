#pragma once

#include <cmath>

#include "cofact/types.hpp"

namespace cofact {

/*
 * Smoothed weighted vectorial total variation of a C x P field over the
 * pixel lattice:
 *
 *   ||X||_vTV = sum_{m,n} beta_{m,n} sqrt(||x_(m+1,n) - x_(m,n)||^2
 *                                       + ||x_(m,n+1) - x_(m,n)||^2 + eps)
 *
 * Forward differences past the last row/column are zero (replicate
 * boundary), so a constant field is a stationary point with value
 * sqrt(eps) * sum beta.
 */
inline double vtv_value(const Matrix& X, const SpatialGrid& grid, double eps) {
  if (!(eps > 0.0) && eps != 0.0)
    throw Error(ErrorCode::InvalidHyperparameter, "vTV smoothing must be >= 0");
  const Index M = grid.rows;
  const Index N = grid.cols;
  if (X.cols() != M * N || grid.beta.rows() != M || grid.beta.cols() != N)
    throw Error(ErrorCode::DimensionMismatch,
                "field width differs from grid pixel count");

  double total = 0.0;
  for (Index m = 0; m < M; ++m) {
    for (Index n = 0; n < N; ++n) {
      const Index p = grid.pixel(m, n);
      double sq = eps;
      if (m + 1 < M) sq += (X.col(p + N) - X.col(p)).squaredNorm();
      if (n + 1 < N) sq += (X.col(p + 1) - X.col(p)).squaredNorm();
      total += grid.beta(m, n) * std::sqrt(sq);
    }
  }
  return total;
}

/*
 * Exact gradient of vtv_value with respect to every entry of X. Callers
 * restrict to unlabeled columns themselves; labeled-column entries are
 * computed all the same.
 */
inline Matrix vtv_grad(const Matrix& X, const SpatialGrid& grid, double eps) {
  if (!(eps > 0.0))
    throw Error(ErrorCode::InvalidHyperparameter, "vTV smoothing must be > 0");
  const Index M = grid.rows;
  const Index N = grid.cols;
  if (X.cols() != M * N || grid.beta.rows() != M || grid.beta.cols() != N)
    throw Error(ErrorCode::DimensionMismatch,
                "field width differs from grid pixel count");

  Matrix grad = Matrix::Zero(X.rows(), X.cols());
  for (Index m = 0; m < M; ++m) {
    for (Index n = 0; n < N; ++n) {
      const Index p = grid.pixel(m, n);
      const bool has_down = m + 1 < M;
      const bool has_right = n + 1 < N;
      double sq = eps;
      if (has_down) sq += (X.col(p + N) - X.col(p)).squaredNorm();
      if (has_right) sq += (X.col(p + 1) - X.col(p)).squaredNorm();
      const double scale = grid.beta(m, n) / std::sqrt(sq);
      if (has_down) {
        const Vector dh = X.col(p + N) - X.col(p);
        grad.col(p) -= scale * dh;
        grad.col(p + N) += scale * dh;
      }
      if (has_right) {
        const Vector dv = X.col(p + 1) - X.col(p);
        grad.col(p) -= scale * dv;
        grad.col(p + 1) += scale * dv;
      }
    }
  }
  return grad;
}

/*
 * Data-driven vTV weights from a virtually observed panchromatic image
 * (per-pixel band average):
 *
 *   beta~_{m,n} = 1 / (||grad y_PAN|_{m,n}||_2 + sigma),  beta = beta~ / sum.
 *
 * Flat regions get large weights, edges small ones, so class boundaries are
 * cheapest where the image itself varies.
 */
inline SpatialGrid compute_edge_weights(const Matrix& Y, const SpatialGrid& grid,
                                        double sigma) {
  if (!(sigma > 0.0))
    throw Error(ErrorCode::InvalidHyperparameter, "sigma must be > 0");
  const Index M = grid.rows;
  const Index N = grid.cols;
  if (Y.cols() != M * N)
    throw Error(ErrorCode::DimensionMismatch,
                "image width differs from grid pixel count");

  const Eigen::RowVectorXd pan = Y.colwise().mean();
  SpatialGrid out = grid;
  out.beta.resize(M, N);
  for (Index m = 0; m < M; ++m) {
    for (Index n = 0; n < N; ++n) {
      const Index p = grid.pixel(m, n);
      const double dh = (m + 1 < M) ? pan[p + N] - pan[p] : 0.0;
      const double dv = (n + 1 < N) ? pan[p + 1] - pan[p] : 0.0;
      out.beta(m, n) = 1.0 / (std::sqrt(dh * dh + dv * dv) + sigma);
    }
  }
  out.beta /= out.beta.sum();
  return out;
}

}  // namespace cofact
