#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "cofact/rng.hpp"
#include "cofact/types.hpp"

namespace cofact {

struct KmeansConfig {
  int restarts = 5;
  int max_iters = 100;
  std::uint64_t seed = 0;
};

struct KmeansResult {
  Matrix centroids;             // d x K
  std::vector<int> assignments; // length n
  double sse = 0.0;
  std::vector<double> sse_trace;  // per Lloyd iteration of the winning restart
};

/// Angle in [0, pi] between two spectra; scale invariant.
inline double spectral_angle(const Vector& a, const Vector& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0)
    throw Error(ErrorCode::ZeroVector, "spectral angle of a zero vector");
  const double c = std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
  return std::acos(c);
}

namespace detail {

inline double sse_of(const Matrix& points, const Matrix& centroids,
                     const std::vector<int>& assign) {
  double acc = 0.0;
  for (Index p = 0; p < points.cols(); ++p)
    acc += (points.col(p) - centroids.col(assign[static_cast<std::size_t>(p)]))
               .squaredNorm();
  return acc;
}

inline void assign_nearest(const Matrix& points, const Matrix& centroids,
                           std::vector<int>& assign) {
  for (Index p = 0; p < points.cols(); ++p) {
    int best = 0;
    double best_d = (points.col(p) - centroids.col(0)).squaredNorm();
    for (Index k = 1; k < centroids.cols(); ++k) {
      const double d = (points.col(p) - centroids.col(k)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(k);
      }
    }
    assign[static_cast<std::size_t>(p)] = best;
  }
}

inline Matrix seed_plusplus(const Matrix& points, Index K, Rng& rng) {
  const Index n = points.cols();
  Matrix centroids(points.rows(), K);
  centroids.col(0) = points.col(static_cast<Index>(rng.uniform_index(
      static_cast<std::uint64_t>(n))));
  Vector dist2(n);
  for (Index p = 0; p < n; ++p)
    dist2[p] = (points.col(p) - centroids.col(0)).squaredNorm();
  for (Index k = 1; k < K; ++k) {
    const double total = dist2.sum();
    Index chosen;
    if (total <= 0.0) {
      chosen = static_cast<Index>(rng.uniform_index(static_cast<std::uint64_t>(n)));
    } else {
      const double r = rng.uniform() * total;
      double cum = 0.0;
      chosen = n - 1;
      for (Index p = 0; p < n; ++p) {
        cum += dist2[p];
        if (r < cum) {
          chosen = p;
          break;
        }
      }
    }
    centroids.col(k) = points.col(chosen);
    for (Index p = 0; p < n; ++p)
      dist2[p] = std::min(dist2[p],
                          (points.col(p) - centroids.col(k)).squaredNorm());
  }
  return centroids;
}

}  // namespace detail

/*
 * Lloyd iterations from k-means++ seeding, best of `restarts` runs by
 * within-cluster sum of squares (ties keep the earlier restart). A cluster
 * that empties is re-seeded with the point farthest from its current
 * centroid, which cannot increase the SSE.
 */
inline KmeansResult kmeans(const Matrix& points, Index K,
                           const KmeansConfig& cfg = {}) {
  const Index n = points.cols();
  if (n < K)
    throw Error(ErrorCode::TooFewPoints,
                "k-means needs at least K points");

  KmeansResult best;
  best.sse = std::numeric_limits<double>::infinity();

  for (int restart = 0; restart < std::max(1, cfg.restarts); ++restart) {
    Rng rng(cfg.seed * 0x51ed2701ULL + static_cast<std::uint64_t>(restart));
    Matrix centroids = detail::seed_plusplus(points, K, rng);
    std::vector<int> assign(static_cast<std::size_t>(n), 0);
    std::vector<int> prev_assign;
    std::vector<double> trace;

    for (int iter = 0; iter < cfg.max_iters; ++iter) {
      detail::assign_nearest(points, centroids, assign);

      std::vector<Index> counts(static_cast<std::size_t>(K), 0);
      for (int a : assign) ++counts[static_cast<std::size_t>(a)];
      for (Index k = 0; k < K; ++k) {
        if (counts[static_cast<std::size_t>(k)] > 0) continue;
        // farthest point from its own centroid becomes the new singleton
        Index far_p = 0;
        double far_d = -1.0;
        for (Index p = 0; p < n; ++p) {
          const int a = assign[static_cast<std::size_t>(p)];
          if (counts[static_cast<std::size_t>(a)] <= 1) continue;
          const double d = (points.col(p) - centroids.col(a)).squaredNorm();
          if (d > far_d) {
            far_d = d;
            far_p = p;
          }
        }
        --counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(far_p)])];
        assign[static_cast<std::size_t>(far_p)] = static_cast<int>(k);
        counts[static_cast<std::size_t>(k)] = 1;
      }

      centroids.setZero();
      for (Index p = 0; p < n; ++p)
        centroids.col(assign[static_cast<std::size_t>(p)]) += points.col(p);
      for (Index k = 0; k < K; ++k)
        centroids.col(k) /= static_cast<double>(counts[static_cast<std::size_t>(k)]);

      trace.push_back(detail::sse_of(points, centroids, assign));
      if (assign == prev_assign) break;
      prev_assign = assign;
    }

    const double sse = detail::sse_of(points, centroids, assign);
    if (sse < best.sse) {
      best.centroids = std::move(centroids);
      best.assignments = std::move(assign);
      best.sse = sse;
      best.sse_trace = std::move(trace);
    }
  }
  return best;
}

}  // namespace cofact
