#pragma once

#include "cofact/objective.hpp"
#include "cofact/prox.hpp"
#include "cofact/rng.hpp"
#include "cofact/types.hpp"
#include "cofact/vtv.hpp"

namespace cofact::testing {

/// Random strictly positive dictionary, random image, labels covering every
/// class, data-driven edge weights. Dimensions follow (L, M*N, R, K, C).
inline Problem make_problem(Index L, Index M, Index N, Index R, Index K,
                            Index C, Variant variant, std::uint64_t seed) {
  Rng rng(seed);
  Problem pb;
  const Index P = M * N;
  pb.observations.resize(L, P);
  for (Index j = 0; j < P; ++j)
    for (Index i = 0; i < L; ++i) pb.observations(i, j) = rng.uniform(0.0, 1.0);
  pb.dictionary.resize(L, R);
  for (Index j = 0; j < R; ++j)
    for (Index i = 0; i < L; ++i) pb.dictionary(i, j) = rng.uniform(0.1, 1.0);

  pb.labels.assign(static_cast<std::size_t>(P), kUnlabeled);
  for (Index c = 0; c < C; ++c) pb.labels[static_cast<std::size_t>(c)] = static_cast<int>(c);
  for (Index p = C; p < P; ++p)
    if (rng.uniform() < 0.3)
      pb.labels[static_cast<std::size_t>(p)] =
          static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(C)));

  pb.num_classes = static_cast<int>(C);
  pb.num_clusters = static_cast<int>(K);
  pb.variant = variant;

  pb.hyper.lambda0 = 1.0;
  pb.hyper.lambda1 = 1.0;
  pb.hyper.lambda2 = 1.0;
  pb.hyper.lambda_h = 0.1;
  pb.hyper.lambda_q = variant == Variant::CrossEntropy ? 0.05 : 0.0;
  pb.hyper.lambda_c = 0.01;
  pb.hyper.epsilon_tv = 1e-2;
  pb.hyper.sigma_beta = 0.01;
  pb.hyper.alpha = 2.0;
  pb.hyper.seed = seed;

  pb.grid = compute_edge_weights(pb.observations, SpatialGrid(M, N),
                                 pb.hyper.sigma_beta);
  return pb;
}

inline Matrix random_matrix(Rng& rng, Index rows, Index cols, double lo,
                            double hi) {
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = rng.uniform(lo, hi);
  return m;
}

inline State make_state(const Problem& pb, std::uint64_t seed) {
  Rng rng(seed ^ 0x5747e5eedULL);
  const Index P = pb.num_pixels();
  const Index R = pb.num_atoms();
  const Index K = pb.num_clusters;
  const Index C = pb.num_classes;
  State s;
  s.H = random_matrix(rng, R, P, 0.0, 1.0);
  s.B = random_matrix(rng, R, K, 0.0, 1.0);
  s.Z = project_simplex_columns(random_matrix(rng, K, P, -0.5, 1.5));
  s.Q = random_matrix(rng, C, K, -1.0, 1.0);
  s.C = initial_attribution(pb);
  const Matrix CU = project_simplex_columns(random_matrix(rng, C, P, -0.5, 1.5));
  for (Index p = 0; p < P; ++p)
    if (pb.labels[static_cast<std::size_t>(p)] == kUnlabeled)
      s.C.col(p) = CU.col(p);
  return s;
}

/// Central finite differences of the smooth objective part with respect to
/// one block, entry by entry.
template <typename Eval>
inline double fd_max_rel_error(const Matrix& analytic, Matrix block,
                               Eval&& eval_at, double step = 1e-6) {
  Matrix fd(analytic.rows(), analytic.cols());
  for (Index j = 0; j < block.cols(); ++j) {
    for (Index i = 0; i < block.rows(); ++i) {
      const double keep = block(i, j);
      block(i, j) = keep + step;
      const double up = eval_at(block);
      block(i, j) = keep - step;
      const double down = eval_at(block);
      block(i, j) = keep;
      fd(i, j) = (up - down) / (2.0 * step);
    }
  }
  const double denom = std::max(fd.norm(), 1e-12);
  return (analytic - fd).norm() / denom;
}

}  // namespace cofact::testing
