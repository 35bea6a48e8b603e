#pragma once

#include <cmath>
#include <vector>

#include "cofact/prox.hpp"
#include "cofact/rng.hpp"
#include "cofact/types.hpp"
#include "cofact/vtv.hpp"

namespace cofact {

/*
 * Term-by-term value of the cofactorization objective. For the quadratic
 * variant,
 *
 *   lambda0/2 ||Y - WH||_F^2 + lambda_h ||H||_1 + lambda2/2 ||H - BZ||_F^2
 *   + lambda1/2 ||(C - QZ) D||_F^2 + lambda_c ||C||_vTV,
 *
 * and for the cross-entropy variant the classification term is replaced by
 *
 *   -lambda1/2 sum_p d_p^2 sum_i c_{i,p} log sigmoid(q_i . z_p)
 *
 * plus the weight decay lambda_q/2 ||Q||_F^2.
 */
struct ObjectiveBreakdown {
  double term_repr = 0.0;
  double term_l1 = 0.0;
  double term_clust = 0.0;
  double term_classif = 0.0;
  double term_weight_decay = 0.0;
  double term_vtv = 0.0;
  double total = 0.0;

  [[nodiscard]] double term_penalties() const {
    return term_l1 + term_weight_decay;
  }
  [[nodiscard]] double smooth_part() const { return total - term_l1; }
};

enum class Block { H, B, Z, Q, CU };

namespace detail {

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// log(sigmoid(x)) without overflow at saturated logits.
inline double log_sigmoid(double x) {
  return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

/*
 * Largest eigenvalue of a symmetric PSD matrix by power iteration with a
 * deterministic seeded start vector (relative tolerance 1e-8).
 */
inline double spectral_norm_sym(const Matrix& A) {
  const Index n = A.rows();
  if (n == 0) return 0.0;
  Rng rng(0x9e3779b97f4a7c15ULL ^ static_cast<std::uint64_t>(n));
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = rng.uniform(-1.0, 1.0);
  const double vn = v.norm();
  if (vn == 0.0) v.setConstant(1.0 / std::sqrt(static_cast<double>(n)));
  else v /= vn;

  double prev = 0.0;
  for (int iter = 0; iter < 1000; ++iter) {
    const Vector w = A * v;
    const double est = v.dot(w);
    const double wn = w.norm();
    if (wn == 0.0) return 0.0;
    v = w / wn;
    if (iter > 0 && std::abs(est - prev) <= 1e-8 * std::max(std::abs(est), 1e-300))
      return std::max(est, 0.0);
    prev = est;
  }
  return std::max(prev, 0.0);
}

/// Classification residual weighted by D, quadratic variant.
inline double quadratic_classif(const Matrix& C, const Matrix& QZ,
                                const Vector& d) {
  double acc = 0.0;
  for (Index p = 0; p < C.cols(); ++p)
    acc += d[p] * d[p] * (C.col(p) - QZ.col(p)).squaredNorm();
  return acc;
}

inline double cross_entropy_classif(const Matrix& C, const Matrix& S,
                                    const Vector& d) {
  double acc = 0.0;
  for (Index p = 0; p < C.cols(); ++p) {
    const double dp2 = d[p] * d[p];
    for (Index i = 0; i < C.rows(); ++i) {
      const double c = C(i, p);
      if (c != 0.0) acc += dp2 * c * log_sigmoid(S(i, p));
    }
  }
  return -acc;
}

/// E_{i,p} = -d_p^2 c_{i,p} sigmoid(-s_{i,p}); d(CE term)/dS = (lambda1/2) E.
inline Matrix cross_entropy_slope(const Matrix& C, const Matrix& S,
                                  const Vector& d) {
  Matrix E(C.rows(), C.cols());
  for (Index p = 0; p < C.cols(); ++p) {
    const double dp2 = d[p] * d[p];
    for (Index i = 0; i < C.rows(); ++i)
      E(i, p) = -dp2 * C(i, p) * sigmoid(-S(i, p));
  }
  return E;
}

}  // namespace detail

/*
 * Evaluates every term on raw block matrices. No feasibility requirement:
 * the smooth coupling is defined on all of R^{...}, which is what the
 * finite-difference checks need.
 */
inline ObjectiveBreakdown evaluate_terms(const Problem& pb, const Matrix& H,
                                         const Matrix& B, const Matrix& Z,
                                         const Matrix& Q, const Matrix& C,
                                         const ClassWeights& weights) {
  const Hyperparameters& hy = pb.hyper;
  ObjectiveBreakdown out;

  if (hy.lambda0 != 0.0)
    out.term_repr =
        0.5 * hy.lambda0 * (pb.observations - pb.dictionary * H).squaredNorm();
  if (hy.lambda_h != 0.0) out.term_l1 = hy.lambda_h * H.array().abs().sum();
  if (hy.lambda2 != 0.0)
    out.term_clust = 0.5 * hy.lambda2 * (H - B * Z).squaredNorm();

  if (hy.lambda1 != 0.0) {
    const Matrix S = Q * Z;
    if (pb.variant == Variant::Quadratic)
      out.term_classif =
          0.5 * hy.lambda1 * detail::quadratic_classif(C, S, weights.d);
    else
      out.term_classif =
          0.5 * hy.lambda1 * detail::cross_entropy_classif(C, S, weights.d);
  }
  if (pb.variant == Variant::CrossEntropy && hy.lambda_q != 0.0)
    out.term_weight_decay = 0.5 * hy.lambda_q * Q.squaredNorm();
  if (hy.lambda_c != 0.0)
    out.term_vtv = hy.lambda_c * vtv_value(C, pb.grid, hy.epsilon_tv);

  out.total = out.term_repr + out.term_l1 + out.term_clust + out.term_classif +
              out.term_weight_decay + out.term_vtv;
  return out;
}

inline ObjectiveBreakdown objective_value(const Problem& pb, const State& s,
                                          const ClassWeights& weights) {
  std::string why;
  if (!state_is_feasible(s, pb, &why))
    throw Error(ErrorCode::InfeasibleState, why);
  return evaluate_terms(pb, s.H, s.B, s.Z, s.Q, s.C, weights);
}

namespace detail {

inline Matrix grad_H_with(const Problem& pb, const Matrix& WtW,
                          const Matrix& WtY, const State& s) {
  const Hyperparameters& hy = pb.hyper;
  Matrix g = Matrix::Zero(s.H.rows(), s.H.cols());
  if (hy.lambda0 != 0.0) g += hy.lambda0 * (WtW * s.H - WtY);
  if (hy.lambda2 != 0.0) g += hy.lambda2 * (s.H - s.B * s.Z);
  return g;
}

}  // namespace detail

/// d/dH of the smooth coupling: lambda0 (W'W H - W'Y) + lambda2 (H - BZ).
inline Matrix grad_H(const Problem& pb, const State& s) {
  const Matrix WtW = pb.dictionary.transpose() * pb.dictionary;
  const Matrix WtY = pb.dictionary.transpose() * pb.observations;
  return detail::grad_H_with(pb, WtW, WtY, s);
}

/// d/dB: lambda2 (B ZZ' - H Z').
inline Matrix grad_B(const Problem& pb, const State& s) {
  if (pb.hyper.lambda2 == 0.0) return Matrix::Zero(s.B.rows(), s.B.cols());
  return pb.hyper.lambda2 * (s.B * (s.Z * s.Z.transpose()) -
                             s.H * s.Z.transpose());
}

inline Matrix grad_Z(const Problem& pb, const State& s,
                     const ClassWeights& weights) {
  const Hyperparameters& hy = pb.hyper;
  Matrix g = Matrix::Zero(s.Z.rows(), s.Z.cols());
  if (hy.lambda2 != 0.0)
    g += hy.lambda2 * (s.B.transpose() * (s.B * s.Z) -
                       s.B.transpose() * s.H);
  if (hy.lambda1 != 0.0) {
    const Matrix S = s.Q * s.Z;
    if (pb.variant == Variant::Quadratic) {
      Matrix R = S - s.C;  // residual, scaled column-wise by d_p^2
      for (Index p = 0; p < R.cols(); ++p)
        R.col(p) *= weights.d[p] * weights.d[p];
      g += hy.lambda1 * (s.Q.transpose() * R);
    } else {
      const Matrix E = detail::cross_entropy_slope(s.C, S, weights.d);
      g += 0.5 * hy.lambda1 * (s.Q.transpose() * E);
    }
  }
  return g;
}

inline Matrix grad_Q(const Problem& pb, const State& s,
                     const ClassWeights& weights) {
  const Hyperparameters& hy = pb.hyper;
  Matrix g = Matrix::Zero(s.Q.rows(), s.Q.cols());
  if (hy.lambda1 != 0.0) {
    const Matrix S = s.Q * s.Z;
    if (pb.variant == Variant::Quadratic) {
      Matrix R = S - s.C;
      for (Index p = 0; p < R.cols(); ++p)
        R.col(p) *= weights.d[p] * weights.d[p];
      g += hy.lambda1 * (R * s.Z.transpose());
    } else {
      const Matrix E = detail::cross_entropy_slope(s.C, S, weights.d);
      g += 0.5 * hy.lambda1 * (E * s.Z.transpose());
    }
  }
  if (pb.variant == Variant::CrossEntropy && hy.lambda_q != 0.0)
    g += hy.lambda_q * s.Q;
  return g;
}

/*
 * Gradient with respect to the unlabeled attribution columns only; column
 * order follows Problem::unlabeled_indices().
 */
inline Matrix grad_CU(const Problem& pb, const State& s,
                      const ClassWeights& weights) {
  const Hyperparameters& hy = pb.hyper;
  const auto unlabeled = pb.unlabeled_indices();
  Matrix g = Matrix::Zero(pb.num_classes, static_cast<Index>(unlabeled.size()));

  Matrix vg;
  if (hy.lambda_c != 0.0) vg = vtv_grad(s.C, pb.grid, hy.epsilon_tv);
  Matrix S;
  if (hy.lambda1 != 0.0) S = s.Q * s.Z;

  for (std::size_t j = 0; j < unlabeled.size(); ++j) {
    const Index p = unlabeled[j];
    const double dp2 = weights.d[p] * weights.d[p];
    Vector col = Vector::Zero(pb.num_classes);
    if (hy.lambda_c != 0.0) col += hy.lambda_c * vg.col(p);
    if (hy.lambda1 != 0.0) {
      if (pb.variant == Variant::Quadratic) {
        col += hy.lambda1 * dp2 * (s.C.col(p) - S.col(p));
      } else {
        for (Index i = 0; i < pb.num_classes; ++i)
          col[i] += -0.5 * hy.lambda1 * dp2 * detail::log_sigmoid(S(i, p));
      }
    }
    g.col(static_cast<Index>(j)) = col;
  }
  return g;
}

/*
 * Per-block Lipschitz constants of the partial gradients:
 *
 *   L_H  = ||lambda0 W'W + lambda2 I||
 *   L_B  = ||lambda2 Z Z'||
 *   L_Z  = ||lambda2 B'B + lambda1 max_p d_p^2 Q'Q||            (quadratic)
 *          lambda1 sum_p d_p^2 sum_i c_{i,p} ||q_i||^2
 *            + ||lambda2 B'B||                                  (cross-entropy)
 *   L_Q  = ||lambda1 Z D^2 Z'||                                 (quadratic)
 *          lambda1 sum_p d_p^2 + lambda_q                       (cross-entropy)
 *   L_CU = lambda1 max_{p in U} d_p^2
 *            + lambda_c sqrt(8) max beta / eps                  (quadratic)
 *          lambda_c sqrt(8) max beta / eps                      (cross-entropy)
 *
 * A floor of 1e-12 keeps the step size finite when a block drops out of the
 * objective entirely.
 */
inline double lipschitz_constant(const Problem& pb, const State& s, Block block,
                                 const ClassWeights& weights) {
  const Hyperparameters& hy = pb.hyper;
  const Vector d2 = weights.d_squared();
  double value = 0.0;

  switch (block) {
    case Block::H: {
      const Index R = pb.num_atoms();
      Matrix A = hy.lambda0 * (pb.dictionary.transpose() * pb.dictionary);
      A += hy.lambda2 * Matrix::Identity(R, R);
      value = detail::spectral_norm_sym(A);
      break;
    }
    case Block::B:
      value = hy.lambda2 == 0.0
                  ? 0.0
                  : hy.lambda2 *
                        detail::spectral_norm_sym(s.Z * s.Z.transpose());
      break;
    case Block::Z: {
      if (pb.variant == Variant::Quadratic) {
        Matrix A = hy.lambda2 * (s.B.transpose() * s.B);
        if (hy.lambda1 != 0.0)
          A += hy.lambda1 * d2.maxCoeff() * (s.Q.transpose() * s.Q);
        value = detail::spectral_norm_sym(A);
      } else {
        double ce = 0.0;
        if (hy.lambda1 != 0.0) {
          Vector qrow2(s.Q.rows());
          for (Index i = 0; i < s.Q.rows(); ++i)
            qrow2[i] = s.Q.row(i).squaredNorm();
          for (Index p = 0; p < s.C.cols(); ++p)
            ce += d2[p] * s.C.col(p).dot(qrow2);
        }
        value = hy.lambda1 * ce;
        if (hy.lambda2 != 0.0)
          value += hy.lambda2 *
                   detail::spectral_norm_sym(s.B.transpose() * s.B);
      }
      break;
    }
    case Block::Q: {
      if (pb.variant == Variant::Quadratic) {
        if (hy.lambda1 != 0.0)
          value = hy.lambda1 * detail::spectral_norm_sym(
                                   s.Z * d2.asDiagonal() * s.Z.transpose());
      } else {
        value = hy.lambda1 * d2.sum() + hy.lambda_q;
      }
      break;
    }
    case Block::CU: {
      if (hy.lambda_c != 0.0)
        value = hy.lambda_c * std::sqrt(8.0) * pb.grid.beta.maxCoeff() /
                hy.epsilon_tv;
      if (pb.variant == Variant::Quadratic && hy.lambda1 != 0.0) {
        double dmax = 0.0;
        for (Index p = 0; p < pb.num_pixels(); ++p)
          if (pb.labels[static_cast<std::size_t>(p)] == kUnlabeled)
            dmax = std::max(dmax, d2[p]);
        value += hy.lambda1 * dmax;
      }
      break;
    }
  }
  return std::max(value, 1e-12);
}

/// Per-pixel argmax over the attribution rows; ties go to the smaller class.
inline std::vector<int> predict_classes(const State& s) {
  std::vector<int> out(static_cast<std::size_t>(s.C.cols()));
  for (Index p = 0; p < s.C.cols(); ++p) {
    int best = 0;
    for (Index i = 1; i < s.C.rows(); ++i)
      if (s.C(i, p) > s.C(best, p)) best = static_cast<int>(i);
    out[static_cast<std::size_t>(p)] = best;
  }
  return out;
}

}  // namespace cofact
