#pragma once

#include <chrono>
#include <cmath>
#include <limits>
#include <vector>

#include "cofact/objective.hpp"
#include "cofact/prox.hpp"
#include "cofact/types.hpp"

namespace cofact {

struct SolverConfig {
  double alpha = 2.0;      // step inflation, > 1
  double stop_tol = 1e-4;  // on the normalized objective decrease
  int max_iters = 5000;
  int monitor_every = 1;
  bool backtracking_enabled = true;
};

struct IterationRecord {
  int iteration = 0;
  ObjectiveBreakdown objective;
  double rel_change = std::numeric_limits<double>::infinity();
};

enum class StopReason { Converged, MaxIters };

struct SolveReport {
  std::vector<IterationRecord> records;
  StopReason stop_reason = StopReason::MaxIters;
  double wall_time_seconds = 0.0;
  bool nonfinite_abort = false;    // solver hit a non-finite iterate and bailed
  long backtrack_halvings = 0;     // step halvings over the whole run
};

namespace detail {

/// Quantities that stay fixed while the blocks evolve.
struct SolveScratch {
  Matrix WtW;
  Matrix WtY;
  double L_H = 0.0;
  double L_CU = 0.0;
  std::vector<Index> unlabeled;

  SolveScratch(const Problem& pb, const State& s, const ClassWeights& w)
      : WtW(pb.dictionary.transpose() * pb.dictionary),
        WtY(pb.dictionary.transpose() * pb.observations),
        L_H(lipschitz_constant(pb, s, Block::H, w)),
        L_CU(lipschitz_constant(pb, s, Block::CU, w)),
        unlabeled(pb.unlabeled_indices()) {}
};

inline void require_finite_iterate(const Matrix& m) {
  if (!m.allFinite())
    throw Error(ErrorCode::NonFiniteIterate,
                "non-finite iterate inside PALM step");
}

/*
 * One Gauss-Seidel sweep of Algorithm-style PALM updates in the order
 * H, B, Z, Q, C_U. Each block takes a gradient step of 1/(alpha L_block)
 * followed by its proximal map, evaluated at the most recent values of all
 * other blocks. If a block update raises the total objective by more than
 * 1e-10 the step is halved (at most 20 times) and finally skipped, which
 * protects the monotonicity contract against an optimistic Lipschitz bound.
 */
inline void palm_sweep(const Problem& pb, const ClassWeights& weights,
                       const SolverConfig& cfg, const SolveScratch& scratch,
                       State& s, ObjectiveBreakdown& cur, long& halvings) {
  const Hyperparameters& hy = pb.hyper;

  // --- H ---------------------------------------------------------------
  {
    const Matrix g = grad_H_with(pb, scratch.WtW, scratch.WtY, s);
    double t = 1.0 / (cfg.alpha * scratch.L_H);
    for (int attempt = 0;; ++attempt) {
      Matrix moved = s.H - t * g;
      require_finite_iterate(moved);
      Matrix cand = prox_nonneg_l1(moved, hy.lambda_h * t);
      ObjectiveBreakdown nb = cur;
      nb.term_repr =
          hy.lambda0 == 0.0
              ? 0.0
              : 0.5 * hy.lambda0 *
                    (pb.observations - pb.dictionary * cand).squaredNorm();
      nb.term_l1 =
          hy.lambda_h == 0.0 ? 0.0 : hy.lambda_h * cand.array().abs().sum();
      nb.term_clust = hy.lambda2 == 0.0
                          ? 0.0
                          : 0.5 * hy.lambda2 * (cand - s.B * s.Z).squaredNorm();
      nb.total = nb.term_repr + nb.term_l1 + nb.term_clust + nb.term_classif +
                 nb.term_weight_decay + nb.term_vtv;
      if (!cfg.backtracking_enabled || nb.total <= cur.total + 1e-10) {
        s.H = std::move(cand);
        cur = nb;
        break;
      }
      if (attempt >= 20) break;  // keep the previous block value
      t *= 0.5;
      ++halvings;
    }
  }

  // --- B ---------------------------------------------------------------
  {
    const double L = lipschitz_constant(pb, s, Block::B, weights);
    const Matrix g = grad_B(pb, s);
    double t = 1.0 / (cfg.alpha * L);
    for (int attempt = 0;; ++attempt) {
      Matrix moved = s.B - t * g;
      require_finite_iterate(moved);
      Matrix cand = project_nonneg(moved);
      ObjectiveBreakdown nb = cur;
      nb.term_clust = hy.lambda2 == 0.0
                          ? 0.0
                          : 0.5 * hy.lambda2 * (s.H - cand * s.Z).squaredNorm();
      nb.total = nb.term_repr + nb.term_l1 + nb.term_clust + nb.term_classif +
                 nb.term_weight_decay + nb.term_vtv;
      if (!cfg.backtracking_enabled || nb.total <= cur.total + 1e-10) {
        s.B = std::move(cand);
        cur = nb;
        break;
      }
      if (attempt >= 20) break;
      t *= 0.5;
      ++halvings;
    }
  }

  // --- Z ---------------------------------------------------------------
  {
    const double L = lipschitz_constant(pb, s, Block::Z, weights);
    const Matrix g = grad_Z(pb, s, weights);
    double t = 1.0 / (cfg.alpha * L);
    for (int attempt = 0;; ++attempt) {
      Matrix moved = s.Z - t * g;
      require_finite_iterate(moved);
      Matrix cand = project_simplex_columns(moved);
      ObjectiveBreakdown nb = cur;
      nb.term_clust = hy.lambda2 == 0.0
                          ? 0.0
                          : 0.5 * hy.lambda2 * (s.H - s.B * cand).squaredNorm();
      if (hy.lambda1 != 0.0) {
        const Matrix S = s.Q * cand;
        nb.term_classif =
            pb.variant == Variant::Quadratic
                ? 0.5 * hy.lambda1 * quadratic_classif(s.C, S, weights.d)
                : 0.5 * hy.lambda1 * cross_entropy_classif(s.C, S, weights.d);
      }
      nb.total = nb.term_repr + nb.term_l1 + nb.term_clust + nb.term_classif +
                 nb.term_weight_decay + nb.term_vtv;
      if (!cfg.backtracking_enabled || nb.total <= cur.total + 1e-10) {
        s.Z = std::move(cand);
        cur = nb;
        break;
      }
      if (attempt >= 20) break;
      t *= 0.5;
      ++halvings;
    }
  }

  // --- Q (no prox: its nonsmooth part is zero) ---------------------------
  {
    const double L = lipschitz_constant(pb, s, Block::Q, weights);
    const Matrix g = grad_Q(pb, s, weights);
    double t = 1.0 / (cfg.alpha * L);
    for (int attempt = 0;; ++attempt) {
      Matrix cand = s.Q - t * g;
      require_finite_iterate(cand);
      ObjectiveBreakdown nb = cur;
      if (hy.lambda1 != 0.0) {
        const Matrix S = cand * s.Z;
        nb.term_classif =
            pb.variant == Variant::Quadratic
                ? 0.5 * hy.lambda1 * quadratic_classif(s.C, S, weights.d)
                : 0.5 * hy.lambda1 * cross_entropy_classif(s.C, S, weights.d);
      }
      nb.term_weight_decay =
          (pb.variant == Variant::CrossEntropy && hy.lambda_q != 0.0)
              ? 0.5 * hy.lambda_q * cand.squaredNorm()
              : 0.0;
      nb.total = nb.term_repr + nb.term_l1 + nb.term_clust + nb.term_classif +
                 nb.term_weight_decay + nb.term_vtv;
      if (!cfg.backtracking_enabled || nb.total <= cur.total + 1e-10) {
        s.Q = std::move(cand);
        cur = nb;
        break;
      }
      if (attempt >= 20) break;
      t *= 0.5;
      ++halvings;
    }
  }

  // --- C_U (labeled columns stay untouched) ------------------------------
  if (!scratch.unlabeled.empty()) {
    const Matrix g = grad_CU(pb, s, weights);
    double t = 1.0 / (cfg.alpha * scratch.L_CU);
    for (int attempt = 0;; ++attempt) {
      Matrix moved(pb.num_classes, static_cast<Index>(scratch.unlabeled.size()));
      for (std::size_t j = 0; j < scratch.unlabeled.size(); ++j)
        moved.col(static_cast<Index>(j)) =
            s.C.col(scratch.unlabeled[j]) - t * g.col(static_cast<Index>(j));
      require_finite_iterate(moved);
      const Matrix cand_u = project_simplex_columns(moved);
      Matrix cand = s.C;
      for (std::size_t j = 0; j < scratch.unlabeled.size(); ++j)
        cand.col(scratch.unlabeled[j]) = cand_u.col(static_cast<Index>(j));

      ObjectiveBreakdown nb = cur;
      if (hy.lambda1 != 0.0) {
        const Matrix S = s.Q * s.Z;
        nb.term_classif =
            pb.variant == Variant::Quadratic
                ? 0.5 * hy.lambda1 * quadratic_classif(cand, S, weights.d)
                : 0.5 * hy.lambda1 * cross_entropy_classif(cand, S, weights.d);
      }
      nb.term_vtv = hy.lambda_c == 0.0
                        ? 0.0
                        : hy.lambda_c * vtv_value(cand, pb.grid, hy.epsilon_tv);
      nb.total = nb.term_repr + nb.term_l1 + nb.term_clust + nb.term_classif +
                 nb.term_weight_decay + nb.term_vtv;
      if (!cfg.backtracking_enabled || nb.total <= cur.total + 1e-10) {
        s.C = std::move(cand);
        cur = nb;
        break;
      }
      if (attempt >= 20) break;
      t *= 0.5;
      ++halvings;
    }
  }
}

}  // namespace detail

/// One full PALM sweep over the five blocks; returns the updated state.
inline State palm_step(const Problem& pb, const State& initial,
                       const ClassWeights& weights, const SolverConfig& cfg) {
  ObjectiveBreakdown cur = objective_value(pb, initial, weights);
  detail::SolveScratch scratch(pb, initial, weights);
  State s = initial;
  long halvings = 0;
  detail::palm_sweep(pb, weights, cfg, scratch, s, cur, halvings);
  return s;
}

/*
 * Full PALM loop. The objective is monitored every monitor_every iterations
 * and the run stops once the normalized difference between the last two
 * monitored values drops below stop_tol, or at max_iters. On a non-finite
 * iterate the last finite state is returned with the report flagged.
 */
inline std::pair<State, SolveReport> solve(const Problem& pb,
                                           const State& initial,
                                           const ClassWeights& weights,
                                           const SolverConfig& cfg) {
  std::string why;
  if (!state_is_feasible(initial, pb, &why))
    throw Error(ErrorCode::InfeasibleState, why);
  const auto t_start = std::chrono::steady_clock::now();

  State s = initial;
  SolveReport report;
  ObjectiveBreakdown cur = evaluate_terms(pb, s.H, s.B, s.Z, s.Q, s.C, weights);
  report.records.push_back(
      {0, cur, std::numeric_limits<double>::infinity()});
  detail::SolveScratch scratch(pb, s, weights);

  double prev_total = cur.total;
  for (int k = 1; k <= cfg.max_iters; ++k) {
    try {
      detail::palm_sweep(pb, weights, cfg, scratch, s, cur,
                         report.backtrack_halvings);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::NonFiniteIterate) {
        report.nonfinite_abort = true;
        break;
      }
      throw;
    }
    if (k % cfg.monitor_every != 0) continue;
    double rel;
    if (prev_total == 0.0)
      rel = cur.total == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    else
      rel = std::abs(cur.total - prev_total) / std::abs(prev_total);
    report.records.push_back({k, cur, rel});
    prev_total = cur.total;
    if (rel < cfg.stop_tol) {
      report.stop_reason = StopReason::Converged;
      break;
    }
  }

  report.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  return {std::move(s), std::move(report)};
}

}  // namespace cofact
