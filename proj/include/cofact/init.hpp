#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "cofact/kmeans.hpp"
#include "cofact/objective.hpp"
#include "cofact/rng.hpp"
#include "cofact/types.hpp"

namespace cofact {

enum class DictionarySource {
  Provided,        // keep the problem dictionary as the candidate set
  SelfDictionary,  // extract candidates from the labeled image pixels
};

struct InitConfig {
  int J = 4;                     // clusters per class for candidate extraction
  double alpha_group =
      std::numeric_limits<double>::quiet_NaN();  // NaN = 0.1 * max|Ytil' Y|
  int group_lasso_iters = 1000;
  double group_lasso_tol = 1e-8;
  int kmeans_restarts = 5;
  int kmeans_iters = 100;
  double row_prune_tol = 1e-6;   // on the l2 norm of H0 rows
  std::uint64_t seed = 0;
  DictionarySource dict_source = DictionarySource::Provided;
};

struct CandidateSet {
  Matrix spectra;                    // L x (sum of per-class cluster counts)
  std::vector<Index> source_pixels;  // empty in Provided mode
  std::vector<int> classes;          // candidate class, class-major order
};

struct InitResult {
  Matrix dictionary;                 // pruned candidate columns
  State state;
  std::vector<Index> kept_candidates;  // indices into the candidate set
  std::vector<Index> source_pixels;    // pixels behind kept columns (self mode)
};

namespace detail {

inline double angle_or_zero(const Vector& a, const Vector& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::acos(std::clamp(a.dot(b) / (na * nb), -1.0, 1.0));
}

}  // namespace detail

/*
 * Candidate extraction for the self-dictionary initialization: a per-class
 * k-means over the labeled spectra, then from each cluster the member pixel
 * with the largest minimum spectral angle to every other cluster centroid.
 * With a single cluster overall the rule degenerates and the member closest
 * to its centroid is taken instead.
 */
inline CandidateSet select_candidates(const Problem& pb, const InitConfig& cfg) {
  const Matrix& Y = pb.observations;
  struct Cluster {
    Vector centroid;
    std::vector<Index> members;  // pixel indices
    int cls;
  };
  std::vector<Cluster> clusters;

  for (int cls = 0; cls < pb.num_classes; ++cls) {
    std::vector<Index> pixels;
    for (Index p = 0; p < pb.num_pixels(); ++p)
      if (pb.labels[static_cast<std::size_t>(p)] == cls) pixels.push_back(p);
    if (pixels.empty())
      throw Error(ErrorCode::EmptyClass,
                  "class " + std::to_string(cls + 1) + " has no labeled pixel");

    const Index J = std::min<Index>(cfg.J, static_cast<Index>(pixels.size()));
    Matrix pts(Y.rows(), static_cast<Index>(pixels.size()));
    for (std::size_t j = 0; j < pixels.size(); ++j)
      pts.col(static_cast<Index>(j)) = Y.col(pixels[j]);

    KmeansConfig kc{cfg.kmeans_restarts, cfg.kmeans_iters,
                    cfg.seed + 0x9e3779b9ULL * static_cast<std::uint64_t>(cls + 1)};
    const KmeansResult km = kmeans(pts, J, kc);
    for (Index k = 0; k < J; ++k) {
      Cluster c;
      c.centroid = km.centroids.col(k);
      c.cls = cls;
      for (std::size_t j = 0; j < pixels.size(); ++j)
        if (km.assignments[j] == static_cast<int>(k)) c.members.push_back(pixels[j]);
      clusters.push_back(std::move(c));
    }
  }

  CandidateSet out;
  out.spectra.resize(Y.rows(), static_cast<Index>(clusters.size()));
  for (std::size_t ci = 0; ci < clusters.size(); ++ci) {
    const Cluster& c = clusters[ci];
    Index best_pixel = c.members.front();
    if (clusters.size() == 1) {
      double best_d = std::numeric_limits<double>::infinity();
      for (Index p : c.members) {
        const double d = (Y.col(p) - c.centroid).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best_pixel = p;
        }
      }
    } else {
      double best_score = -1.0;
      for (Index p : c.members) {
        double min_angle = std::numeric_limits<double>::infinity();
        for (std::size_t cj = 0; cj < clusters.size(); ++cj) {
          if (cj == ci) continue;
          min_angle = std::min(
              min_angle, detail::angle_or_zero(Y.col(p), clusters[cj].centroid));
        }
        if (min_angle > best_score) {
          best_score = min_angle;
          best_pixel = p;
        }
      }
    }
    out.spectra.col(static_cast<Index>(ci)) = Y.col(best_pixel);
    out.source_pixels.push_back(best_pixel);
    out.classes.push_back(c.cls);
  }
  return out;
}

/*
 * Row-sparse coding of the image on a candidate dictionary:
 *
 *   min_H 1/2 ||Y - Ytil H||_F^2 + alpha sum_r ||h_{r,:}||_2
 *
 * solved by accelerated proximal gradient with step 1/||Ytil' Ytil|| and
 * row-wise group soft-thresholding. The momentum restarts whenever the
 * objective would increase, so the reported objective is nonincreasing.
 */
inline Matrix solve_group_lasso(const Matrix& Y, const Matrix& Ytil,
                                double alpha, int max_iters, double tol) {
  if (alpha < 0.0)
    throw Error(ErrorCode::InvalidHyperparameter, "alpha_group must be >= 0");
  const Index R = Ytil.cols();
  const Index P = Y.cols();

  const Matrix G = Ytil.transpose() * Ytil;
  const Matrix YtY = Ytil.transpose() * Y;
  const double lip = std::max(detail::spectral_norm_sym(G), 1e-12);
  const double step = 1.0 / lip;

  auto shrink_rows = [&](Matrix& m, double tau) {
    for (Index r = 0; r < m.rows(); ++r) {
      const double nr = m.row(r).norm();
      if (nr <= tau)
        m.row(r).setZero();
      else
        m.row(r) *= 1.0 - tau / nr;
    }
  };
  auto objective = [&](const Matrix& H) {
    double pen = 0.0;
    for (Index r = 0; r < H.rows(); ++r) pen += H.row(r).norm();
    return 0.5 * (Y - Ytil * H).squaredNorm() + alpha * pen;
  };

  Matrix H = Matrix::Zero(R, P);
  Matrix V = H;
  double theta = 1.0;
  double obj = objective(H);

  for (int iter = 0; iter < max_iters; ++iter) {
    Matrix cand = V - step * (G * V - YtY);
    shrink_rows(cand, alpha * step);
    double cand_obj = objective(cand);
    if (cand_obj > obj) {
      // momentum overshoot: fall back to a plain descent step from H
      cand = H - step * (G * H - YtY);
      shrink_rows(cand, alpha * step);
      cand_obj = objective(cand);
      theta = 1.0;
    }
    const double theta_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * theta * theta));
    V = cand + ((theta - 1.0) / theta_next) * (cand - H);
    H = std::move(cand);
    theta = theta_next;

    const double denom = std::abs(obj);
    const double rel = denom == 0.0 ? std::abs(cand_obj - obj)
                                    : std::abs(cand_obj - obj) / denom;
    obj = cand_obj;
    if (rel < tol) break;
  }
  return H;
}

/*
 * Initial estimates for all five blocks. The candidate dictionary (provided
 * atoms or labeled-pixel extraction) is coded with the group lasso, inactive
 * rows are pruned, the surviving coding vectors are clustered to seed the
 * centroids and attributions, and the classifier starts near zero.
 */
inline InitResult initialize(const Problem& pb, const InitConfig& cfg) {
  require_valid(pb);

  CandidateSet cand;
  if (cfg.dict_source == DictionarySource::SelfDictionary) {
    cand = select_candidates(pb, cfg);
  } else {
    cand.spectra = pb.dictionary;
  }

  double alpha = cfg.alpha_group;
  if (std::isnan(alpha))
    alpha = 0.1 * (cand.spectra.transpose() * pb.observations)
                      .array()
                      .abs()
                      .maxCoeff();

  const Matrix H0 = solve_group_lasso(pb.observations, cand.spectra, alpha,
                                      cfg.group_lasso_iters, cfg.group_lasso_tol);

  std::vector<Index> kept;
  for (Index r = 0; r < H0.rows(); ++r)
    if (H0.row(r).norm() > cfg.row_prune_tol) kept.push_back(r);
  if (kept.empty())
    throw Error(ErrorCode::AllRowsPruned,
                "group lasso removed every candidate; alpha_group too large");

  InitResult out;
  out.kept_candidates = kept;
  out.dictionary.resize(pb.num_bands(), static_cast<Index>(kept.size()));
  Matrix H(static_cast<Index>(kept.size()), pb.num_pixels());
  for (std::size_t j = 0; j < kept.size(); ++j) {
    out.dictionary.col(static_cast<Index>(j)) = cand.spectra.col(kept[j]);
    H.row(static_cast<Index>(j)) = H0.row(kept[j]).cwiseMax(0.0);
    if (!cand.source_pixels.empty())
      out.source_pixels.push_back(cand.source_pixels[static_cast<std::size_t>(kept[j])]);
  }

  const Index K = pb.num_clusters;
  KmeansConfig kc{cfg.kmeans_restarts, cfg.kmeans_iters, cfg.seed};
  const KmeansResult km = kmeans(H, K, kc);

  State s;
  s.H = std::move(H);
  s.B = km.centroids.cwiseMax(0.0);
  s.Z = Matrix::Zero(K, pb.num_pixels());
  for (Index p = 0; p < pb.num_pixels(); ++p)
    s.Z(km.assignments[static_cast<std::size_t>(p)], p) = 1.0;

  Rng rng(cfg.seed ^ 0xc1a551f1ed5eedULL);
  s.Q.resize(pb.num_classes, K);
  for (Index i = 0; i < s.Q.rows(); ++i)
    for (Index k = 0; k < s.Q.cols(); ++k) s.Q(i, k) = rng.uniform(-0.01, 0.01);

  s.C = initial_attribution(pb);
  out.state = std::move(s);
  return out;
}

}  // namespace cofact
