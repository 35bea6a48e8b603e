#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cofact {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

enum class ErrorCode {
  DimensionMismatch,
  EmptyClass,
  NonFiniteEntry,
  NegativeDictionary,
  ZeroDictionaryColumn,
  InvalidHyperparameter,
  ZeroImage,
  InfeasibleState,
  NonFiniteIterate,
  TooFewPoints,
  ZeroVector,
  AllRowsPruned,
  InvalidFraction,
  EmptyMask,
  BadMagic,
  TruncatedFile,
  VersionUnsupported,
  IoFailure,
  ConfigError,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message)
      : std::runtime_error(std::move(message)), code_(code) {}
  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

enum class Variant { Quadratic, CrossEntropy };

struct Hyperparameters {
  double lambda0 = 1.0;
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double lambda_h = 0.0;
  double lambda_q = 0.0;
  double lambda_c = 0.0;
  double epsilon_tv = 1e-3;   // vTV smoothing, must stay > 0
  double sigma_beta = 0.01;   // edge-weight smoothing
  double stop_tol = 1e-4;
  int max_iters = 5000;
  double alpha = 2.0;         // PALM step inflation, > 1
  std::uint64_t seed = 0;
};

/*
 * Row-major pixel lattice: pixel p <-> (m, n) with p = m * cols + n.
 * beta holds the per-pixel vTV edge weights (sum to 1 once computed).
 */
struct SpatialGrid {
  Index rows = 0;
  Index cols = 0;
  Matrix beta;  // rows x cols

  SpatialGrid() = default;
  SpatialGrid(Index m, Index n) : rows(m), cols(n) {
    beta = Matrix::Constant(m, n, 1.0 / static_cast<double>(m * n));
  }

  [[nodiscard]] Index num_pixels() const { return rows * cols; }
  [[nodiscard]] Index pixel(Index m, Index n) const { return m * cols + n; }
  [[nodiscard]] std::pair<Index, Index> coords(Index p) const {
    return {p / cols, p % cols};
  }
};

constexpr int kUnlabeled = -1;

/*
 * Immutable problem bundle. Class ids are 0-based internally; labels[p] is
 * kUnlabeled for pixels without ground truth.
 */
struct Problem {
  Matrix observations;      // L x P
  Matrix dictionary;        // L x R
  std::vector<int> labels;  // length P, values in {kUnlabeled, 0..C-1}
  SpatialGrid grid;
  int num_classes = 0;   // C
  int num_clusters = 0;  // K
  Variant variant = Variant::Quadratic;
  Hyperparameters hyper;

  [[nodiscard]] Index num_bands() const { return observations.rows(); }
  [[nodiscard]] Index num_pixels() const { return observations.cols(); }
  [[nodiscard]] Index num_atoms() const { return dictionary.cols(); }

  [[nodiscard]] std::vector<Index> labeled_indices() const {
    std::vector<Index> out;
    for (Index p = 0; p < static_cast<Index>(labels.size()); ++p)
      if (labels[p] != kUnlabeled) out.push_back(p);
    return out;
  }
  [[nodiscard]] std::vector<Index> unlabeled_indices() const {
    std::vector<Index> out;
    for (Index p = 0; p < static_cast<Index>(labels.size()); ++p)
      if (labels[p] == kUnlabeled) out.push_back(p);
    return out;
  }
};

/*
 * The five optimized blocks. C is the full C x P attribution matrix; labeled
 * columns hold the one-hot ground truth and are never touched by the solver.
 */
struct State {
  Matrix H;  // R x P, >= 0
  Matrix B;  // R x K, >= 0
  Matrix Z;  // K x P, columns on the simplex
  Matrix Q;  // C x K, free
  Matrix C;  // C x P, unlabeled columns on the simplex
};

/// Diagonal of the classification weight matrix D.
struct ClassWeights {
  Vector d;  // length P, positive

  [[nodiscard]] Vector d_squared() const { return d.array().square(); }
};

struct ValidationIssue {
  ErrorCode code;
  std::string message;
};

namespace detail {

inline std::string fmt_entry(const char* name, Index r, Index c) {
  std::ostringstream os;
  os << name << "(" << r << "," << c << ")";
  return os.str();
}

inline bool find_nonfinite(const Matrix& m, Index& r, Index& c) {
  for (Index j = 0; j < m.cols(); ++j)
    for (Index i = 0; i < m.rows(); ++i)
      if (!std::isfinite(m(i, j))) {
        r = i;
        c = j;
        return true;
      }
  return false;
}

}  // namespace detail

/*
 * Checks every Problem invariant and returns the complete list of violations
 * (empty list == valid). Pure, so validating twice gives identical results.
 */
inline std::vector<ValidationIssue> validate_problem(const Problem& pb) {
  std::vector<ValidationIssue> issues;
  auto add = [&](ErrorCode code, const std::string& msg) {
    issues.push_back({code, msg});
  };

  const Index L = pb.observations.rows();
  const Index P = pb.observations.cols();

  if (L < 1 || P < 1)
    add(ErrorCode::DimensionMismatch, "observations must be non-empty");
  if (pb.dictionary.rows() != L)
    add(ErrorCode::DimensionMismatch,
        "dictionary row count differs from number of bands");
  if (pb.dictionary.cols() < 1)
    add(ErrorCode::DimensionMismatch, "dictionary must have at least one column");
  if (pb.grid.num_pixels() != P)
    add(ErrorCode::DimensionMismatch, "grid size differs from number of pixels");
  if (static_cast<Index>(pb.labels.size()) != P)
    add(ErrorCode::DimensionMismatch, "labels length differs from number of pixels");
  if (pb.num_classes < 2)
    add(ErrorCode::DimensionMismatch, "num_classes must be >= 2");
  if (pb.num_clusters < 1)
    add(ErrorCode::DimensionMismatch, "num_clusters must be >= 1");

  Index r = 0, c = 0;
  if (detail::find_nonfinite(pb.observations, r, c))
    add(ErrorCode::NonFiniteEntry,
        "non-finite entry at " + detail::fmt_entry("Y", r, c));
  if (detail::find_nonfinite(pb.dictionary, r, c))
    add(ErrorCode::NonFiniteEntry,
        "non-finite entry at " + detail::fmt_entry("W", r, c));

  for (Index j = 0; j < pb.dictionary.cols(); ++j) {
    bool all_zero = true;
    for (Index i = 0; i < pb.dictionary.rows(); ++i) {
      const double v = pb.dictionary(i, j);
      if (std::isfinite(v) && v < 0.0) {
        add(ErrorCode::NegativeDictionary,
            "negative entry at " + detail::fmt_entry("W", i, j));
        all_zero = false;  // still a violation, but not the zero-column one
        break;
      }
      if (v != 0.0) all_zero = false;
    }
    if (all_zero && pb.dictionary.rows() > 0)
      add(ErrorCode::ZeroDictionaryColumn,
          "dictionary column " + std::to_string(j) + " is all zero");
  }

  if (static_cast<Index>(pb.labels.size()) == P && pb.num_classes >= 1) {
    std::vector<Index> counts(static_cast<std::size_t>(pb.num_classes), 0);
    for (Index p = 0; p < P; ++p) {
      const int lab = pb.labels[static_cast<std::size_t>(p)];
      if (lab == kUnlabeled) continue;
      if (lab < 0 || lab >= pb.num_classes) {
        add(ErrorCode::DimensionMismatch,
            "label out of range at pixel " + std::to_string(p));
        continue;
      }
      ++counts[static_cast<std::size_t>(lab)];
    }
    for (int i = 0; i < pb.num_classes; ++i)
      if (counts[static_cast<std::size_t>(i)] == 0)
        add(ErrorCode::EmptyClass,
            "class " + std::to_string(i + 1) + " has no labeled pixel");
  }

  if (!(pb.hyper.epsilon_tv > 0.0))
    add(ErrorCode::InvalidHyperparameter, "epsilon_tv must be > 0");
  if (!(pb.hyper.alpha > 1.0))
    add(ErrorCode::InvalidHyperparameter, "alpha must be > 1");
  if (!(pb.hyper.sigma_beta > 0.0))
    add(ErrorCode::InvalidHyperparameter, "sigma_beta must be > 0");
  if (pb.hyper.lambda0 < 0 || pb.hyper.lambda1 < 0 || pb.hyper.lambda2 < 0 ||
      pb.hyper.lambda_h < 0 || pb.hyper.lambda_q < 0 || pb.hyper.lambda_c < 0)
    add(ErrorCode::InvalidHyperparameter, "term weights must be >= 0");

  return issues;
}

/// Throws the first violation if the problem is invalid; returns it otherwise.
inline const Problem& require_valid(const Problem& pb) {
  const auto issues = validate_problem(pb);
  if (!issues.empty()) throw Error(issues.front().code, issues.front().message);
  return pb;
}

/*
 * Per-pixel weights d_p = sqrt(1/|L_i|) on labeled pixels of class i and
 * sqrt(1/|U|) on unlabeled pixels, so each class (and the unlabeled pool)
 * carries unit total squared weight.
 */
inline ClassWeights build_class_weights(const std::vector<int>& labels,
                                        int num_classes) {
  const auto P = static_cast<Index>(labels.size());
  std::vector<Index> counts(static_cast<std::size_t>(num_classes), 0);
  Index unlabeled = 0;
  for (int lab : labels) {
    if (lab == kUnlabeled) {
      ++unlabeled;
    } else if (lab >= 0 && lab < num_classes) {
      ++counts[static_cast<std::size_t>(lab)];
    } else {
      throw Error(ErrorCode::DimensionMismatch, "label out of range");
    }
  }
  for (int i = 0; i < num_classes; ++i)
    if (counts[static_cast<std::size_t>(i)] == 0)
      throw Error(ErrorCode::EmptyClass,
                  "class " + std::to_string(i + 1) + " has no labeled pixel");

  ClassWeights w;
  w.d.resize(P);
  for (Index p = 0; p < P; ++p) {
    const int lab = labels[static_cast<std::size_t>(p)];
    if (lab == kUnlabeled) {
      w.d[p] = std::sqrt(1.0 / static_cast<double>(unlabeled));
    } else {
      w.d[p] = std::sqrt(1.0 / static_cast<double>(counts[static_cast<std::size_t>(lab)]));
    }
  }
  return w;
}

/*
 * Balances the raw term weights against the data size and dynamics:
 *   lambda0 = lambda0~ / (L * max|Y|^2),  lambda_q = (P/C) * lambda_q~.
 * Everything else passes through unchanged.
 */
inline Hyperparameters scale_hyperparameters(const Hyperparameters& raw,
                                             const Matrix& Y, int num_classes) {
  if (Y.size() == 0) throw Error(ErrorCode::ZeroImage, "empty observations");
  const double ymax = Y.array().abs().maxCoeff();
  if (ymax == 0.0)
    throw Error(ErrorCode::ZeroImage, "observations are identically zero");
  Hyperparameters h = raw;
  const double L = static_cast<double>(Y.rows());
  const double P = static_cast<double>(Y.cols());
  h.lambda0 = raw.lambda0 / (L * ymax * ymax);
  h.lambda_q = (P / static_cast<double>(num_classes)) * raw.lambda_q;
  return h;
}

/*
 * Single feasibility predicate shared by all solver tests: H, B nonnegative,
 * Z and unlabeled C columns on their simplices (sum tolerance 1e-12), labeled
 * C columns exactly one-hot.
 */
inline bool state_is_feasible(const State& s, const Problem& pb,
                              std::string* why = nullptr) {
  auto fail = [&](const std::string& msg) {
    if (why) *why = msg;
    return false;
  };
  const Index P = pb.num_pixels();
  const Index K = pb.num_clusters;
  const Index C = pb.num_classes;

  if (s.H.cols() != P || s.B.rows() != s.H.rows() || s.B.cols() != K ||
      s.Z.rows() != K || s.Z.cols() != P || s.Q.rows() != C ||
      s.Q.cols() != K || s.C.rows() != C || s.C.cols() != P)
    return fail("block dimensions inconsistent with problem");

  if (!s.H.allFinite() || !s.B.allFinite() || !s.Z.allFinite() ||
      !s.Q.allFinite() || !s.C.allFinite())
    return fail("non-finite entry in state");
  if ((s.H.array() < 0.0).any()) return fail("H has a negative entry");
  if ((s.B.array() < 0.0).any()) return fail("B has a negative entry");

  for (Index p = 0; p < P; ++p) {
    if ((s.Z.col(p).array() < 0.0).any())
      return fail("Z column " + std::to_string(p) + " leaves the simplex");
    if (std::abs(s.Z.col(p).sum() - 1.0) > 1e-12)
      return fail("Z column " + std::to_string(p) + " does not sum to 1");
  }
  for (Index p = 0; p < P; ++p) {
    const int lab = pb.labels[static_cast<std::size_t>(p)];
    if (lab == kUnlabeled) {
      if ((s.C.col(p).array() < 0.0).any())
        return fail("C column " + std::to_string(p) + " leaves the simplex");
      if (std::abs(s.C.col(p).sum() - 1.0) > 1e-12)
        return fail("C column " + std::to_string(p) + " does not sum to 1");
    } else {
      for (Index i = 0; i < C; ++i) {
        const double want = (i == lab) ? 1.0 : 0.0;
        if (s.C(i, p) != want)
          return fail("labeled C column " + std::to_string(p) +
                      " is not the ground-truth one-hot");
      }
    }
  }
  return true;
}

/// One-hot ground-truth columns for the labeled pixels, uniform elsewhere.
inline Matrix initial_attribution(const Problem& pb) {
  const Index P = pb.num_pixels();
  const Index C = pb.num_classes;
  Matrix out = Matrix::Constant(C, P, 1.0 / static_cast<double>(C));
  for (Index p = 0; p < P; ++p) {
    const int lab = pb.labels[static_cast<std::size_t>(p)];
    if (lab == kUnlabeled) continue;
    out.col(p).setZero();
    out(lab, p) = 1.0;
  }
  return out;
}

}  // namespace cofact
