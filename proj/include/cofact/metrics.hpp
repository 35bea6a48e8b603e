#pragma once

#include <cmath>
#include <vector>

#include "cofact/types.hpp"

namespace cofact {

/// RE = sqrt(||Y - W H||_F^2 / (P L)).
inline double reconstruction_error(const Matrix& Y, const Matrix& W,
                                   const Matrix& H) {
  if (W.rows() != Y.rows() || W.cols() != H.rows() || H.cols() != Y.cols())
    throw Error(ErrorCode::DimensionMismatch,
                "reconstruction error: Y, W, H dimensions disagree");
  return std::sqrt((Y - W * H).squaredNorm() /
                   static_cast<double>(Y.rows() * Y.cols()));
}

/// RMSE(H^) = sqrt(||H_true - H^||_F^2 / (P R)).
inline double abundance_rmse(const Matrix& H_true, const Matrix& H_hat) {
  if (H_true.rows() != H_hat.rows() || H_true.cols() != H_hat.cols())
    throw Error(ErrorCode::DimensionMismatch,
                "abundance RMSE: shapes differ");
  return std::sqrt((H_true - H_hat).squaredNorm() /
                   static_cast<double>(H_true.rows() * H_true.cols()));
}

struct ClassificationScores {
  double kappa = 0.0;
  double f1_mean = 0.0;
  std::vector<double> per_class_f1;
  Matrix confusion;  // C x C, entry (i,j) = count(truth i, predicted j)
};

/*
 * Cohen's kappa and unweighted mean F1 over all classes from 0-based class
 * ids. Inputs are already restricted to the evaluation mask. A class absent
 * from both truth and prediction contributes F1 = 0 to the mean. When the
 * chance agreement p_e reaches 1 the kappa ratio degenerates; perfect
 * agreement then scores 1 and anything else 0.
 */
inline ClassificationScores classification_scores(
    const std::vector<int>& predicted, const std::vector<int>& truth,
    int num_classes) {
  if (predicted.size() != truth.size())
    throw Error(ErrorCode::DimensionMismatch,
                "predicted and truth lengths differ");
  if (predicted.empty())
    throw Error(ErrorCode::EmptyMask, "empty evaluation mask");

  ClassificationScores out;
  out.confusion = Matrix::Zero(num_classes, num_classes);
  for (std::size_t p = 0; p < truth.size(); ++p) {
    const int t = truth[p];
    const int y = predicted[p];
    if (t < 0 || t >= num_classes || y < 0 || y >= num_classes)
      throw Error(ErrorCode::DimensionMismatch, "class id out of range");
    out.confusion(t, y) += 1.0;
  }

  const double total = static_cast<double>(truth.size());
  const double p_o = out.confusion.trace() / total;
  double p_e = 0.0;
  for (int i = 0; i < num_classes; ++i)
    p_e += out.confusion.row(i).sum() * out.confusion.col(i).sum() /
           (total * total);
  if (1.0 - p_e == 0.0)
    out.kappa = p_o == 1.0 ? 1.0 : 0.0;
  else
    out.kappa = (p_o - p_e) / (1.0 - p_e);

  out.per_class_f1.resize(static_cast<std::size_t>(num_classes), 0.0);
  double f1_sum = 0.0;
  for (int i = 0; i < num_classes; ++i) {
    const double tp = out.confusion(i, i);
    const double pred_i = out.confusion.col(i).sum();
    const double true_i = out.confusion.row(i).sum();
    const double prec = pred_i > 0.0 ? tp / pred_i : 0.0;
    const double rec = true_i > 0.0 ? tp / true_i : 0.0;
    const double f1 =
        (prec + rec) > 0.0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
    out.per_class_f1[static_cast<std::size_t>(i)] = f1;
    f1_sum += f1;
  }
  out.f1_mean = f1_sum / static_cast<double>(num_classes);
  return out;
}

}  // namespace cofact
