#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "mmatch/dissimilarity.hpp"
#include "mmatch/error.hpp"
#include "mmatch/numerics.hpp"

namespace mmatch {

/// Rows are objects, columns are coordinates.
using EmbeddingMatrix = Eigen::MatrixXd;

/// Fitted classical scaling of one dissimilarity matrix.
///
/// Only strictly positive eigenvalues are retained, so the effective
/// dimension (embedding.cols()) can be smaller than requested_dim. The row
/// means and grand mean of the squared dissimilarities are kept for the
/// out-of-sample extension.
struct MdsModel {
  EmbeddingMatrix embedding;     // n x p, columns centered
  Eigen::VectorXd eigenvalues;   // p retained eigenvalues, descending
  Eigen::MatrixXd eigenvectors;  // n x p, orthonormal
  Eigen::VectorXd row_means;     // row means of delta^2
  double grand_mean = 0.0;       // grand mean of delta^2
  int requested_dim = 0;

  int dim() const { return static_cast<int>(embedding.cols()); }
  Eigen::Index size() const { return embedding.rows(); }
};

/// Relative threshold below which an eigenvalue of the double-centered
/// matrix counts as zero.
inline constexpr double kMdsEigenTolerance = 1e-10;

/// Torgerson scaling: B = -1/2 J (delta o delta) J, embedding = V_p L_p^1/2
/// over the top-p positive eigenvalues.
inline MdsModel mds_fit(const Eigen::MatrixXd& delta, int p) {
  const Eigen::Index n = delta.rows();
  if (delta.cols() != n) throw ValidationError("mds_fit: dissimilarity matrix must be square");
  if (n < 2) throw ValidationError("mds_fit: need at least two objects");
  if (p < 1 || p > n - 1)
    throw ValidationError("mds_fit: dimension " + std::to_string(p) + " outside [1, " +
                          std::to_string(n - 1) + "]");

  const Eigen::MatrixXd sq = delta.cwiseProduct(delta);
  MdsModel model;
  model.requested_dim = p;
  model.row_means = sq.rowwise().mean();
  model.grand_mean = model.row_means.mean();

  Eigen::MatrixXd b(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      b(i, j) = -0.5 * (sq(i, j) - model.row_means(i) - model.row_means(j) + model.grand_mean);
  b = 0.5 * (b + b.transpose());

  const SpectralResult spec = eig_sym(b);
  const double top = std::max(spec.eigenvalues(0), 0.0);
  int keep = 0;
  while (keep < p && spec.eigenvalues(keep) > kMdsEigenTolerance * top && top > 0.0) ++keep;

  model.eigenvalues = spec.eigenvalues.head(keep);
  model.eigenvectors = spec.eigenvectors.leftCols(keep);
  model.embedding = model.eigenvectors * model.eigenvalues.cwiseSqrt().asDiagonal();
  return model;
}

inline MdsModel mds_fit(const DissimilarityMatrix& delta, int p) {
  return mds_fit(delta.values, p);
}

/// Gower interpolation of new points, one row of `delta_new` per point with
/// its dissimilarities to all n training objects:
///   b_i = -1/2 (d_i^2 - mean_j delta_ij^2 - mean_j d_j^2 + grand mean),
///   y   = L^-1/2 V^T b.
/// A training row of delta maps back onto its training coordinates.
inline EmbeddingMatrix mds_out_of_sample(const MdsModel& model, const Eigen::MatrixXd& delta_new) {
  const Eigen::Index n = model.size();
  if (delta_new.cols() != n)
    throw ValidationError("mds_out_of_sample: expected " + std::to_string(n) +
                          " dissimilarities per point, got " + std::to_string(delta_new.cols()));
  if (!delta_new.allFinite() || (delta_new.size() > 0 && delta_new.minCoeff() < 0.0))
    throw ValidationError("mds_out_of_sample: dissimilarities must be finite and nonnegative");

  const Eigen::MatrixXd sq = delta_new.cwiseProduct(delta_new);
  const Eigen::VectorXd own_means = sq.rowwise().mean();
  Eigen::MatrixXd b = sq;
  b.rowwise() -= model.row_means.transpose();
  b.colwise() -= own_means;
  b.array() += model.grand_mean;
  b *= -0.5;
  return b * model.eigenvectors * model.eigenvalues.cwiseSqrt().cwiseInverse().asDiagonal();
}

/// Single-point form of mds_out_of_sample.
inline Eigen::VectorXd mds_out_of_sample(const MdsModel& model, const Eigen::VectorXd& delta_new) {
  return mds_out_of_sample(model, Eigen::MatrixXd(delta_new.transpose())).row(0).transpose();
}

/// Mean over pairs i<j of (||x_i - x_j|| - delta_ij)^2.
inline double fidelity_error(const EmbeddingMatrix& embedding, const Eigen::MatrixXd& delta) {
  const Eigen::Index n = embedding.rows();
  if (delta.rows() != n || delta.cols() != n)
    throw ValidationError("fidelity_error: embedding has " + std::to_string(n) +
                          " rows but dissimilarity matrix is " + std::to_string(delta.rows()) +
                          "x" + std::to_string(delta.cols()));
  if (n < 2) throw ValidationError("fidelity_error: need at least two objects");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double r = (embedding.row(i) - embedding.row(j)).norm() - delta(i, j);
      sum += r * r;
    }
  return sum / (0.5 * static_cast<double>(n) * static_cast<double>(n - 1));
}

inline double fidelity_error(const EmbeddingMatrix& embedding, const DissimilarityMatrix& delta) {
  return fidelity_error(embedding, delta.values);
}

/// Square roots of the retained eigenvalues, descending.
inline std::vector<double> scree(const MdsModel& model) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(model.eigenvalues.size()));
  for (Eigen::Index i = 0; i < model.eigenvalues.size(); ++i)
    out.push_back(std::sqrt(model.eigenvalues(i)));
  return out;
}

} // namespace mmatch
