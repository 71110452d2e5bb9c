#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>

#include "mmatch/error.hpp"

namespace mmatch {

/// Eigen-decomposition with a fixed presentation: eigenvalues descending,
/// one eigenvector per column, and each eigenvector flipped so that its
/// largest-magnitude entry is positive.
struct SpectralResult {
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd eigenvectors;
};

namespace detail {

inline void check_square(const Eigen::MatrixXd& a, const char* what) {
  if (a.rows() != a.cols()) {
    std::ostringstream os;
    os << what << " must be square, got " << a.rows() << "x" << a.cols();
    throw ValidationError(os.str());
  }
}

inline void check_symmetric(const Eigen::MatrixXd& a, const char* what) {
  check_square(a, what);
  if (!a.allFinite()) throw ValidationError(std::string(what) + " has non-finite entries");
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  const double asym = (a - a.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-10 * scale) {
    std::ostringstream os;
    os << what << " is not symmetric (max asymmetry " << asym << ")";
    throw ValidationError(os.str());
  }
}

// First index of maximal magnitude gets a positive sign.
inline void fix_signs(Eigen::MatrixXd& vecs) {
  for (Eigen::Index c = 0; c < vecs.cols(); ++c) {
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index r = 0; r < vecs.rows(); ++r) {
      const double m = std::abs(vecs(r, c));
      if (m > best) {
        best = m;
        arg = r;
      }
    }
    if (vecs(arg, c) < 0.0) vecs.col(c) = -vecs.col(c);
  }
}

// Reorders ascending Eigen output into descending order.
inline SpectralResult descending(const Eigen::VectorXd& vals, const Eigen::MatrixXd& vecs) {
  SpectralResult out;
  out.eigenvalues = vals.reverse();
  out.eigenvectors = vecs.rowwise().reverse();
  fix_signs(out.eigenvectors);
  return out;
}

} // namespace detail

/// Full symmetric eigendecomposition.
inline SpectralResult eig_sym(const Eigen::MatrixXd& a) {
  detail::check_symmetric(a, "eig_sym input");
  if (a.rows() == 0) return {};
  // Work on the exactly symmetrized matrix so tiny asymmetries cannot leak
  // into the solver.
  const Eigen::MatrixXd sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
  if (solver.info() != Eigen::Success) throw ConditioningError("symmetric eigensolver did not converge");
  return detail::descending(solver.eigenvalues(), solver.eigenvectors());
}

/// Default diagonal loading used when a Cholesky factorization fails.
inline double default_cholesky_ridge(const Eigen::MatrixXd& b) {
  if (b.rows() == 0) return 0.0;
  return 1e-10 * b.trace() / static_cast<double>(b.rows());
}

/// Solves A v = lambda (B + ridge I) v for symmetric A and symmetric
/// positive-definite B + ridge I.
///
/// B is whitened by its Cholesky factor L, the symmetric problem
/// L^-1 A L^-T y = lambda y is solved with eig_sym and v = L^-T y. The
/// eigenvectors come out (B + ridge I)-orthonormal. If the factorization
/// fails, default_cholesky_ridge(B) is added once more before giving up
/// with a ConditioningError that reports the smallest LDL^T pivot.
inline SpectralResult eig_sym_generalized(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                          double ridge = 0.0) {
  detail::check_symmetric(a, "generalized eigenproblem A");
  detail::check_symmetric(b, "generalized eigenproblem B");
  if (a.rows() != b.rows())
    throw ValidationError("generalized eigenproblem: A and B differ in size");
  if (ridge < 0.0 || !std::isfinite(ridge))
    throw ValidationError("generalized eigenproblem: ridge must be a nonnegative finite number");
  const Eigen::Index n = a.rows();
  if (n == 0) return {};

  const Eigen::MatrixXd bsym = 0.5 * (b + b.transpose());
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);

  Eigen::MatrixXd loaded = bsym + ridge * eye;
  Eigen::LLT<Eigen::MatrixXd> llt(loaded);
  if (llt.info() != Eigen::Success) {
    loaded = bsym + (ridge + default_cholesky_ridge(bsym)) * eye;
    llt.compute(loaded);
    if (llt.info() != Eigen::Success) {
      Eigen::LDLT<Eigen::MatrixXd> ldlt(loaded);
      std::ostringstream os;
      os << "B + ridge*I is not positive-definite (smallest pivot " << ldlt.vectorD().minCoeff()
         << ")";
      throw ConditioningError(os.str());
    }
  }

  const auto lower = llt.matrixL();
  // C = L^-1 A L^-T
  Eigen::MatrixXd tmp = lower.solve(a);
  Eigen::MatrixXd whitened = lower.solve(tmp.transpose());
  whitened = 0.5 * (whitened + whitened.transpose());

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(whitened);
  if (solver.info() != Eigen::Success)
    throw ConditioningError("generalized eigensolver did not converge");

  SpectralResult out;
  out.eigenvalues = solver.eigenvalues().reverse();
  Eigen::MatrixXd y = solver.eigenvectors().rowwise().reverse();
  out.eigenvectors = llt.matrixU().solve(y);
  detail::fix_signs(out.eigenvectors);
  return out;
}

} // namespace mmatch
