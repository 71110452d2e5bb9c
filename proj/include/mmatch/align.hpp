#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "mmatch/error.hpp"
#include "mmatch/mds.hpp"
#include "mmatch/numerics.hpp"
#include "mmatch/tsv.hpp"

namespace mmatch {

enum class AlignMethod { cca, gcca };

inline const char* to_string(AlignMethod m) { return m == AlignMethod::cca ? "cca" : "gcca"; }

inline AlignMethod parse_align_method(const std::string& s) {
  if (s == "cca") return AlignMethod::cca;
  if (s == "gcca") return AlignMethod::gcca;
  throw ValidationError("unknown alignment method '" + s + "' (expected cca or gcca)");
}

/// Per-view linear maps into the shared space R^d.
///
/// Column l of every projection is scaled so that the mean over views of the
/// squared norms of the projected training data is 1; for two views each
/// view's projected column then has unit norm. `view_means` are the column
/// means removed before fitting and are removed again by project().
struct AlignmentMaps {
  std::vector<Eigen::MatrixXd> projections;      // p_k x d
  std::vector<Eigen::RowVectorXd> view_means;    // 1 x p_k
  Eigen::VectorXd correlations;                  // d, descending
  AlignMethod method = AlignMethod::gcca;
  double ridge = 0.0;

  int dim() const { return static_cast<int>(correlations.size()); }
  int views() const { return static_cast<int>(projections.size()); }
};

namespace detail {

inline void check_views(const std::vector<EmbeddingMatrix>& views, int d, const char* who) {
  const std::string w(who);
  if (views.size() < 2) throw ValidationError(w + ": need at least two views");
  const Eigen::Index n = views.front().rows();
  Eigen::Index min_cols = views.front().cols();
  for (std::size_t g = 0; g < views.size(); ++g) {
    if (views[g].rows() != n)
      throw ValidationError(w + ": view " + std::to_string(g + 1) + " has " +
                            std::to_string(views[g].rows()) + " rows, expected " +
                            std::to_string(n));
    if (!views[g].allFinite())
      throw ValidationError(w + ": view " + std::to_string(g + 1) + " has non-finite entries");
    min_cols = std::min(min_cols, views[g].cols());
  }
  if (n < 2) throw ValidationError(w + ": need at least two matched objects");
  if (d < 1 || d > min_cols || d > n - 1)
    throw ValidationError(w + ": shared dimension " + std::to_string(d) + " outside [1, " +
                          std::to_string(std::min<Eigen::Index>(min_cols, n - 1)) + "]");
}

inline double default_align_ridge(const Eigen::VectorXd& block_diagonal) {
  return block_diagonal.size() ? 1e-8 * block_diagonal.mean() : 0.0;
}

// Cholesky of a ridge-loaded SPD block with the same single fallback as
// eig_sym_generalized.
inline Eigen::LLT<Eigen::MatrixXd> loaded_cholesky(const Eigen::MatrixXd& c, double ridge) {
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(c.rows(), c.cols());
  Eigen::LLT<Eigen::MatrixXd> llt(c + ridge * eye);
  if (llt.info() != Eigen::Success) {
    llt.compute(c + (ridge + default_cholesky_ridge(c)) * eye);
    if (llt.info() != Eigen::Success) {
      Eigen::LDLT<Eigen::MatrixXd> ldlt(c + ridge * eye);
      throw ConditioningError("auto-covariance is not positive-definite even after ridge "
                              "(smallest pivot " +
                              std::to_string(ldlt.vectorD().minCoeff()) + ")");
    }
  }
  return llt;
}

// Reorders the columns of every projection (and the correlations) into
// descending correlation order. Stable, so equal correlations keep solver
// order.
inline void sort_by_correlation(AlignmentMaps& maps) {
  const int d = maps.dim();
  std::vector<int> order(static_cast<std::size_t>(d));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return maps.correlations(a) > maps.correlations(b); });
  Eigen::VectorXd rho(d);
  for (int l = 0; l < d; ++l) rho(l) = maps.correlations(order[l]);
  maps.correlations = rho;
  for (auto& u : maps.projections) {
    Eigen::MatrixXd sorted(u.rows(), d);
    for (int l = 0; l < d; ++l) sorted.col(l) = u.col(order[l]);
    u = std::move(sorted);
  }
}

} // namespace detail

/// Two-view canonical correlation analysis.
///
/// With centered views X1, X2 and C_ab = X_a^T X_b, the canonical directions
/// of view 1 solve the symmetric-definite problem
///   C12 (C22 + rI)^-1 C21 u1 = rho^2 (C11 + rI) u1,
/// and u2 = (C22 + rI)^-1 C21 u1 / rho. Each projected column X_g u_g is
/// scaled to unit norm and rho is reported as their inner product.
inline AlignmentMaps cca_fit(const EmbeddingMatrix& x1, const EmbeddingMatrix& x2, int d,
                             std::optional<double> ridge = std::nullopt) {
  detail::check_views({x1, x2}, d, "cca_fit");
  AlignmentMaps maps;
  maps.method = AlignMethod::cca;
  maps.view_means = {x1.colwise().mean(), x2.colwise().mean()};
  const Eigen::MatrixXd a = x1.rowwise() - maps.view_means[0];
  const Eigen::MatrixXd b = x2.rowwise() - maps.view_means[1];

  const Eigen::MatrixXd c11 = a.transpose() * a;
  const Eigen::MatrixXd c22 = b.transpose() * b;
  const Eigen::MatrixXd c12 = a.transpose() * b;
  Eigen::VectorXd diag(c11.rows() + c22.rows());
  diag << c11.diagonal(), c22.diagonal();
  const double r = ridge.value_or(detail::default_align_ridge(diag));
  if (r < 0.0 || !std::isfinite(r)) throw ValidationError("cca_fit: ridge must be nonnegative");
  maps.ridge = r;

  const auto llt22 = detail::loaded_cholesky(c22, r);
  const Eigen::MatrixXd c22_inv_c21 = llt22.solve(c12.transpose());
  Eigen::MatrixXd lhs = c12 * c22_inv_c21;
  lhs = 0.5 * (lhs + lhs.transpose());
  const SpectralResult side1 = eig_sym_generalized(lhs, c11, r);

  std::optional<SpectralResult> side2;
  const double scale = std::max(1.0, std::abs(side1.eigenvalues(0)));

  Eigen::MatrixXd u1(a.cols(), d), u2(b.cols(), d);
  maps.correlations.resize(d);
  for (int l = 0; l < d; ++l) {
    const double lambda = side1.eigenvalues(l);
    Eigen::VectorXd v1 = side1.eigenvectors.col(l);
    Eigen::VectorXd v2;
    if (lambda > 1e-14 * scale) {
      v2 = c22_inv_c21 * v1 / std::sqrt(lambda);
    } else {
      // No cross-correlation left in this direction; use the matching
      // direction of the view-2 problem so the column is still normalized.
      if (!side2) {
        const auto llt11 = detail::loaded_cholesky(c11, r);
        Eigen::MatrixXd rhs = c12.transpose() * llt11.solve(c12);
        rhs = 0.5 * (rhs + rhs.transpose());
        side2 = eig_sym_generalized(rhs, c22, r);
      }
      v2 = side2->eigenvectors.col(l);
    }
    const double n1 = (a * v1).norm();
    const double n2 = (b * v2).norm();
    if (n1 > 0.0) v1 /= n1;
    if (n2 > 0.0) v2 /= n2;
    u1.col(l) = v1;
    u2.col(l) = v2;
    maps.correlations(l) = (a * v1).dot(b * v2);
  }
  maps.projections = {std::move(u1), std::move(u2)};
  detail::sort_by_correlation(maps);
  return maps;
}

/// K-view generalized canonical correlation analysis.
///
/// Solves R u = lambda (D + rI) u where R holds the cross-products
/// X_g^T X_h for g != h (zero diagonal blocks), D = blockdiag(X_g^T X_g),
/// and u stacks the per-view directions. Every column is rescaled so that
/// (1/K) sum_g ||X_g u_g||^2 = 1; the reported correlation is
///   rho = 1/(K(K-1)) sum_{g != h} (X_g u_g)^T (X_h u_h),
/// which equals lambda / (K - 1) when r = 0.
inline AlignmentMaps gcca_fit(const std::vector<EmbeddingMatrix>& views, int d,
                              std::optional<double> ridge = std::nullopt) {
  detail::check_views(views, d, "gcca_fit");
  const int k = static_cast<int>(views.size());
  AlignmentMaps maps;
  maps.method = AlignMethod::gcca;

  std::vector<Eigen::MatrixXd> centered;
  std::vector<Eigen::Index> offset{0};
  for (const auto& v : views) {
    maps.view_means.push_back(v.colwise().mean());
    centered.push_back(v.rowwise() - maps.view_means.back());
    offset.push_back(offset.back() + v.cols());
  }
  const Eigen::Index total = offset.back();

  Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(total, total);
  Eigen::MatrixXd auto_cov = Eigen::MatrixXd::Zero(total, total);
  for (int g = 0; g < k; ++g)
    for (int h = g; h < k; ++h) {
      const Eigen::MatrixXd block = centered[g].transpose() * centered[h];
      auto& target = (g == h) ? auto_cov : cross;
      target.block(offset[g], offset[h], block.rows(), block.cols()) = block;
      if (g != h) target.block(offset[h], offset[g], block.cols(), block.rows()) = block.transpose();
    }
  auto_cov = 0.5 * (auto_cov + auto_cov.transpose());

  const double r = ridge.value_or(detail::default_align_ridge(auto_cov.diagonal()));
  if (r < 0.0 || !std::isfinite(r)) throw ValidationError("gcca_fit: ridge must be nonnegative");
  maps.ridge = r;

  const SpectralResult spec = eig_sym_generalized(cross, auto_cov, r);

  for (int g = 0; g < k; ++g) maps.projections.emplace_back(views[g].cols(), d);
  maps.correlations.resize(d);
  std::vector<Eigen::VectorXd> projected(static_cast<std::size_t>(k));
  for (int l = 0; l < d; ++l) {
    const Eigen::VectorXd u = spec.eigenvectors.col(l);
    double energy = 0.0;
    for (int g = 0; g < k; ++g) {
      projected[g] = centered[g] * u.segment(offset[g], views[g].cols());
      energy += projected[g].squaredNorm();
    }
    const double s = energy > 0.0 ? std::sqrt(static_cast<double>(k) / energy) : 1.0;
    double cross_sum = 0.0;
    for (int g = 0; g < k; ++g)
      for (int h = 0; h < k; ++h)
        if (g != h) cross_sum += projected[g].dot(projected[h]);
    for (int g = 0; g < k; ++g)
      maps.projections[g].col(l) = s * u.segment(offset[g], views[g].cols());
    maps.correlations(l) = s * s * cross_sum / (static_cast<double>(k) * (k - 1));
  }
  detail::sort_by_correlation(maps);
  return maps;
}

/// Maps points of view `view_index` (0-based) into the shared space:
/// (points - training mean) * U_k.
inline EmbeddingMatrix project(const AlignmentMaps& maps, int view_index,
                               const EmbeddingMatrix& points) {
  if (view_index < 0 || view_index >= maps.views())
    throw ValidationError("project: view index " + std::to_string(view_index) + " out of range");
  const auto& u = maps.projections[view_index];
  if (points.cols() != u.rows())
    throw ValidationError("project: points have " + std::to_string(points.cols()) +
                          " columns, view " + std::to_string(view_index + 1) + " expects " +
                          std::to_string(u.rows()));
  return (points.rowwise() - maps.view_means[view_index]) * u;
}

/// Mean squared distance between matched rows.
inline double commensurability_error(const EmbeddingMatrix& a, const EmbeddingMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ValidationError("commensurability_error: shapes differ");
  if (a.rows() == 0) throw ValidationError("commensurability_error: no rows");
  return (a - b).rowwise().squaredNorm().sum() / static_cast<double>(a.rows());
}

/// Writes U_1.tsv .. U_K.tsv, correlations.tsv and meta.json into `dir`.
inline void save_alignment(const AlignmentMaps& maps, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (int g = 0; g < maps.views(); ++g)
    write_matrix_tsv(dir / ("U_" + std::to_string(g + 1) + ".tsv"), maps.projections[g]);
  write_matrix_tsv(dir / "correlations.tsv", Eigen::MatrixXd(maps.correlations));
  nlohmann::ordered_json meta;
  meta["method"] = to_string(maps.method);
  meta["d"] = maps.dim();
  meta["K"] = maps.views();
  meta["ridge"] = maps.ridge;
  auto means = nlohmann::json::array();
  for (const auto& m : maps.view_means) means.push_back(std::vector<double>(m.data(), m.data() + m.size()));
  meta["view_means"] = means;
  write_text_atomic(dir / "meta.json", meta.dump(2) + "\n");
}

inline AlignmentMaps load_alignment(const std::filesystem::path& dir) {
  std::ifstream in(dir / "meta.json");
  if (!in) throw IoError("cannot open " + (dir / "meta.json").string());
  nlohmann::json meta;
  try {
    in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError((dir / "meta.json").string() + ": " + e.what());
  }
  AlignmentMaps maps;
  try {
    maps.method = parse_align_method(meta.at("method").get<std::string>());
    maps.ridge = meta.at("ridge").get<double>();
    const int k = meta.at("K").get<int>();
    const int d = meta.at("d").get<int>();
    const auto& means = meta.at("view_means");
    for (int g = 0; g < k; ++g) {
      maps.projections.push_back(read_matrix_tsv(dir / ("U_" + std::to_string(g + 1) + ".tsv")));
      const auto m = means.at(g).get<std::vector<double>>();
      maps.view_means.push_back(Eigen::Map<const Eigen::RowVectorXd>(m.data(), static_cast<Eigen::Index>(m.size())));
      if (maps.projections.back().cols() != d ||
          maps.projections.back().rows() != maps.view_means.back().cols())
        throw IntegrityError("U_" + std::to_string(g + 1) + ".tsv does not match meta.json");
    }
    const Eigen::MatrixXd rho = read_matrix_tsv(dir / "correlations.tsv");
    if (rho.rows() != d || rho.cols() != 1)
      throw IntegrityError("correlations.tsv does not match meta.json");
    maps.correlations = rho.col(0);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError((dir / "meta.json").string() + ": " + e.what());
  }
  return maps;
}

} // namespace mmatch
