#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "mmatch/error.hpp"

namespace mmatch {

enum class DissimilarityKind { graph, text };

inline const char* to_string(DissimilarityKind k) {
  return k == DissimilarityKind::graph ? "graph" : "text";
}

inline DissimilarityKind parse_dissimilarity_kind(const std::string& s) {
  if (s == "graph") return DissimilarityKind::graph;
  if (s == "text") return DissimilarityKind::text;
  throw ValidationError("unknown dissimilarity kind '" + s + "' (expected graph or text)");
}

/// Square, symmetric, nonnegative matrix with zero diagonal over the objects
/// of one domain.
struct DissimilarityMatrix {
  Eigen::MatrixXd values;
  DissimilarityKind kind = DissimilarityKind::text;
  std::string domain_name;
  std::vector<std::string> object_ids;

  Eigen::Index size() const { return values.rows(); }
};

/// Checks squareness, symmetry (1e-12 absolute), zero diagonal and
/// nonnegativity. Throws ValidationError with the first offending entry.
inline void validate(const DissimilarityMatrix& m) {
  const auto& v = m.values;
  if (v.rows() != v.cols())
    throw ValidationError("dissimilarity matrix must be square");
  if (!m.object_ids.empty() && static_cast<Eigen::Index>(m.object_ids.size()) != v.rows())
    throw ValidationError("dissimilarity matrix object index does not match its size");
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    if (v(i, i) != 0.0)
      throw ValidationError("dissimilarity diagonal entry " + std::to_string(i) + " is nonzero");
    for (Eigen::Index j = 0; j < v.cols(); ++j) {
      if (!std::isfinite(v(i, j)) || v(i, j) < 0.0)
        throw ValidationError("dissimilarity entry (" + std::to_string(i) + "," +
                              std::to_string(j) + ") is negative or not finite");
      if (std::abs(v(i, j) - v(j, i)) > 1e-12)
        throw ValidationError("dissimilarity matrix is not symmetric at (" + std::to_string(i) +
                              "," + std::to_string(j) + ")");
    }
  }
}

/// Capping rule for hop counts: lengths above `threshold` (including
/// unreachable pairs) are replaced by `cap`.
struct GeodesicCap {
  int threshold = 4;
  int cap = 6;
};

/// All-pairs hop distances of an unweighted undirected graph, one BFS per
/// source vertex, with the capping rule applied.
inline DissimilarityMatrix graph_geodesic(const std::vector<std::pair<int, int>>& edges, int n,
                                          GeodesicCap rule = {}) {
  if (n < 0) throw ValidationError("graph_geodesic: negative object count");
  if (rule.cap <= 0 || rule.threshold < 0)
    throw ValidationError("graph_geodesic: cap must be positive and threshold nonnegative");
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(n));
  for (const auto& [a, b] : edges) {
    if (a < 0 || b < 0 || a >= n || b >= n)
      throw ValidationError("graph_geodesic: edge (" + std::to_string(a) + "," +
                            std::to_string(b) + ") has an endpoint outside [0," +
                            std::to_string(n) + ")");
    if (a == b) continue;
    adj[a].push_back(b);
    adj[b].push_back(a);
  }

  DissimilarityMatrix out;
  out.kind = DissimilarityKind::graph;
  out.values = Eigen::MatrixXd::Constant(n, n, static_cast<double>(rule.cap));
  std::vector<int> dist(static_cast<std::size_t>(n));
  std::deque<int> queue;
  for (int s = 0; s < n; ++s) {
    std::fill(dist.begin(), dist.end(), -1);
    dist[s] = 0;
    queue.assign(1, s);
    while (!queue.empty()) {
      const int u = queue.front();
      queue.pop_front();
      // nothing beyond the threshold survives capping
      if (dist[u] >= rule.threshold) continue;
      for (int w : adj[u]) {
        if (dist[w] < 0) {
          dist[w] = dist[u] + 1;
          queue.push_back(w);
        }
      }
    }
    for (int t = 0; t < n; ++t)
      if (dist[t] >= 0) out.values(s, t) = dist[t];
  }
  return out;
}

/// 1 - cos(f_i, f_j) for every pair of feature rows. Self-similarity is
/// forced to exactly 1 so the diagonal is exactly 0.
inline DissimilarityMatrix cosine_dissimilarity(const Eigen::MatrixXd& features) {
  const Eigen::Index n = features.rows();
  if (!features.allFinite()) throw ValidationError("cosine_dissimilarity: non-finite feature");
  Eigen::VectorXd norms = features.rowwise().norm();
  for (Eigen::Index i = 0; i < n; ++i)
    if (norms(i) == 0.0)
      throw ValidationError("cosine_dissimilarity: feature row " + std::to_string(i) +
                            " has zero norm");
  const Eigen::MatrixXd unit = norms.cwiseInverse().asDiagonal() * features;
  Eigen::MatrixXd sim = unit * unit.transpose();

  DissimilarityMatrix out;
  out.kind = DissimilarityKind::text;
  out.values.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.values(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double s = std::clamp(0.5 * (sim(i, j) + sim(j, i)), -1.0, 1.0);
      out.values(i, j) = out.values(j, i) = 1.0 - s;
    }
  }
  return out;
}

/// Rescales `target` so that its Frobenius norm equals the reference's.
inline DissimilarityMatrix frobenius_prescale(const DissimilarityMatrix& target,
                                              const DissimilarityMatrix& reference) {
  const double tnorm = target.values.norm();
  if (!(tnorm > 0.0)) throw ValidationError("frobenius_prescale: target has zero Frobenius norm");
  DissimilarityMatrix out = target;
  const double rnorm = reference.values.norm();
  if (tnorm == rnorm) return out;
  out.values *= rnorm / tnorm;
  return out;
}

/// The factor frobenius_prescale would apply; used to carry the same scaling
/// over to out-of-sample dissimilarities.
inline double frobenius_scale_factor(const Eigen::MatrixXd& target,
                                     const Eigen::MatrixXd& reference) {
  const double tnorm = target.norm();
  if (!(tnorm > 0.0)) throw ValidationError("frobenius_prescale: target has zero Frobenius norm");
  const double rnorm = reference.norm();
  return tnorm == rnorm ? 1.0 : rnorm / tnorm;
}

} // namespace mmatch
