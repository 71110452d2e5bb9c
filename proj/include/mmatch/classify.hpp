#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "mmatch/error.hpp"
#include "mmatch/mds.hpp"

namespace mmatch {

/// Points in the shared space with their class labels and a tag naming the
/// view they came from (GE, GF, TF, ...).
struct LabeledEmbedding {
  EmbeddingMatrix points;
  std::vector<int> labels;
  std::string view_tag;

  Eigen::Index size() const { return points.rows(); }
};

inline constexpr int kDefaultKappa = 5;

namespace detail {

inline void check_labeled(const LabeledEmbedding& e, const char* who) {
  if (static_cast<Eigen::Index>(e.labels.size()) != e.points.rows())
    throw IntegrityError(std::string(who) + ": label count does not match point count");
  if (!e.points.allFinite())
    throw ValidationError(std::string(who) + ": non-finite coordinates");
}

} // namespace detail

/// Majority vote among the kappa nearest training rows, optionally ignoring
/// row `exclude`.
///
/// Neighbors are ordered by (distance, row index), so a distance tie at the
/// kappa-th place admits the smallest index. A vote tie goes to the tied
/// class with the smallest mean neighbor distance, then the smallest label.
inline int knn_predict(const LabeledEmbedding& train, const Eigen::VectorXd& query, int kappa,
                       std::optional<Eigen::Index> exclude = std::nullopt) {
  const Eigen::Index n = train.size();
  const Eigen::Index available = n - (exclude && *exclude >= 0 && *exclude < n ? 1 : 0);
  if (available <= 0) throw ValidationError("knn_predict: empty training set");
  if (kappa < 1 || kappa > available)
    throw ValidationError("knn_predict: kappa " + std::to_string(kappa) + " outside [1, " +
                          std::to_string(available) + "]");
  if (query.size() != train.points.cols())
    throw ValidationError("knn_predict: query dimension does not match training points");

  std::vector<std::pair<double, Eigen::Index>> cand;
  cand.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    if (exclude && i == *exclude) continue;
    cand.emplace_back((train.points.row(i).transpose() - query).squaredNorm(), i);
  }
  std::partial_sort(cand.begin(), cand.begin() + kappa, cand.end());

  struct Tally {
    int votes = 0;
    double dist = 0.0;
  };
  std::map<int, Tally> tally;
  for (int j = 0; j < kappa; ++j) {
    auto& t = tally[train.labels[cand[j].second]];
    ++t.votes;
    t.dist += std::sqrt(cand[j].first);
  }
  // std::map iterates labels ascending, so strict comparisons keep the
  // smallest label on a full tie.
  int best = tally.begin()->first;
  const Tally* bt = &tally.begin()->second;
  for (const auto& [label, t] : tally) {
    if (t.votes > bt->votes ||
        (t.votes == bt->votes && t.dist / t.votes < bt->dist / bt->votes)) {
      best = label;
      bt = &t;
    }
  }
  return best;
}

/// Per-object outcome of a cross-view leave-one-out run.
struct LooResult {
  std::vector<bool> correct;
  int errors = 0;

  double accuracy() const {
    return correct.empty() ? 0.0
                           : 1.0 - static_cast<double>(errors) / static_cast<double>(correct.size());
  }
};

/// Each row i of `test_view` is classified by kappa-NN over the rows of
/// `train_view` other than i. Both views must describe the same objects in
/// the same order.
inline LooResult loo_cross_view(const LabeledEmbedding& train_view,
                                const LabeledEmbedding& test_view, int kappa = kDefaultKappa) {
  detail::check_labeled(train_view, "loo_cross_view_accuracy");
  detail::check_labeled(test_view, "loo_cross_view_accuracy");
  if (train_view.labels != test_view.labels)
    throw IntegrityError("loo_cross_view_accuracy: views are not matched (labels differ)");
  if (train_view.points.cols() != test_view.points.cols())
    throw IntegrityError("loo_cross_view_accuracy: views have different dimensions");
  LooResult res;
  const Eigen::Index m = test_view.size();
  res.correct.resize(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) {
    const int predicted = knn_predict(train_view, test_view.points.row(i).transpose(), kappa, i);
    res.correct[i] = predicted == test_view.labels[i];
    if (!res.correct[i]) ++res.errors;
  }
  return res;
}

inline double loo_cross_view_accuracy(const LabeledEmbedding& train_view,
                                      const LabeledEmbedding& test_view, int kappa = kDefaultKappa) {
  return loo_cross_view(train_view, test_view, kappa).accuracy();
}

/// Tag of an averaged view: the two tags with their common suffix written
/// once, so GF + TF gives GTF.
inline std::string merged_view_tag(const std::string& a, const std::string& b) {
  std::size_t common = 0;
  while (common < a.size() && common < b.size() &&
         a[a.size() - 1 - common] == b[b.size() - 1 - common])
    ++common;
  return a.substr(0, a.size() - common) + b.substr(0, b.size() - common) +
         a.substr(a.size() - common);
}

/// Pointwise mean of two matched views.
inline LabeledEmbedding average_views(const LabeledEmbedding& a, const LabeledEmbedding& b) {
  detail::check_labeled(a, "average_views");
  detail::check_labeled(b, "average_views");
  if (a.labels != b.labels) throw IntegrityError("average_views: labels differ");
  if (a.points.rows() != b.points.rows() || a.points.cols() != b.points.cols())
    throw IntegrityError("average_views: shapes differ");
  LabeledEmbedding out;
  out.points = 0.5 * (a.points + b.points);
  out.labels = a.labels;
  out.view_tag = merged_view_tag(a.view_tag, b.view_tag);
  return out;
}

} // namespace mmatch
