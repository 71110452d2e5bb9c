#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"

#include "mmatch/dissimilarity.hpp"
#include "mmatch/error.hpp"
#include "mmatch/tsv.hpp"

namespace mmatch {

enum class Role { relation_learning, classifier };

inline const char* to_string(Role r) {
  return r == Role::relation_learning ? "relation_learning" : "classifier";
}

inline Role parse_role(const std::string& s) {
  if (s == "relation_learning") return Role::relation_learning;
  if (s == "classifier") return Role::classifier;
  throw ValidationError("unknown role '" + s + "'");
}

using Edge = std::pair<int, int>;

/// One representation space of the corpus. Features, edges and precomputed
/// dissimilarities are each optional; supports() tells which dissimilarity
/// kinds can be produced.
struct Domain {
  std::string name;
  std::optional<Eigen::MatrixXd> features;  // one row per object
  std::optional<std::vector<Edge>> edges;   // object indices, a < b, sorted, unique
  std::map<DissimilarityKind, Eigen::MatrixXd> precomputed;
  GeodesicCap cap;

  bool supports(DissimilarityKind kind) const {
    if (precomputed.count(kind)) return true;
    return kind == DissimilarityKind::graph ? edges.has_value() : features.has_value();
  }
};

/// Matched multi-domain corpus: object i has an entry in every domain.
struct LabeledCorpus {
  std::vector<std::string> object_ids;
  std::vector<int> labels;
  std::vector<Role> roles;
  std::vector<Domain> domains;

  std::size_t size() const { return object_ids.size(); }

  std::vector<int> indices_with(Role r) const {
    std::vector<int> out;
    for (std::size_t i = 0; i < roles.size(); ++i)
      if (roles[i] == r) out.push_back(static_cast<int>(i));
    return out;
  }

  const Domain& domain(const std::string& name) const {
    for (const auto& d : domains)
      if (d.name == name) return d;
    throw ValidationError("corpus has no domain named '" + name + "'");
  }
};

namespace detail {

inline bool same_matrix(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
}

} // namespace detail

/// Exact equality, including every matrix entry.
inline bool operator==(const Domain& a, const Domain& b) {
  if (a.name != b.name || a.cap.threshold != b.cap.threshold || a.cap.cap != b.cap.cap ||
      a.edges != b.edges || a.features.has_value() != b.features.has_value() ||
      a.precomputed.size() != b.precomputed.size())
    return false;
  if (a.features && !detail::same_matrix(*a.features, *b.features)) return false;
  for (const auto& [kind, m] : a.precomputed) {
    auto it = b.precomputed.find(kind);
    if (it == b.precomputed.end() || !detail::same_matrix(m, it->second)) return false;
  }
  return true;
}

inline bool operator==(const LabeledCorpus& a, const LabeledCorpus& b) {
  return a.object_ids == b.object_ids && a.labels == b.labels && a.roles == b.roles &&
         a.domains == b.domains;
}

/// Canonical undirected edge list: self loops removed, endpoints ordered,
/// duplicates merged.
inline std::vector<Edge> canonical_edges(std::vector<Edge> edges) {
  std::vector<Edge> out;
  out.reserve(edges.size());
  for (auto [a, b] : edges) {
    if (a == b) continue;
    out.emplace_back(std::min(a, b), std::max(a, b));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

/// Checks every corpus invariant; throws IntegrityError on the first
/// violation.
inline void validate(const LabeledCorpus& c) {
  const std::size_t n = c.size();
  if (n == 0) throw IntegrityError("corpus has no objects");
  if (c.labels.size() != n || c.roles.size() != n)
    throw IntegrityError("corpus labels/roles do not cover every object");
  std::set<std::string> seen;
  for (const auto& id : c.object_ids)
    if (!seen.insert(id).second) throw IntegrityError("duplicate object id '" + id + "'");
  for (int l : c.labels)
    if (l < 0) throw IntegrityError("negative class label " + std::to_string(l));
  if (c.domains.empty()) throw IntegrityError("corpus has no domains");
  std::set<std::string> names;
  for (const auto& d : c.domains) {
    if (!names.insert(d.name).second) throw IntegrityError("duplicate domain '" + d.name + "'");
    if (d.features && static_cast<std::size_t>(d.features->rows()) != n)
      throw IntegrityError("domain '" + d.name + "' has " + std::to_string(d.features->rows()) +
                           " feature rows for " + std::to_string(n) + " objects");
    if (d.edges)
      for (auto [a, b] : *d.edges)
        if (a < 0 || b < 0 || static_cast<std::size_t>(a) >= n || static_cast<std::size_t>(b) >= n)
          throw IntegrityError("domain '" + d.name + "' has an edge outside the object range");
    for (const auto& [kind, m] : d.precomputed)
      if (static_cast<std::size_t>(m.rows()) != n || static_cast<std::size_t>(m.cols()) != n)
        throw IntegrityError("domain '" + d.name + "' " + to_string(kind) +
                             " dissimilarity is not " + std::to_string(n) + "x" +
                             std::to_string(n));
    if (!d.features && !d.edges && d.precomputed.empty())
      throw IntegrityError("domain '" + d.name + "' has no data");
  }
}

/// Builds the requested dissimilarity over all corpus objects, preferring a
/// precomputed matrix when the domain carries one.
inline DissimilarityMatrix build_dissimilarity(const LabeledCorpus& c, const std::string& domain,
                                               DissimilarityKind kind) {
  const Domain& d = c.domain(domain);
  DissimilarityMatrix out;
  if (auto it = d.precomputed.find(kind); it != d.precomputed.end()) {
    out.values = it->second;
    out.kind = kind;
  } else if (kind == DissimilarityKind::graph) {
    if (!d.edges) throw ValidationError("domain '" + domain + "' has no edge list");
    out = graph_geodesic(*d.edges, static_cast<int>(c.size()), d.cap);
  } else {
    if (!d.features) throw ValidationError("domain '" + domain + "' has no feature vectors");
    out = cosine_dissimilarity(*d.features);
  }
  out.domain_name = domain;
  out.object_ids = c.object_ids;
  return out;
}

// ---------------------------------------------------------------------------
// Class split

struct ClassSplitSpec {
  std::set<int> relation_classes;
  std::set<int> classifier_classes;
};

namespace detail {

inline Domain subset_domain(const Domain& d, const std::vector<int>& keep, std::size_t n_old) {
  Domain out;
  out.name = d.name;
  out.cap = d.cap;
  const auto k = static_cast<Eigen::Index>(keep.size());
  if (d.features) {
    Eigen::MatrixXd f(k, d.features->cols());
    for (Eigen::Index i = 0; i < k; ++i) f.row(i) = d.features->row(keep[i]);
    out.features = std::move(f);
  }
  if (d.edges) {
    std::vector<int> remap(n_old, -1);
    for (std::size_t i = 0; i < keep.size(); ++i) remap[keep[i]] = static_cast<int>(i);
    std::vector<Edge> e;
    for (auto [a, b] : *d.edges)
      if (remap[a] >= 0 && remap[b] >= 0) e.emplace_back(remap[a], remap[b]);
    out.edges = canonical_edges(std::move(e));
  }
  for (const auto& [kind, m] : d.precomputed) {
    Eigen::MatrixXd sub(k, k);
    for (Eigen::Index i = 0; i < k; ++i)
      for (Eigen::Index j = 0; j < k; ++j) sub(i, j) = m(keep[i], keep[j]);
    out.precomputed.emplace(kind, std::move(sub));
  }
  return out;
}

} // namespace detail

/// Reassigns roles by class: relation classes become relation_learning,
/// classifier classes become classifier, everything else is dropped (the
/// number dropped goes to `dropped` when given). Object order is kept.
inline LabeledCorpus apply_class_split(const LabeledCorpus& corpus, const ClassSplitSpec& spec,
                                       std::size_t* dropped = nullptr) {
  for (int c : spec.relation_classes)
    if (spec.classifier_classes.count(c))
      throw ValidationError("class split: class " + std::to_string(c) + " is in both sets");
  const std::set<int> present(corpus.labels.begin(), corpus.labels.end());
  for (const auto* s : {&spec.relation_classes, &spec.classifier_classes})
    for (int c : *s)
      if (!present.count(c))
        throw ValidationError("class split: class " + std::to_string(c) + " not in corpus");

  std::vector<int> keep;
  LabeledCorpus out;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const int l = corpus.labels[i];
    const bool rel = spec.relation_classes.count(l) > 0;
    const bool cls = spec.classifier_classes.count(l) > 0;
    if (!rel && !cls) continue;
    keep.push_back(static_cast<int>(i));
    out.object_ids.push_back(corpus.object_ids[i]);
    out.labels.push_back(l);
    out.roles.push_back(rel ? Role::relation_learning : Role::classifier);
  }
  for (const auto& d : corpus.domains) {
    // Paths through dropped objects still count: freeze the geodesics of the
    // full graph before subsetting.
    if (d.edges && !d.precomputed.count(DissimilarityKind::graph) && keep.size() < corpus.size()) {
      Domain full = d;
      full.precomputed.emplace(DissimilarityKind::graph,
                               graph_geodesic(*d.edges, static_cast<int>(corpus.size()), d.cap).values);
      out.domains.push_back(detail::subset_domain(full, keep, corpus.size()));
    } else {
      out.domains.push_back(detail::subset_domain(d, keep, corpus.size()));
    }
  }
  if (dropped) *dropped = corpus.size() - keep.size();
  return out;
}

// ---------------------------------------------------------------------------
// On-disk format

enum class CorpusFormat { directory };

inline CorpusFormat parse_corpus_format(const std::string& s) {
  if (s == "directory" || s == "manifest") return CorpusFormat::directory;
  throw ValidationError("unknown corpus format '" + s + "'");
}

namespace detail {

inline std::vector<Edge> read_edges(const std::filesystem::path& path,
                                    const std::unordered_map<std::string, int>& index) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<Edge> edges;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto view = trim(line);
    if (view.empty() || view.front() == '#') continue;
    const auto cols = split_tabs(view);
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (cols.size() != 2) throw FormatError(where + ": expected two object ids");
    int ends[2];
    for (int k = 0; k < 2; ++k) {
      auto it = index.find(std::string(trim(cols[k])));
      if (it == index.end())
        throw FormatError(where + ": unknown object id '" + std::string(cols[k]) + "'");
      ends[k] = it->second;
    }
    edges.emplace_back(ends[0], ends[1]);
  }
  return canonical_edges(std::move(edges));
}

} // namespace detail

/// Loads a corpus directory: manifest.json plus per-domain files.
///
/// manifest.json:
///   { "object_ids": [...], "labels": [...], "roles": [...optional...],
///     "domains": [ { "name": ..., "features": "rel/path.tsv",
///                    "edges": "rel/path.tsv",
///                    "dissimilarities": { "graph": "...", "text": "..." },
///                    "graph_cap": { "threshold": 4, "cap": 6 } } ] }
inline LabeledCorpus load_corpus(const std::filesystem::path& dir,
                                 CorpusFormat format = CorpusFormat::directory) {
  (void)format;
  const auto manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open " + manifest_path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  }

  LabeledCorpus c;
  try {
    c.object_ids = j.at("object_ids").get<std::vector<std::string>>();
    c.labels = j.at("labels").get<std::vector<int>>();
    if (j.contains("roles")) {
      for (const auto& r : j.at("roles")) c.roles.push_back(parse_role(r.get<std::string>()));
    } else {
      c.roles.assign(c.object_ids.size(), Role::relation_learning);
    }
    if (c.object_ids.empty()) throw IntegrityError(manifest_path.string() + ": corpus has no objects");
    std::unordered_map<std::string, int> index;
    for (std::size_t i = 0; i < c.object_ids.size(); ++i)
      index.emplace(c.object_ids[i], static_cast<int>(i));

    for (const auto& dj : j.at("domains")) {
      Domain d;
      d.name = dj.at("name").get<std::string>();
      if (dj.contains("graph_cap")) {
        d.cap.threshold = dj["graph_cap"].value("threshold", 4);
        d.cap.cap = dj["graph_cap"].value("cap", 6);
      }
      if (dj.contains("features"))
        d.features = read_matrix_tsv(dir / dj["features"].get<std::string>());
      if (dj.contains("edges"))
        d.edges = detail::read_edges(dir / dj["edges"].get<std::string>(), index);
      if (dj.contains("dissimilarities"))
        for (const auto& [kind, file] : dj["dissimilarities"].items())
          d.precomputed.emplace(parse_dissimilarity_kind(kind),
                                read_matrix_tsv(dir / file.get<std::string>()));
      c.domains.push_back(std::move(d));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  }
  validate(c);
  for (const auto& d : c.domains)
    for (const auto& [kind, m] : d.precomputed) {
      DissimilarityMatrix dm{m, kind, d.name, c.object_ids};
      validate(dm);
    }
  return c;
}

/// Writes `c` in the layout load_corpus reads. Files go to
/// <dir>/<domain>/{features,edges,dissim_<kind>}.tsv.
inline void save_corpus(const LabeledCorpus& c, const std::filesystem::path& dir) {
  validate(c);
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json j;
  j["object_ids"] = c.object_ids;
  j["labels"] = c.labels;
  std::vector<std::string> roles;
  for (auto r : c.roles) roles.emplace_back(to_string(r));
  j["roles"] = roles;
  j["domains"] = nlohmann::ordered_json::array();
  for (const auto& d : c.domains) {
    std::filesystem::create_directories(dir / d.name);
    nlohmann::ordered_json dj;
    dj["name"] = d.name;
    dj["graph_cap"] = {{"threshold", d.cap.threshold}, {"cap", d.cap.cap}};
    if (d.features) {
      write_matrix_tsv(dir / d.name / "features.tsv", *d.features);
      dj["features"] = d.name + "/features.tsv";
    }
    if (d.edges) {
      std::ostringstream os;
      for (auto [a, b] : *d.edges) os << c.object_ids[a] << '\t' << c.object_ids[b] << '\n';
      write_text_atomic(dir / d.name / "edges.tsv", os.str());
      dj["edges"] = d.name + "/edges.tsv";
    }
    if (!d.precomputed.empty()) {
      nlohmann::ordered_json dis;
      for (const auto& [kind, m] : d.precomputed) {
        const std::string file = d.name + "/dissim_" + to_string(kind) + ".tsv";
        write_matrix_tsv(dir / file, m);
        dis[to_string(kind)] = file;
      }
      dj["dissimilarities"] = dis;
    }
    j["domains"].push_back(dj);
  }
  write_text_atomic(dir / "manifest.json", j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Synthetic corpora

/// Knobs of the synthetic generator beyond the five public parameters.
struct SynthShape {
  int latent_dim = 2;
  int feature_dim = 8;
  double class_spread = 1.0;     // per-class latent standard deviation
  double center_scale = 2.5;     // standard deviation of class centers
  double graph_radius = 1.5;     // latent distance below which objects link
  double feature_offset = 15.0;  // keeps features away from the origin
};

/// Deterministic test corpus.
///
/// Latent points are drawn around one Gaussian center per class (label
/// i % n_classes). Each domain sees features A_k (z + noise * e) + c_k and a
/// geometric graph built from z + noise * e' (independent draws), so graph
/// and feature views of one domain carry independent noise of the same kind.
/// Even classes get the relation_learning role, odd classes the classifier
/// role.
inline LabeledCorpus synthesize_corpus(std::uint64_t seed, int n_objects, int k_domains,
                                       int n_classes, double noise, const SynthShape& shape = {}) {
  if (n_classes < 2) throw ValidationError("synthesize_corpus: need at least 2 classes");
  if (n_objects < n_classes)
    throw ValidationError("synthesize_corpus: n_objects (" + std::to_string(n_objects) +
                          ") must be at least n_classes (" + std::to_string(n_classes) + ")");
  if (k_domains < 2) throw ValidationError("synthesize_corpus: need at least 2 domains");
  if (!(noise >= 0.0) || !std::isfinite(noise))
    throw ValidationError("synthesize_corpus: noise must be a nonnegative number");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto gaussian = [&](Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
    return m;
  };

  const int q = shape.latent_dim;
  const Eigen::MatrixXd centers = shape.center_scale * gaussian(n_classes, q);

  LabeledCorpus c;
  Eigen::MatrixXd latent(n_objects, q);
  const Eigen::MatrixXd jitter = shape.class_spread * gaussian(n_objects, q);
  for (int i = 0; i < n_objects; ++i) {
    const int label = i % n_classes;
    char id[32];
    std::snprintf(id, sizeof id, "obj%05d", i);
    c.object_ids.emplace_back(id);
    c.labels.push_back(label);
    c.roles.push_back(label % 2 == 0 ? Role::relation_learning : Role::classifier);
    latent.row(i) = centers.row(label) + jitter.row(i);
  }

  for (int k = 0; k < k_domains; ++k) {
    Domain d;
    d.name = "domain" + std::to_string(k);
    const Eigen::MatrixXd map = gaussian(shape.feature_dim, q);
    Eigen::RowVectorXd offset = gaussian(1, shape.feature_dim);
    offset *= shape.feature_offset / offset.norm();
    Eigen::MatrixXd f = (latent + noise * gaussian(n_objects, q)) * map.transpose();
    f.rowwise() += offset;
    d.features = std::move(f);

    const Eigen::MatrixXd g = latent + noise * gaussian(n_objects, q);
    std::vector<Edge> edges;
    const double r2 = shape.graph_radius * shape.graph_radius;
    for (int i = 0; i < n_objects; ++i) {
      int nearest = -1;
      double best = 0.0;
      for (int j = 0; j < n_objects; ++j) {
        if (j == i) continue;
        const double dist = (g.row(i) - g.row(j)).squaredNorm();
        if (dist < r2) edges.emplace_back(i, j);
        if (nearest < 0 || dist < best) {
          nearest = j;
          best = dist;
        }
      }
      if (nearest >= 0) edges.emplace_back(i, nearest);
    }
    d.edges = canonical_edges(std::move(edges));
    c.domains.push_back(std::move(d));
  }
  validate(c);
  return c;
}

} // namespace mmatch
