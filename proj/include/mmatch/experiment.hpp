#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "mmatch/align.hpp"
#include "mmatch/classify.hpp"
#include "mmatch/data.hpp"
#include "mmatch/dissimilarity.hpp"
#include "mmatch/error.hpp"
#include "mmatch/mds.hpp"
#include "mmatch/tsv.hpp"

namespace mmatch {

// ---------------------------------------------------------------------------
// Seeds

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t replicate_seed(std::uint64_t seed, std::size_t row, std::size_t replicate) {
  return splitmix64(splitmix64(splitmix64(seed) + row) + replicate);
}

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// ---------------------------------------------------------------------------
// Schedule

struct ScheduleRow {
  int n_prime = 0;
  double fraction = 0.0;
  int mds_dim = 0;
};

/// n' / fraction / d' rows plus the d'' = floor(d'/2) rule for regularized
/// runs.
struct DimensionSchedule {
  std::vector<ScheduleRow> rows;

  static int regularized_dim(int mds_dim) { return mds_dim / 2; }

  int dim_for(std::size_t row, bool regularized) const {
    return regularized ? regularized_dim(rows[row].mds_dim) : rows[row].mds_dim;
  }
};

inline void validate(const DimensionSchedule& s) {
  if (s.rows.empty()) throw ConfigError("schedule has no rows");
  double prev = 0.0;
  for (std::size_t i = 0; i < s.rows.size(); ++i) {
    const auto& r = s.rows[i];
    const std::string where = "schedule row " + std::to_string(i + 1) + " (n'=" +
                              std::to_string(r.n_prime) + ")";
    if (!(r.fraction > prev) || r.fraction > 1.0)
      throw ConfigError(where + ": fractions must increase strictly within (0, 1]");
    if (r.mds_dim < 1 || r.mds_dim >= r.n_prime)
      throw ConfigError(where + ": MDS dimension " + std::to_string(r.mds_dim) +
                        " must lie in [1, n'-1]");
    prev = r.fraction;
  }
}

/// The ten-row reference schedule for 819 relation-learning objects.
inline const std::vector<ScheduleRow>& reference_schedule() {
  static const std::vector<ScheduleRow> rows = {
      {82, 0.1, 40},   {164, 0.2, 80},  {246, 0.3, 100}, {328, 0.4, 100}, {410, 0.5, 150},
      {491, 0.6, 150}, {573, 0.7, 150}, {655, 0.8, 200}, {737, 0.9, 200}, {819, 1.0, 200}};
  return rows;
}

/// Reference schedule rescaled to `n_available` objects: n' = round(S n),
/// d' = min(reference d', n' - 1). `fractions` selects a subset of rows
/// (all rows when empty).
inline DimensionSchedule scaled_schedule(int n_available, const std::vector<double>& fractions = {}) {
  DimensionSchedule s;
  for (const auto& ref : reference_schedule()) {
    if (!fractions.empty() &&
        std::none_of(fractions.begin(), fractions.end(),
                     [&](double f) { return std::abs(f - ref.fraction) < 1e-9; }))
      continue;
    ScheduleRow r;
    r.fraction = ref.fraction;
    r.n_prime = static_cast<int>(std::lround(ref.fraction * n_available));
    r.mds_dim = std::min(ref.mds_dim, r.n_prime - 1);
    s.rows.push_back(r);
  }
  if (!fractions.empty() && s.rows.size() != fractions.size())
    throw ConfigError("schedule fractions must be a subset of 0.1, 0.2, ..., 1.0");
  return s;
}

// ---------------------------------------------------------------------------
// Configuration

struct ViewSpec {
  std::string name;    // GE, GF, TF, ...
  std::string domain;
  DissimilarityKind kind = DissimilarityKind::graph;
};

/// Classifier trained on the (averaged) `train` views, tested on `test`.
struct Combination {
  std::vector<std::string> train;
  std::string test;

  std::string train_tag() const {
    std::string tag = train.front();
    for (std::size_t i = 1; i < train.size(); ++i) tag = merged_view_tag(tag, train[i]);
    return tag;
  }
  std::string label() const { return train_tag() + "->" + test; }
};

/// Parses "GF->GE" or "GF+TF->GE".
inline Combination parse_combination(const std::string& s) {
  const auto arrow = s.find("->");
  if (arrow == std::string::npos) throw ConfigError("combination '" + s + "' lacks '->'");
  Combination c;
  c.test = s.substr(arrow + 2);
  std::string lhs = s.substr(0, arrow);
  std::size_t start = 0;
  while (true) {
    auto plus = lhs.find('+', start);
    c.train.push_back(lhs.substr(start, plus - start));
    if (plus == std::string::npos) break;
    start = plus + 1;
  }
  if (c.test.empty() || c.train.size() > 2 ||
      std::any_of(c.train.begin(), c.train.end(), [](const std::string& t) { return t.empty(); }))
    throw ConfigError("combination '" + s + "' must look like A->B or A+B->B");
  return c;
}

struct SynthSource {
  std::uint64_t seed = 1;
  int objects = 200;
  int domains = 2;
  int classes = 5;
  double noise = 0.1;
  SynthShape shape;
};

struct ExperimentConfig {
  std::filesystem::path corpus;
  std::optional<SynthSource> synthetic;
  std::optional<ClassSplitSpec> class_split;
  std::vector<ViewSpec> views;
  std::string reference_view;               // defaults to the first graph view
  std::vector<AlignMethod> methods{AlignMethod::cca, AlignMethod::gcca};
  std::vector<bool> regimes{false};         // false: d', true: d'' = d'/2
  int shared_dim = 15;
  int kappa = kDefaultKappa;
  std::optional<DimensionSchedule> schedule;  // explicit rows
  std::vector<double> fractions;              // subset of the reference rows
  int replicates = 200;
  std::uint64_t seed = 0;
  std::vector<Combination> combinations;
  std::string feature = "text";
  int bootstrap_resamples = 1000;
  std::optional<double> ridge;
  int threads = 1;
};

namespace detail {

template <class T>
std::vector<T> one_or_many(const nlohmann::json& j) {
  if (j.is_array()) return j.get<std::vector<T>>();
  return {j.get<T>()};
}

} // namespace detail

/// Reads the JSON config. Relative corpus paths resolve against `base_dir`.
inline ExperimentConfig parse_experiment_config(const nlohmann::json& j,
                                                const std::filesystem::path& base_dir = {}) {
  ExperimentConfig c;
  try {
    static const std::set<std::string> known = {
        "corpus", "synthetic", "class_split", "views", "reference_view", "methods", "method",
        "regularized", "d", "kappa", "schedule", "fractions", "replicates", "seed",
        "combinations", "feature", "bootstrap_resamples", "ridge", "threads"};
    for (const auto& [key, _] : j.items())
      if (!known.count(key)) throw ConfigError("unknown config field '" + key + "'");

    if (j.contains("corpus")) {
      std::filesystem::path p = j["corpus"].get<std::string>();
      c.corpus = p.is_relative() ? base_dir / p : p;
    }
    if (j.contains("synthetic")) {
      const auto& s = j["synthetic"];
      SynthSource src;
      src.seed = s.value("seed", src.seed);
      src.objects = s.value("objects", src.objects);
      src.domains = s.value("domains", src.domains);
      src.classes = s.value("classes", src.classes);
      src.noise = s.value("noise", src.noise);
      if (s.contains("shape")) {
        const auto& sh = s["shape"];
        auto& d = src.shape;
        d.latent_dim = sh.value("latent_dim", d.latent_dim);
        d.feature_dim = sh.value("feature_dim", d.feature_dim);
        d.class_spread = sh.value("class_spread", d.class_spread);
        d.center_scale = sh.value("center_scale", d.center_scale);
        d.graph_radius = sh.value("graph_radius", d.graph_radius);
        d.feature_offset = sh.value("feature_offset", d.feature_offset);
      }
      c.synthetic = src;
    }
    if (c.corpus.empty() == !c.synthetic)
      throw ConfigError("config needs exactly one of 'corpus' or 'synthetic'");
    if (j.contains("class_split")) {
      ClassSplitSpec s;
      for (int v : j["class_split"].at("relation").get<std::vector<int>>()) s.relation_classes.insert(v);
      for (int v : j["class_split"].at("classifier").get<std::vector<int>>()) s.classifier_classes.insert(v);
      c.class_split = s;
    }
    for (const auto& v : j.at("views")) {
      ViewSpec vs;
      vs.name = v.at("name").get<std::string>();
      vs.domain = v.at("domain").get<std::string>();
      vs.kind = parse_dissimilarity_kind(v.at("kind").get<std::string>());
      c.views.push_back(vs);
    }
    c.reference_view = j.value("reference_view", std::string{});
    const char* method_key = j.contains("methods") ? "methods" : (j.contains("method") ? "method" : nullptr);
    if (method_key) {
      c.methods.clear();
      for (const auto& m : detail::one_or_many<std::string>(j[method_key]))
        c.methods.push_back(parse_align_method(m));
    }
    if (j.contains("regularized")) c.regimes = detail::one_or_many<bool>(j["regularized"]);
    c.shared_dim = j.value("d", c.shared_dim);
    c.kappa = j.value("kappa", c.kappa);
    if (j.contains("schedule")) {
      DimensionSchedule s;
      for (const auto& r : j["schedule"]) {
        ScheduleRow row;
        row.n_prime = r.at("n_prime").get<int>();
        row.mds_dim = r.at("d_prime").get<int>();
        row.fraction = r.value("fraction", 0.0);
        s.rows.push_back(row);
      }
      c.schedule = s;
    }
    if (j.contains("fractions")) c.fractions = j["fractions"].get<std::vector<double>>();
    c.replicates = j.value("replicates", c.replicates);
    c.seed = j.value("seed", c.seed);
    if (j.contains("combinations"))
      for (const auto& s : j["combinations"]) c.combinations.push_back(parse_combination(s.get<std::string>()));
    c.feature = j.value("feature", c.feature);
    c.bootstrap_resamples = j.value("bootstrap_resamples", c.bootstrap_resamples);
    if (j.contains("ridge")) c.ridge = j["ridge"].get<double>();
    c.threads = j.value("threads", c.threads);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }

  if (c.views.size() < 2) throw ConfigError("config needs at least two views");
  std::set<std::string> names;
  for (const auto& v : c.views)
    if (!names.insert(v.name).second) throw ConfigError("duplicate view name '" + v.name + "'");
  if (c.reference_view.empty()) {
    for (const auto& v : c.views)
      if (v.kind == DissimilarityKind::graph) {
        c.reference_view = v.name;
        break;
      }
    if (c.reference_view.empty()) c.reference_view = c.views.front().name;
  }
  if (!names.count(c.reference_view))
    throw ConfigError("reference view '" + c.reference_view + "' is not a configured view");
  if (c.combinations.empty()) {
    if (names.count("GE") && names.count("GF")) c.combinations.push_back(parse_combination("GF->GE"));
    if (names.count("GE") && names.count("TF")) c.combinations.push_back(parse_combination("TF->GE"));
    if (names.count("GE") && names.count("GF") && names.count("TF"))
      c.combinations.push_back(parse_combination("GF+TF->GE"));
    if (c.combinations.empty()) throw ConfigError("config needs 'combinations'");
  }
  for (const auto& comb : c.combinations) {
    std::vector<std::string> all = comb.train;
    all.push_back(comb.test);
    for (const auto& v : all)
      if (!names.count(v))
        throw ConfigError("combination " + comb.label() + " uses unknown view '" + v + "'");
  }
  if (c.methods.empty()) throw ConfigError("config needs at least one method");
  if (c.regimes.empty()) throw ConfigError("'regularized' must not be empty");
  if (c.replicates < 1) throw ConfigError("replicates must be at least 1");
  if (c.shared_dim < 1) throw ConfigError("d must be at least 1");
  if (c.kappa < 1) throw ConfigError("kappa must be at least 1");
  if (c.bootstrap_resamples < 1) throw ConfigError("bootstrap_resamples must be at least 1");
  if (c.threads < 0) throw ConfigError("threads must be nonnegative");
  return c;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_experiment_config(j, path.parent_path());
}

// ---------------------------------------------------------------------------
// Prepared state

/// Everything a replicate needs that does not depend on the replicate:
/// the split corpus, full dissimilarities per view and the resolved
/// schedule.
struct PreparedExperiment {
  ExperimentConfig config;
  LabeledCorpus corpus;
  std::vector<int> relation;    // corpus indices with the relation_learning role
  std::vector<int> classifier;  // corpus indices with the classifier role
  std::vector<int> classifier_labels;
  std::vector<Eigen::MatrixXd> dissim;  // per view, over all corpus objects
  DimensionSchedule schedule;
  std::size_t reference = 0;
  std::size_t dropped = 0;
};

/// Loads data and checks every config constraint that can fail before any
/// fitting starts. Throws ConfigError naming the offending schedule row.
inline PreparedExperiment prepare_experiment(const ExperimentConfig& config) {
  PreparedExperiment p;
  p.config = config;
  if (config.synthetic) {
    const auto& s = *config.synthetic;
    p.corpus = synthesize_corpus(s.seed, s.objects, s.domains, s.classes, s.noise, s.shape);
  } else {
    p.corpus = load_corpus(config.corpus);
  }
  if (config.class_split) p.corpus = apply_class_split(p.corpus, *config.class_split, &p.dropped);
  p.relation = p.corpus.indices_with(Role::relation_learning);
  p.classifier = p.corpus.indices_with(Role::classifier);
  if (p.relation.size() < 3) throw ConfigError("fewer than 3 relation-learning objects");
  if (static_cast<int>(p.classifier.size()) <= config.kappa)
    throw ConfigError("classifier set has " + std::to_string(p.classifier.size()) +
                      " objects, need more than kappa = " + std::to_string(config.kappa));
  for (int i : p.classifier) p.classifier_labels.push_back(p.corpus.labels[i]);

  for (std::size_t v = 0; v < config.views.size(); ++v) {
    const auto& spec = config.views[v];
    if (!p.corpus.domain(spec.domain).supports(spec.kind))
      throw ConfigError("view " + spec.name + ": domain '" + spec.domain + "' cannot provide " +
                        to_string(spec.kind) + " dissimilarities");
    p.dissim.push_back(build_dissimilarity(p.corpus, spec.domain, spec.kind).values);
    if (spec.name == config.reference_view) p.reference = v;
  }

  p.schedule = config.schedule ? *config.schedule
                               : scaled_schedule(static_cast<int>(p.relation.size()), config.fractions);
  if (config.schedule) {
    const double n = static_cast<double>(p.relation.size());
    for (auto& r : p.schedule.rows)
      if (r.fraction == 0.0) r.fraction = r.n_prime / n;
  }
  validate(p.schedule);
  for (std::size_t i = 0; i < p.schedule.rows.size(); ++i) {
    const auto& r = p.schedule.rows[i];
    const std::string where = "schedule row " + std::to_string(i + 1) + " (n'=" +
                              std::to_string(r.n_prime) + ", S=" + format_real(r.fraction) + ")";
    if (r.n_prime > static_cast<int>(p.relation.size()))
      throw ConfigError(where + ": n' exceeds the " + std::to_string(p.relation.size()) +
                        " relation-learning objects");
    for (bool reg : config.regimes) {
      const int dim = p.schedule.dim_for(i, reg);
      if (config.shared_dim > dim)
        throw ConfigError(where + ": shared dimension d=" + std::to_string(config.shared_dim) +
                          " exceeds the " + (reg ? "regularized" : "") + (reg ? " " : "") +
                          "MDS dimension " + std::to_string(dim));
    }
  }
  return p;
}

// ---------------------------------------------------------------------------
// Replicates

/// One (method, regime, combination) outcome of a replicate.
struct CellOutcome {
  AlignMethod method = AlignMethod::gcca;
  bool regularized = false;
  std::size_t combination = 0;
  int mds_dim = 0;     // requested MDS dimension
  int shared_dim = 0;  // dimension actually used for the alignment
  LooResult result;
};

struct ReplicateResult {
  std::vector<int> sample;  // corpus indices used for relation learning
  std::vector<CellOutcome> outcomes;
  std::vector<std::string> warnings;
};

namespace detail {

inline Eigen::MatrixXd gather(const Eigen::MatrixXd& m, const std::vector<int>& rows,
                              const std::vector<int>& cols) {
  Eigen::MatrixXd out(rows.size(), cols.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j) out(i, j) = m(rows[i], cols[j]);
  return out;
}

inline int view_index(const ExperimentConfig& c, const std::string& name) {
  for (std::size_t i = 0; i < c.views.size(); ++i)
    if (c.views[i].name == name) return static_cast<int>(i);
  throw ConfigError("unknown view '" + name + "'");
}

} // namespace detail

/// Runs one Monte Carlo replicate at schedule row `row`: samples n'
/// relation-learning objects, prescales text views to the reference view,
/// fits MDS per view, aligns (CCA per view pair, GCCA over all views),
/// embeds the classifier objects out of sample and scores every
/// combination with cross-view leave-one-out kNN.
inline ReplicateResult run_replicate(const PreparedExperiment& p, std::size_t row,
                                     std::uint64_t seed) {
  const auto& cfg = p.config;
  const auto& sr = p.schedule.rows.at(row);
  if (sr.mds_dim >= sr.n_prime)
    throw ConfigError("schedule row " + std::to_string(row + 1) + ": d' >= n'");

  ReplicateResult res;
  std::mt19937_64 rng(seed);
  std::sample(p.relation.begin(), p.relation.end(), std::back_inserter(res.sample), sr.n_prime, rng);

  const std::size_t nv = cfg.views.size();
  std::vector<Eigen::MatrixXd> train(nv), oos(nv);
  for (std::size_t v = 0; v < nv; ++v) {
    train[v] = detail::gather(p.dissim[v], res.sample, res.sample);
    oos[v] = detail::gather(p.dissim[v], p.classifier, res.sample);
  }
  for (std::size_t v = 0; v < nv; ++v) {
    if (v == p.reference || cfg.views[v].kind != DissimilarityKind::text) continue;
    const double f = frobenius_scale_factor(train[v], train[p.reference]);
    train[v] *= f;
    oos[v] *= f;
  }

  for (bool reg : cfg.regimes) {
    const int mds_dim = p.schedule.dim_for(row, reg);
    std::vector<MdsModel> models;
    std::vector<EmbeddingMatrix> oos_embed;
    int min_eff = mds_dim;
    for (std::size_t v = 0; v < nv; ++v) {
      models.push_back(mds_fit(train[v], mds_dim));
      oos_embed.push_back(mds_out_of_sample(models.back(), oos[v]));
      min_eff = std::min(min_eff, models.back().dim());
      if (models.back().dim() < cfg.shared_dim)
        res.warnings.push_back("view " + cfg.views[v].name + ": effective MDS dimension " +
                               std::to_string(models.back().dim()) + " < d=" +
                               std::to_string(cfg.shared_dim) + " (n'=" +
                               std::to_string(sr.n_prime) + ", " +
                               (reg ? "regularized" : "non-regularized") + ")");
    }

    auto labeled = [&](EmbeddingMatrix pts, const std::string& tag) {
      return LabeledEmbedding{std::move(pts), p.classifier_labels, tag};
    };

    for (AlignMethod method : cfg.methods) {
      if (method == AlignMethod::gcca) {
        const int d = std::min({cfg.shared_dim, min_eff, sr.n_prime - 1});
        std::vector<EmbeddingMatrix> xs;
        for (const auto& m : models) xs.push_back(m.embedding);
        const AlignmentMaps maps = gcca_fit(xs, d, cfg.ridge);
        std::vector<LabeledEmbedding> projected;
        for (std::size_t v = 0; v < nv; ++v)
          projected.push_back(labeled(project(maps, static_cast<int>(v), oos_embed[v]), cfg.views[v].name));
        for (std::size_t c = 0; c < cfg.combinations.size(); ++c) {
          const auto& comb = cfg.combinations[c];
          LabeledEmbedding tr = projected[detail::view_index(cfg, comb.train[0])];
          if (comb.train.size() == 2)
            tr = average_views(tr, projected[detail::view_index(cfg, comb.train[1])]);
          const auto& te = projected[detail::view_index(cfg, comb.test)];
          res.outcomes.push_back({method, reg, c, mds_dim, d, loo_cross_view(tr, te, cfg.kappa)});
        }
      } else {
        std::map<std::pair<int, int>, AlignmentMaps> fits;
        for (std::size_t c = 0; c < cfg.combinations.size(); ++c) {
          const auto& comb = cfg.combinations[c];
          if (comb.train.size() != 1) continue;  // averaged training needs three views
          const int a = detail::view_index(cfg, comb.test);
          const int b = detail::view_index(cfg, comb.train[0]);
          if (a == b) continue;
          const int d = std::min({cfg.shared_dim, models[a].dim(), models[b].dim(), sr.n_prime - 1});
          auto key = std::minmax(a, b);
          auto it = fits.find(key);
          if (it == fits.end())
            it = fits.emplace(key, cca_fit(models[key.first].embedding,
                                           models[key.second].embedding, d, cfg.ridge)).first;
          const auto& maps = it->second;
          const int slot_a = a == key.first ? 0 : 1;
          const int slot_b = 1 - slot_a;
          auto te = labeled(project(maps, slot_a, oos_embed[a]), comb.test);
          auto tr = labeled(project(maps, slot_b, oos_embed[b]), comb.train[0]);
          res.outcomes.push_back({method, reg, c, mds_dim, d, loo_cross_view(tr, te, cfg.kappa)});
        }
      }
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Report

/// Bootstrap standard error of the mean: standard deviation of `resamples`
/// resampled means.
inline double bootstrap_se(const std::vector<double>& values, int resamples, std::uint64_t seed) {
  if (values.size() < 2) return 0.0;
  if (std::all_of(values.begin(), values.end(), [&](double v) { return v == values.front(); }))
    return 0.0;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, values.size() - 1);
  std::vector<double> means(static_cast<std::size_t>(resamples));
  for (auto& m : means) {
    double s = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) s += values[pick(rng)];
    m = s / static_cast<double>(values.size());
  }
  double mean = 0.0;
  for (double m : means) mean += m;
  mean /= static_cast<double>(means.size());
  double ss = 0.0;
  for (double m : means) ss += (m - mean) * (m - mean);
  return means.size() > 1 ? std::sqrt(ss / static_cast<double>(means.size() - 1)) : 0.0;
}

inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  const double m = s / static_cast<double>(v.size());
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return std::clamp(m, *lo, *hi);
}

/// Aggregated accuracies of one (method, regime, combination, S) cell.
struct ReportCell {
  AlignMethod method = AlignMethod::gcca;
  bool regularized = false;
  std::string combination;
  std::string feature;
  std::size_t row = 0;
  double fraction = 0.0;
  int n_prime = 0;
  int mds_dim = 0;
  std::vector<double> accuracies;  // by replicate index
  std::vector<int> item_correct;   // per classifier object, summed over replicates
  double mean = 0.0;
  double se = 0.0;       // bootstrap over replicates
  double item_se = 0.0;  // bootstrap over classifier objects

  std::string family() const {
    return std::string(to_string(method)) + (regularized ? "_regularized" : "");
  }
  std::string key() const {
    return family() + "|" + combination + "|" + feature + "|" + std::to_string(row);
  }
};

struct ReplicateRecord {
  std::size_t cell = 0;
  std::size_t replicate = 0;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  int errors = 0;
  int m = 0;
};

struct AccuracyReport {
  std::vector<ReportCell> cells;
  std::vector<ReplicateRecord> records;
  std::vector<std::string> warnings;
  std::uint64_t seed = 0;
  int bootstrap_resamples = 1000;
};

inline std::uint64_t cell_bootstrap_seed(std::uint64_t seed, const std::string& cell_key) {
  return splitmix64(seed ^ fnv1a(cell_key));
}

inline void summarize(ReportCell& cell, std::uint64_t seed, int resamples) {
  cell.mean = mean_of(cell.accuracies);
  const auto bseed = cell_bootstrap_seed(seed, cell.key());
  cell.se = bootstrap_se(cell.accuracies, resamples, bseed);
  std::vector<double> per_item;
  const double reps = static_cast<double>(cell.accuracies.size());
  for (int c : cell.item_correct) per_item.push_back(c / reps);
  cell.item_se = bootstrap_se(per_item, resamples, splitmix64(bseed));
}

/// Runs every schedule row x replicate and aggregates. Replicates may run on
/// several threads; results are reduced in (row, replicate) order, so the
/// report does not depend on the thread count.
inline AccuracyReport run_experiment(const PreparedExperiment& p) {
  const auto& cfg = p.config;
  AccuracyReport report;
  report.seed = cfg.seed;
  report.bootstrap_resamples = cfg.bootstrap_resamples;
  const std::size_t reps = static_cast<std::size_t>(cfg.replicates);
  const std::size_t m = p.classifier.size();
  std::map<std::string, std::size_t> cell_index;

  for (std::size_t row = 0; row < p.schedule.rows.size(); ++row) {
    std::vector<ReplicateResult> results(reps);
    std::vector<std::uint64_t> seeds(reps);
    for (std::size_t r = 0; r < reps; ++r) seeds[r] = replicate_seed(cfg.seed, row, r);

    unsigned nthreads = cfg.threads == 0 ? std::max(1u, std::thread::hardware_concurrency())
                                         : static_cast<unsigned>(cfg.threads);
    nthreads = static_cast<unsigned>(std::min<std::size_t>(nthreads, reps));
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
      while (true) {
        const std::size_t r = next++;
        if (r >= reps) return;
        try {
          results[r] = run_replicate(p, row, seeds[r]);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next = reps;
        }
      }
    };
    if (nthreads <= 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (unsigned t = 0; t < nthreads; ++t) pool.emplace_back(worker);
      for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);

    for (std::size_t r = 0; r < reps; ++r) {
      for (const auto& w : results[r].warnings)
        report.warnings.push_back("row " + std::to_string(row + 1) + " replicate " +
                                  std::to_string(r) + ": " + w);
      for (const auto& o : results[r].outcomes) {
        ReportCell proto;
        proto.method = o.method;
        proto.regularized = o.regularized;
        proto.combination = cfg.combinations[o.combination].label();
        proto.feature = cfg.feature;
        proto.row = row;
        const std::string key = proto.key();
        auto it = cell_index.find(key);
        if (it == cell_index.end()) {
          proto.fraction = p.schedule.rows[row].fraction;
          proto.n_prime = p.schedule.rows[row].n_prime;
          proto.mds_dim = o.mds_dim;
          proto.item_correct.assign(m, 0);
          it = cell_index.emplace(key, report.cells.size()).first;
          report.cells.push_back(std::move(proto));
        }
        auto& cell = report.cells[it->second];
        cell.accuracies.push_back(o.result.accuracy());
        for (std::size_t i = 0; i < m; ++i) cell.item_correct[i] += o.result.correct[i] ? 1 : 0;
        report.records.push_back({it->second, r, seeds[r], o.result.accuracy(), o.result.errors,
                                  static_cast<int>(m)});
      }
    }
  }
  for (auto& cell : report.cells) summarize(cell, cfg.seed, cfg.bootstrap_resamples);
  return report;
}

inline AccuracyReport run_experiment(const ExperimentConfig& config) {
  return run_experiment(prepare_experiment(config));
}

// ---------------------------------------------------------------------------
// Output files

/// File contents keyed by file name; emit_curves writes them.
using ReportFiles = std::map<std::string, std::string>;

inline ReportFiles render_report(const AccuracyReport& report) {
  if (report.cells.empty()) throw ValidationError("emit_curves: empty report");
  ReportFiles files;

  // curves_<family>_<feature>.csv
  std::map<std::string, std::ostringstream> curves;
  for (const auto& c : report.cells) {
    const std::string name = "curves_" + c.family() + "_" + c.feature + ".csv";
    auto& os = curves[name];
    if (os.tellp() == 0)
      os << "S,n_prime,mds_dim,combination,mean_accuracy,std_error,item_std_error,replicates\n";
    os << format_real(c.fraction) << ',' << c.n_prime << ',' << c.mds_dim << ',' << c.combination
       << ',' << format_real(c.mean) << ',' << format_real(c.se) << ','
       << format_real(c.item_se) << ',' << c.accuracies.size() << '\n';
  }
  for (auto& [name, os] : curves) files[name] = os.str();

  // table.csv: one row per (method, combination, feature), one column pair
  // per (regime, S).
  std::vector<std::string> row_keys, col_keys;
  std::map<std::pair<std::string, std::string>, const ReportCell*> grid;
  for (const auto& c : report.cells) {
    const std::string rk = std::string(to_string(c.method)) + "," + c.combination + "," + c.feature;
    const std::string ck = std::string(c.regularized ? "regularized" : "nonregularized") + "_S" +
                           format_real(c.fraction);
    if (std::find(row_keys.begin(), row_keys.end(), rk) == row_keys.end()) row_keys.push_back(rk);
    if (std::find(col_keys.begin(), col_keys.end(), ck) == col_keys.end()) col_keys.push_back(ck);
    grid[{rk, ck}] = &c;
  }
  std::ostringstream table;
  table << "method,combination,feature";
  for (const auto& ck : col_keys) table << ',' << ck << "_mean," << ck << "_se";
  table << '\n';
  for (const auto& rk : row_keys) {
    table << rk;
    for (const auto& ck : col_keys) {
      auto it = grid.find({rk, ck});
      if (it == grid.end()) {
        table << ",,";
      } else {
        table << ',' << format_real(it->second->mean) << ',' << format_real(it->second->se);
      }
    }
    table << '\n';
  }
  files["table.csv"] = table.str();

  std::ostringstream log;
  log << "method\tcombination\tfeature\trow\tS\tn_prime\tmds_dim\treplicate\tseed\taccuracy\terrors\tm\n";
  for (const auto& r : report.records) {
    const auto& c = report.cells[r.cell];
    log << c.family() << '\t' << c.combination << '\t' << c.feature << '\t' << c.row << '\t'
        << format_real(c.fraction) << '\t' << c.n_prime << '\t' << c.mds_dim << '\t'
        << r.replicate << '\t' << r.seed << '\t' << format_real(r.accuracy) << '\t' << r.errors
        << '\t' << r.m << '\n';
  }
  files["replicates.log"] = log.str();

  std::ostringstream warn;
  for (const auto& w : report.warnings) warn << w << '\n';
  files["warnings.log"] = warn.str();
  return files;
}

/// Writes the curve CSVs, table.csv, replicates.log and warnings.log into
/// `out_dir`. Returns the paths written.
inline std::vector<std::filesystem::path> emit_curves(const AccuracyReport& report,
                                                      const std::filesystem::path& out_dir) {
  const ReportFiles files = render_report(report);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written;
  for (const auto& [name, content] : files) {
    write_text_atomic(out_dir / name, content);
    written.push_back(out_dir / name);
  }
  return written;
}

} // namespace mmatch
