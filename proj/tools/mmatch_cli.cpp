// Command-line front end: synthetic corpora, dissimilarities, MDS, alignment,
// cross-view classification and the full Monte Carlo experiment.
//
// Exit codes: 0 success, 1 usage error, 2 data/validation error,
// 3 numerical/conditioning error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "mmatch/mmatch.hpp"

namespace fs = std::filesystem;
using namespace mmatch;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

std::vector<int> read_labels(const fs::path& path) {
  const Eigen::MatrixXd m = read_matrix_tsv(path);
  if (m.cols() != 1) throw FormatError(path.string() + ": expected one label per line");
  std::vector<int> labels;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double v = m(i, 0);
    if (v < 0 || v != std::floor(v))
      throw FormatError(path.string() + ": label on row " + std::to_string(i + 1) +
                        " is not a nonnegative integer");
    labels.push_back(static_cast<int>(v));
  }
  return labels;
}

// Builds into a scratch directory and swaps it into place, so a failure
// leaves no partial output.
template <class Fn>
void write_directory(const fs::path& out, Fn&& fill) {
  fs::path scratch = out;
  scratch += ".partial";
  fs::remove_all(scratch);
  try {
    fill(scratch);
  } catch (...) {
    std::error_code ec;
    fs::remove_all(scratch, ec);
    throw;
  }
  fs::remove_all(out);
  fs::rename(scratch, out);
}

struct SynthArgs {
  std::uint64_t seed = 1;
  int objects = 200;
  int domains = 2;
  int classes = 5;
  double noise = 0.1;
  std::string out;
};

struct DissimArgs {
  std::string corpus;
  std::string domain;
  std::string kind;
  int cap = 6;
  int threshold = 4;
  std::string out;
};

struct MdsArgs {
  std::string input;
  int dim = 2;
  std::string out;
  std::string scree;
};

struct AlignArgs {
  std::string method = "gcca";
  int dim = 2;
  double ridge = -1.0;
  std::vector<std::string> views;
  std::string out;
};

struct ClassifyArgs {
  std::string train;
  std::string test;
  std::string labels;
  int kappa = kDefaultKappa;
};

struct ExperimentArgs {
  std::string config;
  std::string out;
  std::int64_t seed = -1;
  int threads = -1;
};

int cmd_synth(const SynthArgs& a) {
  const LabeledCorpus c = synthesize_corpus(a.seed, a.objects, a.domains, a.classes, a.noise);
  write_directory(a.out, [&](const fs::path& dir) { save_corpus(c, dir); });
  std::cout << "wrote " << c.size() << " objects in " << c.domains.size() << " domains to "
            << a.out << "\n";
  return 0;
}

int cmd_dissim(const DissimArgs& a) {
  LabeledCorpus c = load_corpus(a.corpus);
  const auto kind = parse_dissimilarity_kind(a.kind);
  for (auto& d : c.domains)
    if (d.name == a.domain) d.cap = GeodesicCap{a.threshold, a.cap};
  const DissimilarityMatrix m = build_dissimilarity(c, a.domain, kind);
  write_matrix_tsv(a.out, m.values);
  std::cout << "wrote " << m.size() << "x" << m.size() << " " << to_string(kind)
            << " dissimilarity to " << a.out << "\n";
  return 0;
}

int cmd_mds(const MdsArgs& a) {
  DissimilarityMatrix delta;
  delta.values = read_matrix_tsv(a.input);
  validate(delta);
  const MdsModel model = mds_fit(delta, a.dim);
  std::string scree_csv;
  if (!a.scree.empty()) {
    std::ostringstream os;
    os << "index,sqrt_eigenvalue\n";
    const auto values = scree(model);
    for (std::size_t i = 0; i < values.size(); ++i) os << i + 1 << ',' << format_real(values[i]) << '\n';
    scree_csv = os.str();
  }
  write_matrix_tsv(a.out, model.embedding);
  if (!a.scree.empty()) write_text_atomic(a.scree, scree_csv);
  std::cout << "embedded " << model.size() << " objects in " << model.dim() << " dimensions"
            << (model.dim() < a.dim ? " (fewer positive eigenvalues than requested)" : "") << "\n";
  return 0;
}

int cmd_align(const AlignArgs& a) {
  std::vector<EmbeddingMatrix> views;
  for (const auto& v : a.views) views.push_back(read_matrix_tsv(v));
  const auto method = parse_align_method(a.method);
  std::optional<double> ridge;
  if (a.ridge >= 0.0) ridge = a.ridge;
  AlignmentMaps maps;
  if (method == AlignMethod::cca) {
    if (views.size() != 2) throw ValidationError("--method cca needs exactly two --view files");
    maps = cca_fit(views[0], views[1], a.dim, ridge);
  } else {
    maps = gcca_fit(views, a.dim, ridge);
  }
  write_directory(a.out, [&](const fs::path& dir) { save_alignment(maps, dir); });
  std::cout << "correlations:";
  for (Eigen::Index l = 0; l < maps.correlations.size(); ++l)
    std::cout << ' ' << format_real(maps.correlations(l));
  std::cout << "\n";
  return 0;
}

int cmd_classify(const ClassifyArgs& a) {
  const auto labels = read_labels(a.labels);
  LabeledEmbedding train{read_matrix_tsv(a.train), labels, "train"};
  LabeledEmbedding test{read_matrix_tsv(a.test), labels, "test"};
  const LooResult r = loo_cross_view(train, test, a.kappa);
  std::cout << "accuracy " << format_real(r.accuracy()) << " (" << r.correct.size() - r.errors
            << "/" << r.correct.size() << ")\n";
  return 0;
}

int cmd_experiment(const ExperimentArgs& a) {
  ExperimentConfig cfg = load_experiment_config(a.config);
  if (a.seed >= 0) cfg.seed = static_cast<std::uint64_t>(a.seed);
  if (a.threads >= 0) cfg.threads = a.threads;
  const PreparedExperiment prepared = prepare_experiment(cfg);
  const AccuracyReport report = run_experiment(prepared);
  const ReportFiles files = render_report(report);
  write_directory(a.out, [&](const fs::path& dir) {
    fs::create_directories(dir);
    for (const auto& [name, content] : files) write_text_atomic(dir / name, content);
  });
  for (const auto& c : report.cells)
    std::printf("%-18s %-12s S=%-4s mds_dim=%-4d mean=%.4f se=%.4f\n", c.family().c_str(),
                c.combination.c_str(), format_real(c.fraction).c_str(), c.mds_dim, c.mean, c.se);
  if (!report.warnings.empty())
    std::printf("%zu warnings written to warnings.log\n", report.warnings.size());
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Manifold matching across disparate domains: MDS, (G)CCA and cross-view kNN"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Write a deterministic synthetic corpus directory");
  s->add_option("--seed", synth.seed, "Random seed")->capture_default_str();
  s->add_option("--objects", synth.objects, "Number of objects")->capture_default_str();
  s->add_option("--domains", synth.domains, "Number of domains")->capture_default_str();
  s->add_option("--classes", synth.classes, "Number of classes")->capture_default_str();
  s->add_option("--noise", synth.noise, "Per-domain noise level")->capture_default_str();
  s->add_option("--out", synth.out, "Output corpus directory")->required();

  DissimArgs dissim;
  auto* d = app.add_subcommand("dissim", "Compute a dissimilarity matrix for one corpus domain");
  d->add_option("--corpus", dissim.corpus, "Corpus directory")->required()->check(CLI::ExistingDirectory);
  d->add_option("--domain", dissim.domain, "Domain name")->required();
  d->add_option("--kind", dissim.kind, "graph (hop distances) or text (cosine)")
      ->required()
      ->check(CLI::IsMember({"graph", "text"}));
  d->add_option("--cap", dissim.cap, "Value assigned to hop distances above the threshold")
      ->capture_default_str();
  d->add_option("--threshold", dissim.threshold, "Largest hop distance kept as is")
      ->capture_default_str();
  d->add_option("--out", dissim.out, "Output TSV")->required();

  MdsArgs mds;
  auto* m = app.add_subcommand("mds", "Classical MDS of a dissimilarity TSV");
  m->add_option("--input", mds.input, "Square dissimilarity TSV")->required()->check(CLI::ExistingFile);
  m->add_option("--dim", mds.dim, "Embedding dimension")->capture_default_str();
  m->add_option("--out", mds.out, "Output embedding TSV")->required();
  m->add_option("--scree", mds.scree, "Optional CSV of square-rooted eigenvalues");

  AlignArgs align;
  auto* al = app.add_subcommand("align", "Fit CCA or GCCA maps between matched embeddings");
  al->add_option("--method", align.method, "cca or gcca")
      ->check(CLI::IsMember({"cca", "gcca"}))
      ->capture_default_str();
  al->add_option("--dim", align.dim, "Shared dimension d")->capture_default_str();
  al->add_option("--ridge", align.ridge, "Diagonal ridge (default: 1e-8 x mean auto-covariance diagonal)");
  al->add_option("--view", align.views, "Embedding TSV, one per view (repeat)")
      ->required()
      ->check(CLI::ExistingFile);
  al->add_option("--out", align.out, "Output directory for U_k.tsv, correlations.tsv, meta.json")
      ->required();

  ClassifyArgs classify;
  auto* c = app.add_subcommand("classify", "Cross-view leave-one-out kNN accuracy");
  c->add_option("--train", classify.train, "Training-view embedding TSV")->required()->check(CLI::ExistingFile);
  c->add_option("--test", classify.test, "Test-view embedding TSV")->required()->check(CLI::ExistingFile);
  c->add_option("--labels", classify.labels, "One class label per line")->required()->check(CLI::ExistingFile);
  c->add_option("--kappa", classify.kappa, "Number of neighbors")->capture_default_str();

  ExperimentArgs exp;
  auto* e = app.add_subcommand("experiment", "Run the Monte Carlo accuracy-vs-S experiment");
  e->add_option("--config", exp.config, "Experiment JSON")->required()->check(CLI::ExistingFile);
  e->add_option("--out", exp.out, "Output directory")->required();
  e->add_option("--seed", exp.seed, "Override the config seed");
  e->add_option("--threads", exp.threads, "Worker threads (0 = all cores)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int rc = app.exit(err);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*s) return cmd_synth(synth);
    if (*d) return cmd_dissim(dissim);
    if (*m) return cmd_mds(mds);
    if (*al) return cmd_align(align);
    if (*c) return cmd_classify(classify);
    if (*e) return cmd_experiment(exp);
  } catch (const ConditioningError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitNumeric;
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitData;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
