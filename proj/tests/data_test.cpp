#include <gtest/gtest.h>

#include <fstream>

#include "mmatch/align.hpp"
#include "mmatch/data.hpp"
#include "mmatch/mds.hpp"
#include "support.hpp"

using namespace mmatch;
namespace fs = std::filesystem;

namespace {

void write_file(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p) << text;
}

// Three objects, two domains with 4-dimensional features, one with edges.
fs::path three_object_fixture() {
  const auto dir = mmatch::testing::scratch_dir("three_objects");
  write_file(dir / "manifest.json", R"({
    "object_ids": ["a", "b", "c"],
    "labels": [0, 1, 0],
    "roles": ["relation_learning", "classifier", "relation_learning"],
    "domains": [
      {"name": "en", "features": "en.tsv", "edges": "en_edges.tsv"},
      {"name": "fr", "features": "fr.tsv", "graph_cap": {"threshold": 2, "cap": 3}}
    ]
  })");
  write_file(dir / "en.tsv", "1\t0\t0\t0\n0\t1\t0\t0\n# comment\n0\t0\t1\t0.5\n");
  write_file(dir / "fr.tsv", "2\t0\t0\t1\n0\t2\t0\t0\n0\t0\t2\t0\n");
  write_file(dir / "en_edges.tsv", "a\tb\nc\tb\nb\ta\n");
  return dir;
}

// Classes with the given sizes, interleaved, one feature domain.
LabeledCorpus corpus_with_class_sizes(const std::vector<int>& sizes) {
  LabeledCorpus c;
  std::vector<int> left = sizes;
  int total = 0;
  for (int s : sizes) total += s;
  Domain d;
  d.name = "en";
  d.features = Eigen::MatrixXd::Ones(total, 2);
  for (int i = 0; c.size() < static_cast<std::size_t>(total); ++i) {
    const int label = i % static_cast<int>(sizes.size());
    if (left[label] == 0) continue;
    --left[label];
    c.object_ids.push_back("o" + std::to_string(c.size()));
    c.labels.push_back(label);
    c.roles.push_back(Role::relation_learning);
  }
  c.domains.push_back(d);
  return c;
}

Eigen::Index rank_of(const Eigen::MatrixXd& m) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(m);
  qr.setThreshold(1e-9);
  return qr.rank();
}

} // namespace

TEST(LoadCorpus, ThreeObjectFixtureFieldByField) {
  const auto dir = three_object_fixture();
  const auto c = load_corpus(dir);
  EXPECT_EQ(c.size(), 3u);
  EXPECT_EQ(c.object_ids, (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(c.labels, (std::vector<int>{0, 1, 0}));
  EXPECT_EQ(c.roles, (std::vector<Role>{Role::relation_learning, Role::classifier,
                                        Role::relation_learning}));
  ASSERT_EQ(c.domains.size(), 2u);
  const auto& en = c.domain("en");
  ASSERT_TRUE(en.features.has_value());
  EXPECT_EQ(en.features->rows(), 3);
  EXPECT_EQ(en.features->cols(), 4);
  EXPECT_EQ((*en.features)(2, 3), 0.5);
  EXPECT_EQ(*en.edges, (std::vector<Edge>{{0, 1}, {1, 2}}));
  const auto& fr = c.domain("fr");
  EXPECT_FALSE(fr.edges.has_value());
  EXPECT_EQ(fr.cap.threshold, 2);
  EXPECT_EQ(fr.cap.cap, 3);
  EXPECT_EQ((*fr.features)(0, 3), 1.0);
  EXPECT_TRUE(en.supports(DissimilarityKind::graph));
  EXPECT_FALSE(fr.supports(DissimilarityKind::graph));
  fs::remove_all(dir);
}

TEST(LoadCorpus, EmptyButWellFormedIsIntegrityError) {
  const auto dir = mmatch::testing::scratch_dir("empty_corpus");
  write_file(dir / "manifest.json", R"({"object_ids": [], "labels": [], "domains": []})");
  EXPECT_THROW(load_corpus(dir), IntegrityError);
  fs::remove_all(dir);
}

TEST(LoadCorpus, MalformedInputs) {
  const auto dir = mmatch::testing::scratch_dir("bad_corpus");
  EXPECT_THROW(load_corpus(dir), IoError);
  write_file(dir / "manifest.json", "{ not json");
  EXPECT_THROW(load_corpus(dir), FormatError);
  write_file(dir / "manifest.json", R"({"object_ids": ["a","b"], "labels": [0],
      "domains": [{"name": "x", "features": "f.tsv"}]})");
  write_file(dir / "f.tsv", "1\t2\n3\t4\n");
  EXPECT_THROW(load_corpus(dir), IntegrityError);
  write_file(dir / "manifest.json", R"({"object_ids": ["a","b"], "labels": [0, 1],
      "domains": [{"name": "x", "edges": "e.tsv"}]})");
  write_file(dir / "e.tsv", "a\tzz\n");
  EXPECT_THROW(load_corpus(dir), FormatError);
  fs::remove_all(dir);
}

TEST(CorpusIo, SaveLoadRoundTrip) {
  const auto dir = mmatch::testing::scratch_dir("roundtrip");
  LabeledCorpus c = synthesize_corpus(3, 30, 2, 3, 0.2);
  c.domains[1].precomputed.emplace(DissimilarityKind::text,
                                   cosine_dissimilarity(*c.domains[1].features).values);
  c.domains[0].cap = {3, 5};
  save_corpus(c, dir / "a");
  const auto once = load_corpus(dir / "a");
  EXPECT_TRUE(once == c);
  save_corpus(once, dir / "b");
  EXPECT_TRUE(load_corpus(dir / "b") == once);
  fs::remove_all(dir);
}

TEST(BuildDissimilarity, PrefersPrecomputedMatrix) {
  LabeledCorpus c = synthesize_corpus(5, 12, 2, 2, 0.0);
  const Eigen::MatrixXd fake = Eigen::MatrixXd::Ones(12, 12) - Eigen::MatrixXd::Identity(12, 12);
  c.domains[0].precomputed.emplace(DissimilarityKind::text, fake);
  EXPECT_TRUE(build_dissimilarity(c, "domain0", DissimilarityKind::text).values == fake);
  EXPECT_TRUE(build_dissimilarity(c, "domain1", DissimilarityKind::text).values ==
              cosine_dissimilarity(*c.domains[1].features).values);
  EXPECT_THROW(build_dissimilarity(c, "nope", DissimilarityKind::text), ValidationError);
}

TEST(ApplyClassSplit, FiveClassCountsEvenOdd) {
  const auto c = corpus_with_class_sizes({119, 372, 270, 191, 430});
  std::size_t dropped = 99;
  const auto s = apply_class_split(c, {{0, 2, 4}, {1, 3}}, &dropped);
  EXPECT_EQ(s.indices_with(Role::relation_learning).size(), 819u);
  EXPECT_EQ(s.indices_with(Role::classifier).size(), 563u);
  EXPECT_EQ(dropped, 0u);
}

TEST(ApplyClassSplit, DropsUnlistedClasses) {
  const auto c = corpus_with_class_sizes({119, 372, 270, 191, 430});
  std::size_t dropped = 0;
  const auto s = apply_class_split(c, {{0, 1}, {2, 3}}, &dropped);
  EXPECT_EQ(s.indices_with(Role::relation_learning).size(), 491u);
  EXPECT_EQ(s.indices_with(Role::classifier).size(), 461u);
  EXPECT_EQ(dropped, 430u);
  EXPECT_EQ(s.domains[0].features->rows(), 952);
  for (int l : s.labels) EXPECT_NE(l, 4);
}

TEST(ApplyClassSplit, TwoClassRolesFollowLabels) {
  LabeledCorpus c = synthesize_corpus(1, 20, 2, 2, 0.1);
  const auto s = apply_class_split(c, {{0}, {1}});
  for (std::size_t i = 0; i < s.size(); ++i)
    EXPECT_EQ(s.roles[i], s.labels[i] == 0 ? Role::relation_learning : Role::classifier);
}

TEST(ApplyClassSplit, PreservesOrderWithinRoles) {
  const auto c = synthesize_corpus(2, 50, 2, 5, 0.1);
  const auto s = apply_class_split(c, {{3, 1}, {0, 4}});
  for (Role r : {Role::relation_learning, Role::classifier}) {
    const auto idx = s.indices_with(r);
    for (std::size_t k = 1; k < idx.size(); ++k) {
      const auto& a = s.object_ids[idx[k - 1]];
      const auto& b = s.object_ids[idx[k]];
      EXPECT_LT(std::find(c.object_ids.begin(), c.object_ids.end(), a),
                std::find(c.object_ids.begin(), c.object_ids.end(), b));
    }
  }
}

TEST(ApplyClassSplit, KeepsGeodesicsThroughDroppedObjects) {
  // Path a - x - b: dropping x must not disconnect a and b.
  LabeledCorpus c;
  c.object_ids = {"a", "x", "b"};
  c.labels = {0, 2, 1};
  c.roles.assign(3, Role::relation_learning);
  Domain d;
  d.name = "g";
  d.edges = std::vector<Edge>{{0, 1}, {1, 2}};
  c.domains.push_back(d);
  const auto s = apply_class_split(c, {{0}, {1}});
  EXPECT_EQ(build_dissimilarity(s, "g", DissimilarityKind::graph).values(0, 1), 2.0);
}

TEST(ApplyClassSplit, OverlapAndUnknownClassRejected) {
  const auto c = synthesize_corpus(2, 20, 2, 4, 0.1);
  EXPECT_THROW(apply_class_split(c, {{0, 1}, {1, 2}}), ValidationError);
  EXPECT_THROW(apply_class_split(c, {{0}, {9}}), ValidationError);
}

TEST(SynthesizeCorpus, Deterministic) {
  EXPECT_TRUE(synthesize_corpus(7, 60, 2, 3, 0.3) == synthesize_corpus(7, 60, 2, 3, 0.3));
  EXPECT_FALSE(synthesize_corpus(7, 60, 2, 3, 0.3) == synthesize_corpus(8, 60, 2, 3, 0.3));
}

TEST(SynthesizeCorpus, ShapeAndRoles) {
  const auto c = synthesize_corpus(7, 60, 2, 3, 0.0);
  EXPECT_EQ(c.size(), 60u);
  ASSERT_EQ(c.domains.size(), 2u);
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_EQ(c.labels[i], static_cast<int>(i % 3));
    EXPECT_EQ(c.roles[i], c.labels[i] % 2 == 0 ? Role::relation_learning : Role::classifier);
  }
  for (const auto& d : c.domains) {
    EXPECT_TRUE(d.supports(DissimilarityKind::graph));
    EXPECT_TRUE(d.supports(DissimilarityKind::text));
  }
}

TEST(SynthesizeCorpus, NoiselessDomainsAreLinearImagesOfEachOther) {
  const auto c = synthesize_corpus(7, 60, 2, 3, 0.0);
  const Eigen::MatrixXd f0 = mmatch::testing::centered(*c.domains[0].features);
  const Eigen::MatrixXd f1 = mmatch::testing::centered(*c.domains[1].features);
  const Eigen::MatrixXd m = f0.colPivHouseholderQr().solve(f1);
  EXPECT_LT((f0 * m - f1).norm() / f1.norm(), 1e-10);
  // Same latent points feed both graphs.
  EXPECT_EQ(*c.domains[0].edges, *c.domains[1].edges);
}

TEST(SynthesizeCorpus, NoiselessFeatureMatricesHaveEqualRank) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto c = synthesize_corpus(seed, 40, 3, 4, 0.0);
    const auto r0 = rank_of(*c.domains[0].features);
    for (const auto& d : c.domains) EXPECT_EQ(rank_of(*d.features), r0);
  }
}

TEST(SynthesizeCorpus, ThreeDomainsShareLatentStructure) {
  const auto c = synthesize_corpus(7, 60, 3, 3, 0.1);
  ASSERT_EQ(c.domains.size(), 3u);
  std::vector<EmbeddingMatrix> x;
  for (const auto& d : c.domains)
    x.push_back(mds_fit(build_dissimilarity(c, d.name, DissimilarityKind::text), 5).embedding);
  const auto maps = gcca_fit(x, 2);
  EXPECT_GT(maps.correlations(0), 0.9);
}

TEST(SynthesizeCorpus, InvalidArguments) {
  EXPECT_THROW(synthesize_corpus(1, 3, 2, 5, 0.0), ValidationError);
  EXPECT_THROW(synthesize_corpus(1, 30, 1, 3, 0.0), ValidationError);
  EXPECT_THROW(synthesize_corpus(1, 30, 2, 3, -1.0), ValidationError);
}
