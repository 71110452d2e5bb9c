#include <gtest/gtest.h>

#include "mmatch/mds.hpp"
#include "support.hpp"

using namespace mmatch;
using mmatch::testing::euclidean_distances;
using mmatch::testing::procrustes_rotation;
using mmatch::testing::random_matrix;

TEST(MdsFit, TwoPoints) {
  Eigen::Matrix2d delta;
  delta << 0, 2, 2, 0;
  const auto m = mds_fit(delta, 1);
  ASSERT_EQ(m.dim(), 1);
  // The eigenvector's largest entry is positive; for (1,-1)/sqrt2 that is the first.
  EXPECT_NEAR(m.embedding(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(m.embedding(1, 0), -1.0, 1e-12);
}

TEST(MdsFit, CollinearPointsHaveEffectiveDimensionOne) {
  Eigen::Matrix3d delta;
  delta << 0, 1, 2, 1, 0, 1, 2, 1, 0;
  const auto m = mds_fit(delta, 2);
  ASSERT_EQ(m.dim(), 1);
  EXPECT_EQ(m.requested_dim, 2);
  const double s = m.embedding(0, 0) > 0 ? 1.0 : -1.0;
  EXPECT_NEAR(s * m.embedding(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(m.embedding(1, 0), 0.0, 1e-12);
  EXPECT_NEAR(s * m.embedding(2, 0), -1.0, 1e-12);
}

TEST(MdsFit, RecoversEuclideanConfiguration) {
  const Eigen::MatrixXd x = random_matrix(20, 5, 12);
  const Eigen::MatrixXd delta = euclidean_distances(x);
  const auto m = mds_fit(delta, 5);
  ASSERT_EQ(m.dim(), 5);
  EXPECT_LT((euclidean_distances(m.embedding) - delta).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT(fidelity_error(m.embedding, delta), 1e-10);
}

TEST(MdsFit, EmbeddingIsCenteredAndEigenvaluesDescend) {
  const auto m = mds_fit(euclidean_distances(random_matrix(15, 4, 2)), 4);
  EXPECT_LT(m.embedding.colwise().sum().cwiseAbs().maxCoeff(), 1e-10);
  for (Eigen::Index i = 1; i < m.eigenvalues.size(); ++i)
    EXPECT_GE(m.eigenvalues(i - 1), m.eigenvalues(i));
}

TEST(MdsFit, RejectsBadDimension) {
  const Eigen::MatrixXd delta = euclidean_distances(random_matrix(4, 2, 1));
  EXPECT_THROW(mds_fit(delta, 0), ValidationError);
  EXPECT_THROW(mds_fit(delta, 4), ValidationError);
  EXPECT_THROW(mds_fit(Eigen::MatrixXd::Zero(1, 1), 1), ValidationError);
}

TEST(MdsFit, NestedDimensionsNeverIncreaseFidelityError) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    // A non-Euclidean dissimilarity so that every dimension matters.
    const Eigen::MatrixXd delta = euclidean_distances(random_matrix(18, 6, seed)).cwiseSqrt();
    double prev = std::numeric_limits<double>::infinity();
    for (int p = 1; p <= 8; ++p) {
      const auto m = mds_fit(delta, p);
      const double err = fidelity_error(m.embedding, delta);
      EXPECT_LE(err, prev + 1e-12) << "seed " << seed << " p " << p;
      prev = err;
    }
  }
}

TEST(MdsOutOfSample, TrainingRowsMapOntoTheirCoordinates) {
  const Eigen::MatrixXd delta = euclidean_distances(random_matrix(25, 3, 5)).cwiseSqrt();
  const auto m = mds_fit(delta, 6);
  const EmbeddingMatrix again = mds_out_of_sample(m, delta);
  EXPECT_LT((again - m.embedding).cwiseAbs().maxCoeff(), 1e-6);
  const Eigen::VectorXd row3 = mds_out_of_sample(m, Eigen::VectorXd(delta.row(3).transpose()));
  EXPECT_LT((row3.transpose() - m.embedding.row(3)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(MdsOutOfSample, HeldOutPointLandsOnProcrustesAlignedTruth) {
  const Eigen::MatrixXd all = random_matrix(21, 5, 33);
  const Eigen::MatrixXd train = all.topRows(20);
  const auto m = mds_fit(euclidean_distances(train), 5);
  Eigen::VectorXd d(20);
  for (int j = 0; j < 20; ++j) d(j) = (all.row(20) - train.row(j)).norm();
  const Eigen::VectorXd y = mds_out_of_sample(m, d);

  const Eigen::RowVectorXd mean = train.colwise().mean();
  const Eigen::MatrixXd tc = train.rowwise() - mean;
  const Eigen::MatrixXd r = procrustes_rotation(tc, m.embedding);
  ASSERT_LT((tc * r - m.embedding).cwiseAbs().maxCoeff(), 1e-8);
  const Eigen::RowVectorXd expected = (all.row(20) - mean) * r;
  EXPECT_LT((y.transpose() - expected).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(MdsOutOfSample, EquidistantPointSatisfiesGramConsistency) {
  // Regular simplex: the new point at equal distance from every vertex sits
  // at the centroid, so its inner products with the training points vanish.
  const Eigen::MatrixXd simplex = Eigen::MatrixXd::Identity(5, 5);
  const auto m = mds_fit(euclidean_distances(simplex), 4);
  const Eigen::VectorXd d = Eigen::VectorXd::Constant(5, 1.3);
  const Eigen::VectorXd y = mds_out_of_sample(m, d);
  ASSERT_TRUE(y.allFinite());
  Eigen::VectorXd b(5);
  const double own = d.squaredNorm() / 5.0;
  for (int i = 0; i < 5; ++i) b(i) = -0.5 * (d(i) * d(i) - m.row_means(i) - own + m.grand_mean);
  EXPECT_LT((m.embedding * y - b).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(MdsOutOfSample, RejectsWrongLengthAndNegativeInput) {
  const auto m = mds_fit(euclidean_distances(random_matrix(6, 2, 4)), 2);
  EXPECT_THROW(mds_out_of_sample(m, Eigen::VectorXd(Eigen::VectorXd::Ones(5))), ValidationError);
  EXPECT_THROW(mds_out_of_sample(m, Eigen::VectorXd(Eigen::VectorXd::Constant(6, -1.0))), ValidationError);
}

TEST(FidelityError, ExactEmbeddingIsZero) {
  const Eigen::MatrixXd x = random_matrix(7, 3, 8);
  EXPECT_EQ(fidelity_error(x, euclidean_distances(x)), 0.0);
}

TEST(FidelityError, SinglePair) {
  Eigen::MatrixXd x(2, 1);
  x << 0, 1;
  Eigen::Matrix2d delta;
  delta << 0, 3, 3, 0;
  EXPECT_DOUBLE_EQ(fidelity_error(x, delta), 4.0);
}

TEST(FidelityError, MatchesDoubleLoopOracle) {
  const Eigen::MatrixXd x = random_matrix(6, 2, 14);
  const Eigen::MatrixXd delta = euclidean_distances(random_matrix(6, 3, 15));
  double sum = 0.0;
  int pairs = 0;
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) {
      if (j <= i) continue;
      const double r = std::sqrt((x.row(i) - x.row(j)).squaredNorm()) - delta(i, j);
      sum += r * r;
      ++pairs;
    }
  EXPECT_NEAR(fidelity_error(x, delta), sum / pairs, 1e-12);
}

TEST(FidelityError, ShapeMismatch) {
  EXPECT_THROW(fidelity_error(random_matrix(3, 2, 1), Eigen::MatrixXd::Zero(4, 4)), ValidationError);
}

TEST(Scree, SquareRootsOfEigenvalues) {
  MdsModel m;
  m.eigenvalues = Eigen::Vector2d(4, 1);
  m.embedding = Eigen::MatrixXd::Zero(3, 2);
  const auto s = scree(m);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_DOUBLE_EQ(s[0], 2.0);
  EXPECT_DOUBLE_EQ(s[1], 1.0);
}

TEST(Scree, TwoPointModel) {
  Eigen::Matrix2d delta;
  delta << 0, 2, 2, 0;
  const auto s = scree(mds_fit(delta, 1));
  ASSERT_EQ(s.size(), 1u);
  EXPECT_NEAR(s[0], std::sqrt(2.0), 1e-12);
}

TEST(Scree, LengthIsEffectiveDimension) {
  Eigen::Matrix3d delta;
  delta << 0, 1, 2, 1, 0, 1, 2, 1, 0;
  const auto m = mds_fit(delta, 2);
  EXPECT_EQ(scree(m).size(), static_cast<std::size_t>(m.dim()));
}
