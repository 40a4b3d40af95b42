#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "srpfl/synthesis.hpp"

using namespace srpfl;

TEST(GroundTruth, SquareCaseIsOrthogonal) {
  const auto gt = gen_ground_truth(3, 3, 1, 0.0, 0);
  EXPECT_LE(linalg::orthonormality_defect(gt.b_star.matrix()), 1e-12);
  EXPECT_NEAR(gt.w_star.row(0).norm(), std::sqrt(3.0), 1e-12);
}

TEST(GroundTruth, RankOneHeadsAreSigns) {
  const auto gt = gen_ground_truth(6, 1, 40, 0.1, 5);
  for (Eigen::Index i = 0; i < gt.w_star.rows(); ++i) EXPECT_NEAR(std::abs(gt.w_star(i, 0)), 1.0, 1e-15);
}

TEST(GroundTruth, HeadsHaveNormSqrtK) {
  const auto gt = gen_ground_truth(12, 4, 30, 0.1, 8);
  for (Eigen::Index i = 0; i < gt.w_star.rows(); ++i) EXPECT_NEAR(gt.w_star.row(i).norm(), 2.0, 1e-9);
}

TEST(GroundTruth, ClientDiversity) {
  const auto gt = gen_ground_truth(10, 2, 50, 0.0, 7);
  const auto sv = oracle::singular_values(gt.w_star / std::sqrt(50.0));
  EXPECT_GT(sv(1), 0.0);
}

TEST(GroundTruth, DeterministicInSeed) {
  const auto a = gen_ground_truth(8, 2, 5, 0.1, 42);
  const auto b = gen_ground_truth(8, 2, 5, 0.1, 42);
  const auto c = gen_ground_truth(8, 2, 5, 0.1, 43);
  EXPECT_EQ(a.b_star.matrix(), b.b_star.matrix());
  EXPECT_EQ(a.w_star, b.w_star);
  EXPECT_NE(a.w_star, c.w_star);
}

TEST(GroundTruth, RejectsBadShapes) {
  EXPECT_THROW(gen_ground_truth(2, 3, 1, 0.0, 0), Error);
  EXPECT_THROW(gen_ground_truth(2, 0, 1, 0.0, 0), Error);
  EXPECT_THROW(gen_ground_truth(2, 1, 0, 0.0, 0), Error);
  EXPECT_THROW(gen_ground_truth(2, 1, 1, -1.0, 0), Error);
}

TEST(Labels, ZeroDesignGivesZeroLabels) {
  const auto gt = gen_ground_truth(4, 2, 3, 0.0, 1);
  const Vector y = labels_for(gt, 1, Matrix::Zero(5, 4), Vector::Zero(5));
  EXPECT_EQ(y, Vector::Zero(5));
}

TEST(Labels, IdentityModel) {
  GroundTruthModel gt{OrthonormalBasis(Matrix::Identity(1, 1)), Matrix::Ones(1, 1), 0.0, 0};
  Matrix x(1, 1);
  x << 2.0;
  EXPECT_DOUBLE_EQ(labels_for(gt, 0, x, Vector::Zero(1))(0), 2.0);
}

TEST(SampleBatch, ShapesAndClientCheck) {
  const auto gt = gen_ground_truth(6, 2, 4, 0.1, 1);
  const auto b = sample_batch(gt, 3, 11, 2, 9);
  EXPECT_EQ(b.x.rows(), 11);
  EXPECT_EQ(b.x.cols(), 6);
  EXPECT_EQ(b.y.size(), 11);
  EXPECT_EQ(b.client, 3u);
  EXPECT_EQ(b.round, 2u);
  try {
    sample_batch(gt, 4, 11, 2, 9);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ClientOutOfRange);
  }
  EXPECT_THROW(sample_batch(gt, 0, 0, 0, 9), Error);
}

TEST(SampleBatch, DeterministicAndFresh) {
  const auto gt = gen_ground_truth(6, 2, 4, 0.1, 1);
  const auto a = sample_batch(gt, 1, 20, 5, 9);
  const auto b = sample_batch(gt, 1, 20, 5, 9);
  EXPECT_EQ(a.x, b.x);
  EXPECT_EQ(a.y, b.y);
  EXPECT_NE(a.x, sample_batch(gt, 1, 20, 6, 9).x);
  EXPECT_NE(a.x, sample_batch(gt, 2, 20, 5, 9).x);
  EXPECT_NE(a.x, sample_batch(gt, 1, 20, 5, 10).x);
}

TEST(SampleBatch, NoiselessLabelsFollowModel) {
  const auto gt = gen_ground_truth(5, 2, 3, 0.0, 2);
  const auto b = sample_batch(gt, 2, 30, 1, 4);
  const Vector beta = gt.b_star.matrix() * gt.w_star.row(2).transpose();
  EXPECT_LE((b.x * beta - b.y).norm(), 1e-12);
}

TEST(SampleBatch, CrossMomentMatchesModel) {
  const auto gt = gen_ground_truth(5, 2, 1, 0.0, 3);
  const auto b = sample_batch(gt, 0, 100000, 0, 5);
  // E[y x] = B* w*.
  const Vector est = b.x.transpose() * b.y / 100000.0;
  const Vector beta = gt.b_star.matrix() * gt.w_star.row(0).transpose();
  EXPECT_LE((est - beta).norm(), 0.03 * beta.norm());
}

TEST(SampleBatch, FourthMomentIdentity) {
  const auto gt = gen_ground_truth(4, 2, 1, 0.3, 6);
  const auto b = sample_batch(gt, 0, 200000, 0, 7);
  Matrix p = Matrix::Zero(4, 4);
  for (Eigen::Index j = 0; j < b.x.rows(); ++j) p += b.y(j) * b.y(j) * b.x.row(j).transpose() * b.x.row(j);
  p /= static_cast<double>(b.x.rows());
  const Vector beta = gt.b_star.matrix() * gt.w_star.row(0).transpose();
  const Matrix expect = 2.0 * beta * beta.transpose() + (beta.squaredNorm() + 0.09) * Matrix::Identity(4, 4);
  EXPECT_LE(oracle::max_singular_value(p - expect), 0.05 * oracle::max_singular_value(expect));
}

TEST(SampleBatch, NoiseHasRequestedScale) {
  const auto gt = gen_ground_truth(3, 1, 1, 0.5, 1);
  const auto b = sample_batch(gt, 0, 100000, 0, 2);
  const Vector beta = gt.b_star.matrix() * gt.w_star.row(0).transpose();
  const Vector z = b.y - b.x * beta;
  EXPECT_NEAR(std::sqrt(z.squaredNorm() / 100000.0), 0.5, 0.01);
}
