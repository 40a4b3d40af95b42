#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "srpfl/fedrep.hpp"

using namespace srpfl;

namespace {

std::vector<std::size_t> iota_ids(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

LearningState start_from(const OrthonormalBasis& b, const GroundTruthModel& gt) {
  return {b, Matrix::Zero(gt.num_clients(), gt.k()), 0};
}

double loss(const Batch& batch, const Matrix& b, const Vector& w) {
  return (batch.y - batch.x * b * w).squaredNorm() / (2.0 * static_cast<double>(batch.size()));
}

}  // namespace

TEST(HeadUpdate, RecoversTrueHeadWithoutNoise) {
  const auto gt = gen_ground_truth(8, 3, 4, 0.0, 1);
  const auto batch = sample_batch(gt, 2, 10, 1, 3);
  const Vector w = head_update(gt.b_star, batch);
  EXPECT_LE((w - gt.w_star.row(2).transpose()).norm(), 1e-10);
}

TEST(HeadUpdate, HandNormalEquations) {
  Matrix b(2, 1);
  b << 1, 0;
  Batch batch{Matrix(2, 2), Vector(2), 0, 0};
  batch.x << 1, 0, 2, 0;
  batch.y << 3, 6;
  // Gram = (1 + 4)/2, rhs = (3 + 12)/2.
  EXPECT_NEAR(head_update(OrthonormalBasis(b), batch)(0), 3.0, 1e-14);
}

TEST(HeadUpdate, OrthogonalDesignIsSingular) {
  Matrix b(2, 1);
  b << 1, 0;
  Batch batch{Matrix(3, 2), Vector(3), 0, 0};
  batch.x << 0, 1, 0, 2, 0, -1;
  batch.y << 1, 2, 3;
  try {
    head_update(OrthonormalBasis(b), batch);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::SingularGram);
  }
}

TEST(HeadUpdate, OptimalityResidual) {
  std::mt19937_64 gen(21);
  for (int t = 0; t < 100; ++t) {
    const Eigen::Index k = 1 + t % 4, d = k + 3 + t % 5, m = 3 * d;
    const OrthonormalBasis b = thin_qr(oracle::gaussian(d, k, gen)).q;
    Batch batch{oracle::gaussian(m, d, gen), oracle::gaussian(m, 1, gen).col(0) * 3.0, 0, 0};
    const Vector w = head_update(b, batch);
    const Vector partial =
        b.matrix().transpose() * batch.x.transpose() * (batch.x * b.matrix() * w - batch.y) / static_cast<double>(m);
    EXPECT_LE(partial.norm(), 1e-8);
    EXPECT_LE((partial * static_cast<double>(m)).norm(), 1e-8 * static_cast<double>(m) * (1.0 + batch.y.norm()));
  }
}

TEST(RepGradientStep, ZeroStepIsIdentity) {
  const auto gt = gen_ground_truth(5, 2, 2, 0.1, 1);
  const auto batch = sample_batch(gt, 0, 9, 1, 1);
  const Vector w = Vector::Ones(2);
  EXPECT_EQ(rep_gradient_step(gt.b_star, w, batch, 0.0), gt.b_star.matrix());
}

TEST(RepGradientStep, StationaryAtZeroResidual) {
  const auto gt = gen_ground_truth(5, 2, 2, 0.0, 1);
  const auto batch = sample_batch(gt, 1, 9, 1, 1);
  const Vector w = gt.w_star.row(1).transpose();
  EXPECT_LE((rep_gradient_step(gt.b_star, w, batch, 0.7) - gt.b_star.matrix()).norm(), 1e-13);
}

TEST(RepGradientStep, MatchesFiniteDifferencesSmallCase) {
  std::mt19937_64 gen(4);
  const OrthonormalBasis b = thin_qr(oracle::gaussian(3, 1, gen)).q;
  Batch batch{oracle::gaussian(2, 3, gen), oracle::gaussian(2, 1, gen).col(0), 0, 0};
  const Vector w = oracle::gaussian(1, 1, gen).col(0);
  const Matrix g = b.matrix() - rep_gradient_step(b, w, batch, 1.0);
  Matrix fd(3, 1);
  for (Eigen::Index i = 0; i < 3; ++i) {
    Matrix p = b.matrix(), n = b.matrix();
    p(i, 0) += 1e-6;
    n(i, 0) -= 1e-6;
    fd(i, 0) = (loss(batch, p, w) - loss(batch, n, w)) / 2e-6;
  }
  EXPECT_LE((g - fd).norm(), 1e-5 * fd.norm());
}

TEST(RepGradientStep, MatchesFiniteDifferencesRandomInstances) {
  std::mt19937_64 gen(99);
  for (int t = 0; t < 100; ++t) {
    const Eigen::Index k = 1 + t % 3, d = k + 1 + t % 6, m = 1 + t % 12;
    const OrthonormalBasis b = thin_qr(oracle::gaussian(d, k, gen)).q;
    Batch batch{oracle::gaussian(m, d, gen), oracle::gaussian(m, 1, gen).col(0), 0, 0};
    const Vector w = oracle::gaussian(k, 1, gen).col(0);
    const double eta = 0.37;
    const Matrix g = (b.matrix() - rep_gradient_step(b, w, batch, eta)) / eta;
    Matrix fd(d, k);
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = 0; j < k; ++j) {
        Matrix p = b.matrix(), n = b.matrix();
        p(i, j) += 1e-6;
        n(i, j) -= 1e-6;
        fd(i, j) = (loss(batch, p, w) - loss(batch, n, w)) / 2e-6;
      }
    EXPECT_LE((g - fd).norm(), 1e-5 * std::max(fd.norm(), 1e-8)) << "instance " << t;
  }
}

TEST(ServerAggregate, IdenticalInputsKeepSpan) {
  std::mt19937_64 gen(5);
  const OrthonormalBasis b = thin_qr(oracle::gaussian(6, 2, gen)).q;
  const std::vector<Matrix> in(4, b.matrix());
  const auto out = server_aggregate(in, 4);
  EXPECT_LE(principal_angle_dist(out.q, b), 1e-14);
}

TEST(ServerAggregate, CancellationIsRankDeficient) {
  const Matrix b = Matrix::Identity(4, 2);
  const std::vector<Matrix> in{b, -b};
  try {
    server_aggregate(in, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::RankDeficient);
  }
}

TEST(ServerAggregate, MeanFactorsExactly) {
  std::mt19937_64 gen(5);
  std::vector<Matrix> in;
  for (int i = 0; i < 3; ++i) in.push_back(oracle::gaussian(4, 2, gen));
  const Matrix mean = (in[0] + in[1] + in[2]) / 3.0;
  const auto out = server_aggregate(in, 3);
  EXPECT_LE((out.q.matrix() * out.r - mean).norm(), 1e-9 * mean.norm());
  EXPECT_LE(linalg::orthonormality_defect(out.q.matrix()), 1e-10);
  EXPECT_LE((out.q.matrix() - oracle::gram_schmidt(mean)).norm(), 1e-12);
}

TEST(ServerAggregate, CountMismatch) {
  const std::vector<Matrix> in{Matrix::Identity(3, 1)};
  EXPECT_THROW(server_aggregate(in, 2), Error);
  EXPECT_THROW(server_aggregate({}, 0), Error);
}

TEST(MethodOfMoments, SingleClientLargeSample) {
  const auto gt = gen_ground_truth(5, 1, 1, 0.0, 3);
  const std::vector<std::size_t> ids{0};
  const auto init = method_of_moments_init(gt, ids, 100000, 3);
  EXPECT_LE(principal_angle_dist(init.basis, gt.b_star), 0.1);
}

TEST(MethodOfMoments, AgreesWithJacobiOnAveragedMoments) {
  const auto gt = gen_ground_truth(6, 2, 5, 0.2, 1);
  const auto ids = iota_ids(5);
  Matrix avg = Matrix::Zero(6, 6);
  for (std::size_t c : ids) {
    const auto b = sample_batch(gt, c, 300, 0, 8);
    for (Eigen::Index j = 0; j < b.x.rows(); ++j) avg += b.y(j) * b.y(j) * b.x.row(j).transpose() * b.x.row(j) / 300.0;
  }
  avg /= 5.0;
  const auto ref = oracle::jacobi_eigen(avg);
  const auto init = method_of_moments_init(gt, ids, 300, 8);
  EXPECT_LE(oracle::subspace_dist(ref.vectors.leftCols(2), init.basis.matrix()), 1e-9);
}

TEST(MethodOfMoments, AllZeroLabels) {
  Batch batch{Matrix::Ones(4, 3), Vector::Zero(4), 0, 0};
  const std::vector<Batch> batches{batch, batch};
  try {
    moments_init_from_batches(batches, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::AllZeroMoments);
  }
}

TEST(MethodOfMoments, FullDimensionalSubspace) {
  const auto gt = gen_ground_truth(3, 3, 2, 0.0, 4);
  const auto init = method_of_moments_init(gt, iota_ids(2), 20, 4);
  EXPECT_LE(principal_angle_dist(init.basis, gt.b_star), 1e-12);
}

TEST(MethodOfMoments, ParticipantOrderIrrelevant) {
  const auto gt = gen_ground_truth(6, 2, 5, 0.2, 1);
  const std::vector<std::size_t> a{0, 3, 4}, b{4, 0, 3};
  EXPECT_EQ(method_of_moments_init(gt, a, 50, 1).basis.matrix(), method_of_moments_init(gt, b, 50, 1).basis.matrix());
}

TEST(FedRepRound, FixedPointAtTruth) {
  const auto gt = gen_ground_truth(10, 2, 8, 0.0, 2);
  const auto next = fedrep_round(start_from(gt.b_star, gt), gt, iota_ids(8), 30, 0.1, 2);
  EXPECT_LE(principal_angle_dist(next.b, gt.b_star), 1e-9);
  EXPECT_EQ(next.round, 1u);
}

TEST(FedRepRound, ZeroStepKeepsSpan) {
  std::mt19937_64 gen(3);
  const auto gt = gen_ground_truth(10, 2, 8, 0.0, 2);
  const OrthonormalBasis b = thin_qr(oracle::gaussian(10, 2, gen)).q;
  const auto next = fedrep_round(start_from(b, gt), gt, iota_ids(8), 30, 0.0, 2);
  EXPECT_LE(principal_angle_dist(next.b, b), 1e-12);
}

TEST(FedRepRound, NoiselessDistanceDecreases) {
  const auto gt = gen_ground_truth(10, 2, 8, 0.0, 9);
  const auto init = method_of_moments_init(gt, iota_ids(8), 60, 9);
  LearningState s = start_from(init.basis, gt);
  double prev = principal_angle_dist(s.b, gt.b_star);
  const double eta = 0.1;
  for (int r = 0; r < 5; ++r) {
    s = fedrep_round(s, gt, iota_ids(8), 60, eta, 9);
    const double d = principal_angle_dist(s.b, gt.b_star);
    EXPECT_LT(d, prev) << "round " << r;
    prev = d;
  }
}

TEST(FedRepRound, StaleHeadsForNonParticipants) {
  const auto gt = gen_ground_truth(6, 2, 5, 0.1, 1);
  LearningState s = start_from(gt.b_star, gt);
  s.heads.setConstant(7.0);
  const std::vector<std::size_t> ids{1, 3};
  const auto next = fedrep_round(s, gt, ids, 20, 0.1, 1);
  for (Eigen::Index i : {0, 2, 4}) EXPECT_EQ(next.heads.row(i), s.heads.row(i));
  for (Eigen::Index i : {1, 3}) EXPECT_NE(next.heads.row(i), s.heads.row(i));
}

TEST(FedRepRound, OrderIndependent) {
  const auto gt = gen_ground_truth(6, 2, 5, 0.1, 1);
  const auto s = start_from(gt.b_star, gt);
  const std::vector<std::size_t> a{4, 1, 2}, b{1, 2, 4};
  EXPECT_EQ(fedrep_round(s, gt, a, 20, 0.1, 5).b.matrix(), fedrep_round(s, gt, b, 20, 0.1, 5).b.matrix());
}

TEST(FedRepRound, ErrorsNameTheClient) {
  const auto gt = gen_ground_truth(6, 3, 5, 0.1, 1);
  const auto s = start_from(gt.b_star, gt);
  const std::vector<std::size_t> ids{2};
  try {
    fedrep_round(s, gt, ids, 2, 0.1, 1);  // m < k
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::SingularGram);
    EXPECT_NE(std::string(e.what()).find("client 2"), std::string::npos);
  }
  const std::vector<std::size_t> dup{1, 1};
  EXPECT_THROW(fedrep_round(s, gt, dup, 20, 0.1, 1), Error);
  const std::vector<std::size_t> out{5};
  EXPECT_THROW(fedrep_round(s, gt, out, 20, 0.1, 1), Error);
  EXPECT_THROW(fedrep_round(s, gt, {}, 20, 0.1, 1), Error);
}

TEST(FedRepRound, NoiselessLinearConvergence) {
  const auto gt = gen_ground_truth(20, 2, 40, 0.0, 11);
  const auto ids = iota_ids(40);
  LearningState s = start_from(method_of_moments_init(gt, ids, 50, 11).basis, gt);
  const double d0 = principal_angle_dist(s.b, gt.b_star);
  std::vector<double> xs, ys;
  int reached = -1;
  for (int r = 1; r <= 200; ++r) {
    s = fedrep_round(s, gt, ids, 50, 0.1, 11);
    const double d = principal_angle_dist(s.b, gt.b_star);
    xs.push_back(r);
    ys.push_back(std::log(d / d0));
    if (d <= 1e-6) {
      reached = r;
      break;
    }
  }
  ASSERT_GT(reached, 0);
  const auto [slope, r2] = oracle::linear_fit(xs, ys);
  EXPECT_LT(std::exp(slope), 1.0);
}

TEST(FedRepRound, RotationInvariantTrajectory) {
  std::mt19937_64 gen(13);
  const auto gt = gen_ground_truth(10, 3, 12, 0.05, 3);
  const OrthonormalBasis b = thin_qr(oracle::gaussian(10, 3, gen)).q;
  const Matrix q = thin_qr(oracle::gaussian(3, 3, gen)).q.matrix();
  LearningState s1 = start_from(b, gt), s2 = start_from(OrthonormalBasis(b.matrix() * q, 1e-9), gt);
  const auto ids = iota_ids(12);
  for (int r = 0; r < 10; ++r) {
    s1 = fedrep_round(s1, gt, ids, 40, 0.1, 3);
    s2 = fedrep_round(s2, gt, ids, 40, 0.1, 3);
    EXPECT_NEAR(principal_angle_dist(s1.b, gt.b_star), principal_angle_dist(s2.b, gt.b_star), 1e-8);
  }
}
