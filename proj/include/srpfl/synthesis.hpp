#pragma once

// Ground-truth model y_i = w_i*^T B*^T x + z and per-(client, round) batches.

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <utility>

#include "srpfl/error.hpp"
#include "srpfl/linalg.hpp"
#include "srpfl/rng.hpp"

namespace srpfl {

struct GroundTruthModel {
  OrthonormalBasis b_star;  // d x k
  Matrix w_star;            // M x k, row i = w_i*^T, each row of norm sqrt(k)
  double sigma = 0.0;       // label noise std
  std::uint64_t seed = 0;

  Eigen::Index d() const noexcept { return b_star.dim(); }
  Eigen::Index k() const noexcept { return b_star.rank(); }
  Eigen::Index num_clients() const noexcept { return w_star.rows(); }
};

struct Batch {
  Matrix x;  // m x d, rows are samples
  Vector y;  // m
  std::size_t client = 0;
  std::uint64_t round = 0;

  Eigen::Index size() const noexcept { return x.rows(); }
};

inline GroundTruthModel gen_ground_truth(Eigen::Index d, Eigen::Index k, Eigen::Index num_clients, double sigma,
                                         std::uint64_t seed) {
  if (k < 1 || k > d) throw Error(Errc::InvalidArgument, "need 1 <= k <= d");
  if (num_clients < 1) throw Error(Errc::InvalidArgument, "need M >= 1");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw Error(Errc::InvalidArgument, "need finite sigma >= 0");

  rng::CounterRng gen(seed, rng::Stream::GroundTruth);
  std::normal_distribution<double> normal;

  Matrix raw(d, k);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < k; ++j) raw(i, j) = normal(gen);
  auto qr = thin_qr(raw);

  Matrix heads(num_clients, k);
  const double target = std::sqrt(static_cast<double>(k));
  for (Eigen::Index i = 0; i < num_clients; ++i) {
    Vector w(k);
    double norm = 0.0;
    // A zero draw has probability zero; resample rather than fail.
    do {
      for (Eigen::Index j = 0; j < k; ++j) w(j) = normal(gen);
      norm = w.norm();
    } while (!(norm > 0.0));
    heads.row(i) = (w * (target / norm)).transpose();
  }
  return {std::move(qr.q), std::move(heads), sigma, seed};
}

/// Labels for a given design: y = X B* w_client* + noise.
inline Vector labels_for(const GroundTruthModel& gt, std::size_t client, const Matrix& x, const Vector& noise) {
  if (client >= static_cast<std::size_t>(gt.num_clients()))
    throw Error(Errc::ClientOutOfRange, "client " + std::to_string(client));
  if (x.cols() != gt.d() || noise.size() != x.rows())
    throw Error(Errc::DimensionMismatch, "labels_for: design/noise shape mismatch");
  const Vector beta = gt.b_star.matrix() * gt.w_star.row(static_cast<Eigen::Index>(client)).transpose();
  return x * beta + noise;
}

/// Fresh i.i.d. Gaussian batch; the draw is a pure function of
/// (seed, client, round).
inline Batch sample_batch(const GroundTruthModel& gt, std::size_t client, Eigen::Index m, std::uint64_t round,
                          std::uint64_t seed) {
  if (client >= static_cast<std::size_t>(gt.num_clients())) {
    std::ostringstream os;
    os << "client " << client << " >= M = " << gt.num_clients();
    throw Error(Errc::ClientOutOfRange, os.str());
  }
  if (m < 1) throw Error(Errc::InvalidArgument, "batch size m must be >= 1");

  rng::CounterRng gen(seed, rng::Stream::Batch, {static_cast<std::uint64_t>(client), round});
  std::normal_distribution<double> normal;
  const auto d = gt.d();
  Matrix x(m, d);
  for (Eigen::Index j = 0; j < m; ++j)
    for (Eigen::Index c = 0; c < d; ++c) x(j, c) = normal(gen);
  Vector noise = Vector::Zero(m);
  if (gt.sigma > 0.0)
    for (Eigen::Index j = 0; j < m; ++j) noise(j) = gt.sigma * normal(gen);
  Vector y = labels_for(gt, client, x, noise);
  return {std::move(x), std::move(y), client, round};
}

}  // namespace srpfl
