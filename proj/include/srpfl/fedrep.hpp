#pragma once

// One communication round of alternating minimization-descent in the linear
// shared-representation model, and the method-of-moments warm start.
//
// Per participating client i with fresh batch (X_i, y_i):
//   w_i   = argmin_w 1/(2m) ||y_i - X_i B w||^2            (exact SPD solve)
//   B_i   = B - (eta/m) X_i^T (X_i B w_i - y_i) w_i^T     (one gradient step)
// Server: B+ = QR( (1/n) sum_i B_i ).

#include <algorithm>
#include <cstdint>
#include <span>
#include <sstream>
#include <vector>

#include "srpfl/error.hpp"
#include "srpfl/linalg.hpp"
#include "srpfl/synthesis.hpp"

namespace srpfl {

inline constexpr double kSingularGramTol = 1e-10;

struct LearningState {
  OrthonormalBasis b;    // global representation, d x k
  Matrix heads;          // M x k; rows of non-participants are stale
  std::uint64_t round = 0;
};

/// Exact least-squares head for a fixed representation.
inline Vector head_update(const OrthonormalBasis& b, const Batch& batch) {
  if (batch.x.cols() != b.dim() || batch.y.size() != batch.x.rows())
    throw Error(Errc::DimensionMismatch, "head_update: batch does not match representation");
  const double m = static_cast<double>(batch.size());
  const Matrix xb = batch.x * b.matrix();  // m x k
  const Matrix gram = (xb.transpose() * xb) / m;
  const Vector rhs = (xb.transpose() * batch.y) / m;

  Eigen::SelfAdjointEigenSolver<Matrix> es(gram, Eigen::EigenvaluesOnly);
  const double lam_min = es.eigenvalues()(0);
  if (!(lam_min > kSingularGramTol)) {
    std::ostringstream os;
    os << "sigma_min((1/m) B^T X^T X B) = " << lam_min << " (m = " << batch.size() << ")";
    throw Error(Errc::SingularGram, os.str());
  }
  return gram.llt().solve(rhs);
}

/// Per-client representation step; the 1/n factor is applied by the server.
inline Matrix rep_gradient_step(const OrthonormalBasis& b, const Vector& w, const Batch& batch, double eta) {
  if (batch.x.cols() != b.dim() || w.size() != b.rank())
    throw Error(Errc::DimensionMismatch, "rep_gradient_step: shape mismatch");
  if (!(eta >= 0.0)) throw Error(Errc::InvalidArgument, "eta must be >= 0");
  const double m = static_cast<double>(batch.size());
  const Vector residual = batch.x * (b.matrix() * w) - batch.y;
  return b.matrix() - (eta / m) * (batch.x.transpose() * residual) * w.transpose();
}

/// Entrywise mean of the contributions followed by thin QR.
inline QrResult server_aggregate(std::span<const Matrix> contributions, std::size_t n) {
  if (n == 0 || contributions.size() != n)
    throw Error(Errc::InvalidArgument, "server_aggregate: expected n contributions");
  Matrix sum = contributions.front();
  for (std::size_t i = 1; i < n; ++i) {
    if (contributions[i].rows() != sum.rows() || contributions[i].cols() != sum.cols())
      throw Error(Errc::DimensionMismatch, "server_aggregate: non-uniform contribution shapes");
    sum += contributions[i];
  }
  sum /= static_cast<double>(n);
  try {
    return thin_qr(sum);
  } catch (const Error& e) {
    e.rethrow_with("server_aggregate");
  }
}

/// P = (1/m) sum_j y_j^2 x_j x_j^T for one batch.
inline Matrix moment_matrix(const Batch& batch) {
  const double m = static_cast<double>(batch.size());
  const Matrix weighted = batch.x.array().colwise() * batch.y.array();  // rows y_j x_j^T
  return (weighted.transpose() * weighted) / m;
}

/// Rank-k eigenspace of the averaged moment matrices. Throws AllZeroMoments
/// when every label is zero.
inline EigResult moments_init_from_batches(std::span<const Batch> batches, Eigen::Index k) {
  if (batches.empty()) throw Error(Errc::EmptyParticipants, "method of moments needs at least one client");
  const auto d = batches.front().x.cols();
  Matrix avg = Matrix::Zero(d, d);
  bool any_label = false;
  for (const Batch& b : batches) {
    if (b.x.cols() != d) throw Error(Errc::DimensionMismatch, "moment batches disagree on d");
    any_label = any_label || (b.y.array() != 0.0).any();
    avg += moment_matrix(b);
  }
  if (!any_label) throw Error(Errc::AllZeroMoments, "every label is zero; moment matrix vanishes");
  avg /= static_cast<double>(batches.size());
  return rank_k_eig(avg, k);
}

/// Each participant draws its round-0 batch; the server returns the top-k
/// eigenspace of (1/n) sum_i P_i. `gap_degenerate` on the result is a warning.
inline EigResult method_of_moments_init(const GroundTruthModel& gt, std::span<const std::size_t> participants,
                                        Eigen::Index m, std::uint64_t seed) {
  if (participants.empty()) throw Error(Errc::EmptyParticipants, "method of moments needs at least one client");
  std::vector<std::size_t> order(participants.begin(), participants.end());
  std::sort(order.begin(), order.end());
  std::vector<Batch> batches;
  batches.reserve(order.size());
  for (std::size_t c : order) batches.push_back(sample_batch(gt, c, m, 0, seed));
  return moments_init_from_batches(batches, gt.k());
}

/// One communication round. Work is reduced in ascending client order so the
/// result does not depend on the order participants were selected in.
inline LearningState fedrep_round(const LearningState& state, const GroundTruthModel& gt,
                                  std::span<const std::size_t> participants, Eigen::Index m, double eta,
                                  std::uint64_t seed) {
  if (participants.empty()) throw Error(Errc::EmptyParticipants, "fedrep_round needs participants");
  std::vector<std::size_t> order(participants.begin(), participants.end());
  std::sort(order.begin(), order.end());
  if (std::adjacent_find(order.begin(), order.end()) != order.end())
    throw Error(Errc::InvalidArgument, "duplicate participant");
  if (order.back() >= static_cast<std::size_t>(gt.num_clients()))
    throw Error(Errc::ClientOutOfRange, "client " + std::to_string(order.back()));

  const std::uint64_t round = state.round + 1;
  LearningState next{state.b, state.heads, round};
  std::vector<Matrix> contributions;
  contributions.reserve(order.size());
  for (std::size_t c : order) {
    try {
      const Batch batch = sample_batch(gt, c, m, round, seed);
      const Vector w = head_update(state.b, batch);
      next.heads.row(static_cast<Eigen::Index>(c)) = w.transpose();
      contributions.push_back(rep_gradient_step(state.b, w, batch, eta));
    } catch (const Error& e) {
      e.rethrow_with("client " + std::to_string(c));
    }
  }
  next.b = server_aggregate(contributions, contributions.size()).q;
  return next;
}

}  // namespace srpfl
