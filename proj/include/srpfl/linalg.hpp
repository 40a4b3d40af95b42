#pragma once

// Dense kernels shared by every other module: thin QR with a positive-diagonal
// convention, top-k symmetric eigenvectors, spectral norm and the
// principal-angle subspace distance. Eigen provides storage and the
// factorizations; the conventions and checks live here.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <utility>

#include "srpfl/error.hpp"

namespace srpfl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

namespace linalg {

inline constexpr double kOrthonormalTol = 1e-10;
inline constexpr double kRankTol = 1e-12;
inline constexpr double kSymmetryTol = 1e-10;
inline constexpr double kEigenGapTol = 1e-12;

inline bool all_finite(const Matrix& a) { return a.allFinite(); }

inline double orthonormality_defect(const Matrix& q) {
  return (q.transpose() * q - Matrix::Identity(q.cols(), q.cols())).norm();
}

}  // namespace linalg

/// A d x k matrix with orthonormal columns (d >= k).
class OrthonormalBasis {
 public:
  OrthonormalBasis() = default;

  /// Checked construction; throws NotOrthonormal when Q^T Q deviates from I
  /// by more than `tol` in Frobenius norm.
  explicit OrthonormalBasis(Matrix q, double tol = linalg::kOrthonormalTol) : q_(std::move(q)) {
    if (q_.rows() < q_.cols() || q_.cols() < 1)
      throw Error(Errc::DimensionMismatch, "orthonormal basis needs d >= k >= 1");
    if (!q_.allFinite()) throw Error(Errc::NotOrthonormal, "non-finite entries");
    const double defect = linalg::orthonormality_defect(q_);
    if (!(defect <= tol)) {
      std::ostringstream os;
      os << "||Q^T Q - I||_F = " << defect << " exceeds " << tol;
      throw Error(Errc::NotOrthonormal, os.str());
    }
  }

  const Matrix& matrix() const noexcept { return q_; }
  Eigen::Index dim() const noexcept { return q_.rows(); }
  Eigen::Index rank() const noexcept { return q_.cols(); }

 private:
  Matrix q_;
};

struct QrResult {
  OrthonormalBasis q;
  Matrix r;
};

/// Thin Householder QR of a full-column-rank d x k matrix. Signs are fixed so
/// that diag(R) > 0, which makes the factorization unique.
inline QrResult thin_qr(const Matrix& a) {
  const auto d = a.rows();
  const auto k = a.cols();
  if (k < 1 || d < k) throw Error(Errc::DimensionMismatch, "thin_qr needs d >= k >= 1");
  if (!a.allFinite()) throw Error(Errc::InvalidArgument, "thin_qr input has non-finite entries");

  Eigen::HouseholderQR<Matrix> qr(a);
  Matrix r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  Matrix q = qr.householderQ() * Matrix::Identity(d, k);

  // Full column rank test on R (same singular values as a).
  const Vector sv = Eigen::JacobiSVD<Matrix>(r).singularValues();
  if (!(sv(k - 1) > linalg::kRankTol * sv(0))) {
    std::ostringstream os;
    os << "sigma_min/sigma_max = " << (sv(0) > 0 ? sv(k - 1) / sv(0) : 0.0);
    throw Error(Errc::RankDeficient, os.str());
  }

  for (Eigen::Index j = 0; j < k; ++j) {
    if (r(j, j) < 0) {
      r.row(j) *= -1.0;
      q.col(j) *= -1.0;
    }
  }
  // Householder Q is orthonormal to machine precision; the check guards input
  // pathologies rather than arithmetic.
  return {OrthonormalBasis(std::move(q), 1e-9), std::move(r)};
}

struct EigResult {
  OrthonormalBasis basis;
  Vector eigenvalues;          // top-k, descending
  bool gap_degenerate = false; // lambda_k == lambda_{k+1}: span is not unique
};

/// Eigenvectors of the k largest eigenvalues of a symmetric matrix.
inline EigResult rank_k_eig(const Matrix& s, Eigen::Index k) {
  const auto d = s.rows();
  if (s.cols() != d) throw Error(Errc::DimensionMismatch, "rank_k_eig needs a square matrix");
  if (k < 1 || k > d) throw Error(Errc::InvalidArgument, "rank_k_eig needs 1 <= k <= d");
  if (!s.allFinite()) throw Error(Errc::InvalidArgument, "rank_k_eig input has non-finite entries");
  const double scale = std::max(1.0, s.cwiseAbs().maxCoeff());
  const double asym = (s - s.transpose()).cwiseAbs().maxCoeff();
  if (asym > linalg::kSymmetryTol * scale) {
    std::ostringstream os;
    os << "max |S - S^T| = " << asym;
    throw Error(Errc::NotSymmetric, os.str());
  }

  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (s + s.transpose()));
  if (es.info() != Eigen::Success) throw Error(Errc::InvalidArgument, "eigensolver failed");
  // Eigen returns ascending eigenvalues.
  Matrix v(d, k);
  Vector lambda(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    v.col(j) = es.eigenvectors().col(d - 1 - j);
    lambda(j) = es.eigenvalues()(d - 1 - j);
    // Deterministic sign: largest-magnitude entry positive.
    Eigen::Index arg = 0;
    v.col(j).cwiseAbs().maxCoeff(&arg);
    if (v(arg, j) < 0) v.col(j) *= -1.0;
  }
  bool degenerate = false;
  if (k < d) {
    const double lam_scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
    degenerate = std::abs(es.eigenvalues()(d - k) - es.eigenvalues()(d - k - 1)) <= linalg::kEigenGapTol * lam_scale;
  }
  return {OrthonormalBasis(std::move(v), 1e-9), std::move(lambda), degenerate};
}

/// Largest singular value.
inline double spectral_norm(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  const Vector sv = Eigen::JacobiSVD<Matrix>(a).singularValues();
  return sv.size() ? sv(0) : 0.0;
}

/// Sine of the largest principal angle: ||(I - B1 B1^T) B2||_2. The residual
/// form never materializes the d x (d-k) complement of B1.
inline double principal_angle_dist(const OrthonormalBasis& b1, const OrthonormalBasis& b2) {
  if (b1.dim() != b2.dim() || b1.rank() != b2.rank())
    throw Error(Errc::DimensionMismatch, "principal_angle_dist needs equal d and k");
  const Matrix& p = b1.matrix();
  const Matrix& q = b2.matrix();
  const Matrix residual = q - p * (p.transpose() * q);
  return std::clamp(spectral_norm(residual), 0.0, 1.0);
}

/// Smallest singular value of a (possibly scaled) head matrix.
inline double sigma_min(const Matrix& a) {
  const Vector sv = Eigen::JacobiSVD<Matrix>(a).singularValues();
  return sv.size() ? sv(sv.size() - 1) : 0.0;
}

}  // namespace srpfl
