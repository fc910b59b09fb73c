#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <complex>
#include <vector>

#include "errors.hpp"

namespace bearing_forge {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

namespace linalg {

inline MatrixXd kron(const MatrixXd& a, const MatrixXd& b) {
  MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

inline double min_singular_value(const MatrixXd& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<MatrixXd> svd(a);
  return svd.singularValues().minCoeff();
}

inline Eigen::VectorXcd eigenvalues(const MatrixXd& a) {
  Eigen::EigenSolver<MatrixXd> es(a, /*computeEigenvectors=*/false);
  return es.eigenvalues();
}

/// Largest real part over the spectrum. Negative iff `a` is Hurwitz.
inline double spectral_abscissa(const MatrixXd& a) {
  return eigenvalues(a).real().maxCoeff();
}

inline bool is_hurwitz(const MatrixXd& a) { return spectral_abscissa(a) < 0.0; }

inline double symmetric_min_eigenvalue(const MatrixXd& s) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(s, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

inline double symmetric_max_eigenvalue(const MatrixXd& s) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(s, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

inline bool is_symmetric(const MatrixXd& s, double tol = 1e-12) {
  return s.rows() == s.cols() && (s - s.transpose()).cwiseAbs().maxCoeff() <= tol * (1.0 + s.cwiseAbs().maxCoeff());
}

inline bool is_positive_definite(const MatrixXd& s) {
  return is_symmetric(s, 1e-10) && symmetric_min_eigenvalue(s) > 0.0;
}

/// [N, MN, ..., M^{q-1}N]
inline MatrixXd controllability_matrix(const MatrixXd& m, const MatrixXd& n) {
  const Eigen::Index q = m.rows();
  MatrixXd ctrb(q, q * n.cols());
  MatrixXd block = n;
  for (Eigen::Index k = 0; k < q; ++k) {
    ctrb.middleCols(k * n.cols(), n.cols()) = block;
    block = m * block;
  }
  return ctrb;
}

inline Eigen::Index numerical_rank(const MatrixXd& a) {
  Eigen::JacobiSVD<MatrixXd> svd(a);
  const VectorXd& s = svd.singularValues();
  if (s.size() == 0) return 0;
  const double tol = std::max(a.rows(), a.cols()) * s(0) * Eigen::NumTraits<double>::epsilon();
  return (s.array() > tol).count();
}

/// Rank of [N, MN, ..., M^{q-1}N] after scaling every column to unit norm.
/// Column scaling leaves the rank unchanged; without it the powers of M in
/// companion form span ten or more decades and a plain SVD threshold
/// undercounts.
inline Eigen::Index controllability_rank(const MatrixXd& m, const MatrixXd& n) {
  MatrixXd c = controllability_matrix(m, n);
  for (Eigen::Index k = 0; k < c.cols(); ++k) {
    const double norm = c.col(k).norm();
    if (norm > 0.0) c.col(k) /= norm;
  }
  return numerical_rank(c);
}

/// Companion matrix of the monic polynomial
/// lambda^q + coeffs[0] lambda^{q-1} + ... + coeffs[q-1]:
/// ones on the superdiagonal, last row (-coeffs[q-1], ..., -coeffs[0]).
inline MatrixXd companion(const std::vector<double>& coeffs) {
  const auto q = static_cast<Eigen::Index>(coeffs.size());
  MatrixXd c = MatrixXd::Zero(q, q);
  for (Eigen::Index i = 0; i + 1 < q; ++i) c(i, i + 1) = 1.0;
  for (Eigen::Index j = 0; j < q; ++j) c(q - 1, j) = -coeffs[static_cast<std::size_t>(q - 1 - j)];
  return c;
}

/// Product of two polynomials, coefficients ordered from the highest power down.
inline std::vector<double> poly_multiply(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.empty() || b.empty()) return {};
  std::vector<double> out(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
  }
  return out;
}

/// Solves X A + A^T X = -C for symmetric C by Kronecker vectorization.
/// Requires A Hurwitz (or at least no eigenvalue pair summing to zero).
inline MatrixXd solve_lyapunov(const MatrixXd& a, const MatrixXd& c) {
  const Eigen::Index q = a.rows();
  const MatrixXd id = MatrixXd::Identity(q, q);
  const MatrixXd op = kron(a.transpose(), id) + kron(id, a.transpose());
  const VectorXd rhs = -Eigen::Map<const VectorXd>(c.data(), c.size());
  Eigen::FullPivLU<MatrixXd> lu(op);
  if (!lu.isInvertible()) {
    throw Error(ErrorCode::CertificateFailed, "Lyapunov operator is singular");
  }
  const VectorXd x = lu.solve(rhs);
  MatrixXd out = Eigen::Map<const MatrixXd>(x.data(), q, q);
  return 0.5 * (out + out.transpose());
}

}  // namespace linalg
}  // namespace bearing_forge
