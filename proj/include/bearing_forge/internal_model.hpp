#pragma once

// Internal-model synthesis: a controllable Hurwitz pair (M, N), the Sylvester
// solution T of  T Phi - M T = N Psi,  and the output row E = Psi T^{-1}.

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "disturbance.hpp"
#include "errors.hpp"
#include "linalg.hpp"

namespace bearing_forge {

inline constexpr double kSingularityThreshold = 1e-10;
/// Eigenvalues of Phi and M closer than this count as overlapping.
inline constexpr double kSpectralGap = 1e-8;

struct InternalModel {
  MatrixXd m;
  MatrixXd n;  // column
  MatrixXd t;
  RowVectorXd e;

  [[nodiscard]] int order() const noexcept { return static_cast<int>(m.rows()); }
};

struct CompensatorPair {
  MatrixXd m;
  MatrixXd n;
};

/// Companion form of prod_{k=1}^{2r+1} (lambda + k) with N = e_{2r+1}.
inline CompensatorPair choose_MN(int sinusoid_count) {
  if (sinusoid_count < 0) throw Error(ErrorCode::DimensionMismatch, "sinusoid count must be non-negative");
  const int q = 2 * sinusoid_count + 1;
  std::vector<double> poly{1.0};
  for (int k = 1; k <= q; ++k) poly = linalg::poly_multiply(poly, {1.0, static_cast<double>(k)});
  CompensatorPair out;
  out.m = linalg::companion({poly.begin() + 1, poly.end()});
  out.n = MatrixXd::Zero(q, 1);
  out.n(q - 1, 0) = 1.0;
  return out;
}

namespace detail {

/// Kronecker-vectorized solve of T Phi - M T = N Psi without the final
/// nonsingularity check on T.
inline MatrixXd sylvester_solution(const MatrixXd& phi, const MatrixXd& m, const MatrixXd& n, const RowVectorXd& psi) {
  const Eigen::Index q = phi.rows();
  if (phi.cols() != q || m.rows() != q || m.cols() != q || n.rows() != q || n.cols() != 1 || psi.size() != q) {
    throw Error(ErrorCode::DimensionMismatch, "Sylvester operands have inconsistent sizes");
  }
  const Eigen::VectorXcd phi_eig = linalg::eigenvalues(phi);
  const Eigen::VectorXcd m_eig = linalg::eigenvalues(m);
  for (Eigen::Index i = 0; i < phi_eig.size(); ++i) {
    for (Eigen::Index j = 0; j < m_eig.size(); ++j) {
      if (std::abs(phi_eig(i) - m_eig(j)) < kSpectralGap) {
        throw Error(ErrorCode::SingularSylvesterOperator, "spectra of M and Phi overlap");
      }
    }
  }
  const MatrixXd id = MatrixXd::Identity(q, q);
  const MatrixXd op = linalg::kron(phi.transpose(), id) - linalg::kron(id, m);
  const MatrixXd rhs = n * psi;
  const VectorXd vec_t = op.fullPivLu().solve(Eigen::Map<const VectorXd>(rhs.data(), rhs.size()));
  return Eigen::Map<const MatrixXd>(vec_t.data(), q, q);
}

}  // namespace detail

inline MatrixXd solve_sylvester(const MatrixXd& phi, const MatrixXd& m, const MatrixXd& n, const RowVectorXd& psi) {
  MatrixXd t = detail::sylvester_solution(phi, m, n, psi);
  if (linalg::min_singular_value(t) < kSingularityThreshold) {
    throw Error(ErrorCode::SingularT, "Sylvester solution is singular; (M, N) is not a valid choice");
  }
  return t;
}

/// E = Psi T^{-1}, computed as the solution of T^T E^T = Psi^T.
inline RowVectorXd compute_E(const MatrixXd& t, const RowVectorXd& psi) {
  if (t.rows() != t.cols() || psi.size() != t.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "T and Psi have inconsistent sizes");
  }
  if (linalg::min_singular_value(t) < kSingularityThreshold) throw Error(ErrorCode::SingularT, "T is singular");
  const VectorXd e = t.transpose().fullPivLu().solve(psi.transpose());
  return e.transpose();
}

inline InternalModel synthesize_internal_model(const CanonicalExosystem& exo) {
  auto [m, n] = choose_MN(exo.sinusoid_count);
  InternalModel model;
  model.t = solve_sylvester(exo.phi, m, n, exo.psi);
  model.e = compute_E(model.t, exo.psi);
  model.m = std::move(m);
  model.n = std::move(n);
  return model;
}

/// E^sigma = E^o + sum_j basis.row(j) * theta_j. The canonical choice used
/// here has E^o = 0 and unit-row basis, so theta is E^sigma itself.
struct AdaptiveParameterization {
  RowVectorXd nominal;
  MatrixXd basis;  // k x (2r+1)
  std::optional<VectorXd> theta_true;

  [[nodiscard]] int size() const noexcept { return static_cast<int>(basis.rows()); }

  [[nodiscard]] RowVectorXd estimate(const VectorXd& theta_hat) const {
    return nominal + theta_hat.transpose() * basis;
  }
};

inline AdaptiveParameterization build_parameterization(int sinusoid_count,
                                                       const std::optional<RowVectorXd>& e_sigma = std::nullopt) {
  if (sinusoid_count < 0) throw Error(ErrorCode::DimensionMismatch, "sinusoid count must be non-negative");
  const int q = 2 * sinusoid_count + 1;
  AdaptiveParameterization out;
  out.nominal = RowVectorXd::Zero(q);
  out.basis = MatrixXd::Identity(q, q);
  if (e_sigma) {
    if (e_sigma->size() != q) throw Error(ErrorCode::DimensionMismatch, "E^sigma has wrong length");
    out.theta_true = e_sigma->transpose();
  }
  return out;
}

}  // namespace bearing_forge
