#pragma once

// Trigonometric-polynomial disturbances and their companion-form exosystem.
//
//   d(t) = C0 + sum_j [C_j^k sin(omega_j t + phi_j^k)]_{k=1..d}
//
// The exosystem state is theta = col(d(t), d'(t), ..., d^{(2r)}(t)); the
// companion matrix Phi is built from lambda * prod_j (lambda^2 + omega_j^2),
// so theta' = (Phi (x) I_d) theta and d = (Psi (x) I_d) theta with
// Psi = [1 0 ... 0].

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "errors.hpp"
#include "linalg.hpp"

namespace bearing_forge {

inline constexpr double kFrequencyGap = 1e-9;

struct SinusoidTerm {
  double omega = 0.0;
  VectorXd amplitude;  // per axis
  VectorXd phase;      // per axis, rad
};

struct DisturbanceSpec {
  int dimension = 0;
  VectorXd constant;
  std::vector<SinusoidTerm> terms;

  static DisturbanceSpec zero(int dimension) { return {dimension, VectorXd::Zero(dimension), {}}; }

  [[nodiscard]] int sinusoid_count() const noexcept { return static_cast<int>(terms.size()); }

  [[nodiscard]] std::vector<double> frequencies() const {
    std::vector<double> out;
    out.reserve(terms.size());
    for (const auto& term : terms) out.push_back(term.omega);
    return out;
  }
};

struct CanonicalExosystem {
  int sinusoid_count = 0;
  int dimension = 0;
  std::vector<double> coeffs;  // a_1 .. a_{2r+1}
  MatrixXd phi;
  RowVectorXd psi;
  VectorXd theta0;

  [[nodiscard]] int order() const noexcept { return 2 * sinusoid_count + 1; }
};

/// Coefficients a_1..a_{2r+1} of lambda^{2r+1} + a_1 lambda^{2r} + ... + a_{2r+1}
/// = lambda * prod_j (lambda^2 + omega_j^2).
inline std::vector<double> min_poly_coeffs(const std::vector<double>& frequencies) {
  for (std::size_t i = 0; i < frequencies.size(); ++i) {
    if (!(frequencies[i] > 0.0)) {
      throw Error(ErrorCode::NonPositiveFrequency, "frequency " + std::to_string(frequencies[i]) + " is not positive");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (std::abs(frequencies[i] - frequencies[j]) <= kFrequencyGap) {
        throw Error(ErrorCode::DuplicateFrequency, "frequency " + std::to_string(frequencies[i]) + " repeated");
      }
    }
  }
  std::vector<double> poly{1.0, 0.0};
  for (double w : frequencies) poly = linalg::poly_multiply(poly, {1.0, 0.0, w * w});
  return {poly.begin() + 1, poly.end()};
}

inline void validate(const DisturbanceSpec& spec) {
  if (spec.dimension < 1 || spec.constant.size() != spec.dimension) {
    throw Error(ErrorCode::DimensionMismatch, "disturbance constant has wrong dimension");
  }
  for (const auto& term : spec.terms) {
    if (term.amplitude.size() != spec.dimension || term.phase.size() != spec.dimension) {
      throw Error(ErrorCode::DimensionMismatch, "sinusoid amplitude/phase has wrong dimension");
    }
  }
  (void)min_poly_coeffs(spec.frequencies());
}

inline VectorXd disturbance_eval(const DisturbanceSpec& spec, double t) {
  VectorXd out = spec.constant;
  for (const auto& term : spec.terms) {
    out.array() += term.amplitude.array() * (term.omega * t + term.phase.array()).sin();
  }
  return out;
}

/// k-th time derivative of the closed-form disturbance.
inline VectorXd disturbance_derivative(const DisturbanceSpec& spec, int k, double t) {
  if (k == 0) return disturbance_eval(spec, t);
  VectorXd out = VectorXd::Zero(spec.dimension);
  const double shift = k * std::numbers::pi / 2.0;
  for (const auto& term : spec.terms) {
    const double scale = std::pow(term.omega, k);
    out.array() += scale * term.amplitude.array() * (term.omega * t + term.phase.array() + shift).sin();
  }
  return out;
}

inline CanonicalExosystem build_canonical(const DisturbanceSpec& spec) {
  validate(spec);
  CanonicalExosystem exo;
  exo.sinusoid_count = spec.sinusoid_count();
  exo.dimension = spec.dimension;
  exo.coeffs = min_poly_coeffs(spec.frequencies());
  exo.phi = linalg::companion(exo.coeffs);
  const int q = exo.order();
  exo.psi = RowVectorXd::Zero(q);
  exo.psi(0) = 1.0;
  exo.theta0.resize(q * spec.dimension);
  for (int k = 0; k < q; ++k) {
    exo.theta0.segment(k * spec.dimension, spec.dimension) = disturbance_derivative(spec, k, 0.0);
  }
  return exo;
}

}  // namespace bearing_forge
