#pragma once

// Shared fixtures and independent oracles for the test suites.

#include <Eigen/Dense>
#include <complex>
#include <random>
#include <vector>

#include "bearing_forge/bearing_forge.hpp"

namespace bearing_forge::testing {

/// Leaders (0,0), (1,0); followers (1,1), (0,1); square sides plus both
/// diagonals.
inline SensingGraph unit_square_graph() {
  return SensingGraph(4, 2, 2, {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {0, 2}, {1, 3}});
}

inline VectorXd unit_square_positions() {
  VectorXd p(8);
  p << 0, 0, 1, 0, 1, 1, 0, 1;
  return p;
}

inline DisturbanceSpec constant_plus_sinusoid(VectorXd c0, double omega, VectorXd amp, VectorXd phase) {
  DisturbanceSpec spec;
  spec.dimension = static_cast<int>(c0.size());
  spec.constant = std::move(c0);
  spec.terms.push_back({omega, std::move(amp), std::move(phase)});
  return spec;
}

/// The reference known-frequency scenario: unit square, v_c = (0.5, 0), each
/// follower disturbed by a constant plus one sinusoid at omega = 2.
inline Scenario unit_square_scenario(ControlMode mode = ControlMode::Known, double kp = 1.0, double kv = 1.0) {
  const SensingGraph graph = unit_square_graph();
  VectorXd p0 = unit_square_positions();
  p0.segment(4, 4) << 1.2, 0.9, -0.1, 1.15;
  VectorXd v0(4);
  v0 << 0.0, 0.0, 0.2, -0.1;

  Scenario sc{
      .graph = graph,
      .bearings = BearingSet::from_positions(graph, unit_square_positions()),
      .leader_velocity = Eigen::Vector2d(0.5, 0.0),
      .initial_positions = p0,
      .initial_follower_velocities = v0,
      .disturbances =
          {
              constant_plus_sinusoid(Eigen::Vector2d(0.3, -0.2), 2.0, Eigen::Vector2d(0.5, 0.4),
                                     Eigen::Vector2d(0.0, 1.0)),
              constant_plus_sinusoid(Eigen::Vector2d(-0.1, 0.25), 2.0, Eigen::Vector2d(0.3, 0.6),
                                     Eigen::Vector2d(0.5, -0.7)),
          },
      .mode = mode,
      .gains = {kp, kv, {}},
      .freeze_adaptation = false,
      .theta_hat0 = {},
      .eta_init = EtaInit::CancelVelocity,
      .eta0 = {},
      .integration = {},
  };
  if (mode == ControlMode::Adaptive) {
    for (std::size_t f = 0; f < 2; ++f) sc.gains.lambda.push_back(100.0 * MatrixXd::Identity(3, 3));
  }
  return sc;
}

/// Monic polynomial coefficients (highest power first) from its roots,
/// expanded with complex arithmetic. Independent of the real-coefficient
/// product used in the library.
inline std::vector<double> poly_from_roots(const std::vector<std::complex<double>>& roots) {
  std::vector<std::complex<double>> c{1.0};
  for (const auto& r : roots) {
    std::vector<std::complex<double>> next(c.size() + 1, 0.0);
    for (std::size_t i = 0; i < c.size(); ++i) {
      next[i] += c[i];
      next[i + 1] -= r * c[i];
    }
    c = next;
  }
  std::vector<double> out;
  for (const auto& z : c) out.push_back(z.real());
  return out;
}

inline VectorXd random_unit(std::mt19937& rng, int d) {
  std::normal_distribution<double> gauss;
  VectorXd g(d);
  do {
    for (int k = 0; k < d; ++k) g(k) = gauss(rng);
  } while (g.norm() < 1e-3);
  return g / g.norm();
}

/// Random graph over n agents; each pair joined with probability `density`.
inline std::vector<SensingGraph::Edge> random_edges(std::mt19937& rng, int n, double density) {
  std::bernoulli_distribution coin(density);
  std::vector<SensingGraph::Edge> edges;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (coin(rng)) edges.emplace_back(i, j);
    }
  }
  return edges;
}

inline VectorXd random_positions(std::mt19937& rng, int n, int d, double scale = 5.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  VectorXd p(n * d);
  for (Eigen::Index k = 0; k < p.size(); ++k) p(k) = u(rng);
  return p;
}

/// Multiset comparison of two spectra by greedy nearest matching.
inline double spectrum_distance(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  std::vector<bool> used(static_cast<std::size_t>(b.size()), false);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    Eigen::Index arg = -1;
    for (Eigen::Index j = 0; j < b.size(); ++j) {
      if (used[static_cast<std::size_t>(j)]) continue;
      const double dist = std::abs(a(i) - b(j));
      if (dist < best) {
        best = dist;
        arg = j;
      }
    }
    used[static_cast<std::size_t>(arg)] = true;
    worst = std::max(worst, best);
  }
  return worst;
}

}  // namespace bearing_forge::testing
