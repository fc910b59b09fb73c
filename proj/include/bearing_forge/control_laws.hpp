#pragma once

// Distributed follower control laws.
//
// A follower sees only its own (v_i, eta_i, theta_hat_i) and the projected
// neighbor sums s_p = sum_j P_{g*_ij} (p_i - p_j), s_v likewise for
// velocities. Block vectors in R^{q d} are handled as d x q matrices whose
// k-th column is the k-th d-block, so (A (x) I_d) x becomes X A^T.

#include <Eigen/Dense>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"
#include "formation_graph.hpp"
#include "internal_model.hpp"
#include "linalg.hpp"

namespace bearing_forge {

enum class ControlMode { Known, Adaptive, FeedbackOnly };

constexpr std::string_view to_string(ControlMode mode) {
  switch (mode) {
    case ControlMode::Known: return "known";
    case ControlMode::Adaptive: return "adaptive";
    case ControlMode::FeedbackOnly: return "feedback_only";
  }
  return "unknown";
}

inline ControlMode parse_control_mode(std::string_view text) {
  if (text == "known") return ControlMode::Known;
  if (text == "adaptive") return ControlMode::Adaptive;
  if (text == "feedback_only") return ControlMode::FeedbackOnly;
  throw Error(ErrorCode::ValidationError, "unknown controller mode '" + std::string(text) + "'");
}

struct ControllerGains {
  double kappa_p = 1.0;
  double kappa_v = 1.0;
  std::vector<MatrixXd> lambda;  // one per follower, adaptive mode only
};

struct FollowerControllerState {
  VectorXd eta;
  VectorXd theta_hat;
};

struct ProjectedErrors {
  VectorXd s_p;
  VectorXd s_v;
};

namespace detail {

inline Eigen::Map<const MatrixXd> blocks(const VectorXd& x, Eigen::Index d) {
  return {x.data(), d, x.size() / d};
}

inline VectorXd flatten(const MatrixXd& x) { return Eigen::Map<const VectorXd>(x.data(), x.size()); }

inline void check_block_size(const VectorXd& x, Eigen::Index d, Eigen::Index q, const char* what) {
  if (x.size() != d * q) throw Error(ErrorCode::DimensionMismatch, std::string(what) + " has wrong length");
}

}  // namespace detail

/// Neighbor list of one agent with the projectors P_{g*_ij} precomputed.
struct Neighborhood {
  int agent = 0;
  std::vector<int> neighbors;
  std::vector<MatrixXd> projectors;

  static Neighborhood of(int agent, const SensingGraph& graph, const BearingSet& bearings) {
    Neighborhood out;
    out.agent = agent;
    for (int j : graph.neighbors(agent)) {
      out.neighbors.push_back(j);
      out.projectors.push_back(projector(bearings.at(agent, j)));
    }
    return out;
  }
};

inline ProjectedErrors projected_errors(const Neighborhood& hood, const VectorXd& positions, const VectorXd& velocities) {
  if (hood.neighbors.empty()) {
    throw Error(ErrorCode::IsolatedFollower, "agent " + std::to_string(hood.agent) + " has no neighbors");
  }
  const Eigen::Index d = hood.projectors.front().rows();
  const Eigen::Index i = hood.agent;
  ProjectedErrors out{VectorXd::Zero(d), VectorXd::Zero(d)};
  for (std::size_t k = 0; k < hood.neighbors.size(); ++k) {
    const Eigen::Index j = hood.neighbors[k];
    out.s_p.noalias() += hood.projectors[k] * (positions.segment(i * d, d) - positions.segment(j * d, d));
    out.s_v.noalias() += hood.projectors[k] * (velocities.segment(i * d, d) - velocities.segment(j * d, d));
  }
  return out;
}

inline ProjectedErrors projected_errors(int agent, const SensingGraph& graph, const BearingSet& bearings,
                                        const VectorXd& positions, const VectorXd& velocities) {
  return projected_errors(Neighborhood::of(agent, graph, bearings), positions, velocities);
}

/// eta - (N (x) I_d) v as a d x q block matrix.
inline MatrixXd compensator_offset(const VectorXd& eta, const VectorXd& v, const MatrixXd& n) {
  const Eigen::Index d = v.size();
  detail::check_block_size(eta, d, n.rows(), "compensator state");
  return detail::blocks(eta, d) - v * n.transpose();
}

inline VectorXd feedback(const ProjectedErrors& s, const ControllerGains& gains) {
  return -gains.kappa_p * s.s_p - gains.kappa_v * s.s_v;
}

/// u = (E (x) I)(eta - (N (x) I) v) - kappa_p s_p - kappa_v s_v
inline VectorXd control_known(const ProjectedErrors& s, const VectorXd& eta, const VectorXd& v,
                              const InternalModel& model, const ControllerGains& gains) {
  return compensator_offset(eta, v, model.n) * model.e.transpose() + feedback(s, gains);
}

/// Same law with E replaced by the estimate E^o + sum_j E^j theta_hat_j.
inline VectorXd control_adaptive(const ProjectedErrors& s, const VectorXd& eta, const VectorXd& v, const MatrixXd& n,
                                 const AdaptiveParameterization& param, const VectorXd& theta_hat,
                                 const ControllerGains& gains) {
  if (theta_hat.size() != param.size()) throw Error(ErrorCode::DimensionMismatch, "theta_hat has wrong length");
  return compensator_offset(eta, v, n) * param.estimate(theta_hat).transpose() + feedback(s, gains);
}

/// d x k matrix whose j-th column is (E^j (x) I)(eta - (N (x) I) v).
inline MatrixXd regressor(const VectorXd& eta, const VectorXd& v, const MatrixXd& n,
                          const AdaptiveParameterization& param) {
  return compensator_offset(eta, v, n) * param.basis.transpose();
}

inline VectorXd theta_hat_dot(const MatrixXd& rho, const ProjectedErrors& s, const MatrixXd& lambda) {
  return -lambda * (rho.transpose() * (s.s_p + s.s_v));
}

/// eta' = (M (x) I) eta + (N (x) I) u - (M N (x) I) v
inline VectorXd eta_dot(const VectorXd& eta, const VectorXd& u, const VectorXd& v, const MatrixXd& m,
                        const MatrixXd& n) {
  const Eigen::Index d = v.size();
  detail::check_block_size(eta, d, m.rows(), "compensator state");
  const MatrixXd mn = m * n;
  const MatrixXd out =
      detail::blocks(eta, d) * m.transpose() + u * n.transpose() - v * mn.transpose();
  return detail::flatten(out);
}

inline void validate_gains(const ControllerGains& gains, const MatrixXd& b_ff, ControlMode mode) {
  if (!(gains.kappa_p > 0.0)) {
    throw Error(ErrorCode::GainConditionViolated, "kappa_p = " + std::to_string(gains.kappa_p) + " <= 0");
  }
  if (!(gains.kappa_v > 0.0)) {
    throw Error(ErrorCode::GainConditionViolated, "kappa_v = " + std::to_string(gains.kappa_v) + " <= 0");
  }
  if (mode != ControlMode::Adaptive) return;

  const double lambda_min = linalg::symmetric_min_eigenvalue(b_ff);
  const double margin = gains.kappa_v * lambda_min;
  if (!(margin > 1.0)) {
    throw Error(ErrorCode::GainConditionViolated,
                "adaptive gain condition: kappa_v*lambda_min(B_ff) = " + std::to_string(margin) + " <= 1");
  }
  for (std::size_t i = 0; i < gains.lambda.size(); ++i) {
    if (!linalg::is_positive_definite(gains.lambda[i])) {
      throw Error(ErrorCode::GainConditionViolated,
                  "adaptation gain Lambda[" + std::to_string(i) + "] is not symmetric positive definite");
    }
  }
}

}  // namespace bearing_forge
