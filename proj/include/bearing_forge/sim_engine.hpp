#pragma once

// Closed-loop assembly and integration for leader-follower bearing formations.
//
// State vector layout (flat VectorXd):
//   [ positions of all n agents (n*d)
//   | follower velocities (n_f*d)
//   | per follower: eta (q_i*d), theta_hat (k_i, adaptive mode only), vartheta (q_i*d) ]
// with q_i = 2 r_i + 1. Leaders move with the common velocity v_c; their
// positions are overwritten with p_l(0) + v_c t after every step.

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>
#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "control_laws.hpp"
#include "disturbance.hpp"
#include "errors.hpp"
#include "formation_graph.hpp"
#include "internal_model.hpp"
#include "linalg.hpp"
#include "rk4.hpp"

namespace bearing_forge {

/// How eta_i(0) is chosen.
enum class EtaInit {
  CancelVelocity,  // (N (x) I) v_i(0): feedforward term starts at zero
  Zero,
  XiZero,          // (N (x) I) v_i(0) - (T (x) I) vartheta_i(0): xi_i(0) = 0
  Explicit,
};

struct IntegrationSettings {
  double h = 1e-3;
  double t_final = 50.0;
  int record_every = 1;
  double collision_threshold = 1e-3;
};

struct Scenario {
  SensingGraph graph;
  BearingSet bearings;
  VectorXd leader_velocity;
  VectorXd initial_positions;            // n*d, all agents
  VectorXd initial_follower_velocities;  // n_f*d
  std::vector<DisturbanceSpec> disturbances;  // one per follower
  ControlMode mode = ControlMode::Known;
  ControllerGains gains;
  bool freeze_adaptation = false;
  std::vector<VectorXd> theta_hat0;  // per follower; empty means zeros
  EtaInit eta_init = EtaInit::CancelVelocity;
  std::vector<VectorXd> eta0;  // used with EtaInit::Explicit
  IntegrationSettings integration;
};

struct SimState {
  double t = 0.0;
  VectorXd x;
};

struct SampleMetrics {
  double err_p = 0.0;
  double err_v = 0.0;
  double min_dist = 0.0;
  std::vector<double> follower_err_p;
};

struct Trajectory {
  std::vector<SimState> samples;
  std::vector<SampleMetrics> metrics;
  std::vector<double> lyapunov;  // filled by lyapunov_monitor when requested

  [[nodiscard]] std::size_t size() const noexcept { return samples.size(); }
  [[nodiscard]] const SimState& back() const { return samples.back(); }
};

struct ClosestPair {
  double distance = std::numeric_limits<double>::infinity();
  int a = -1;
  int b = -1;
};

inline ClosestPair closest_pair(const VectorXd& positions, int n, int d) {
  ClosestPair best;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double dist = (positions.segment(i * d, d) - positions.segment(j * d, d)).norm();
      if (dist < best.distance) best = {dist, i, j};
    }
  }
  return best;
}

/// A_sigma = [0 I 0; -kp B_ff  -kv B_ff  E_f; 0 0 M_f]
inline MatrixXd assemble_A_sigma(const MatrixXd& b_ff, const std::vector<RowVectorXd>& e_blocks,
                                 const std::vector<MatrixXd>& m_blocks, const ControllerGains& gains, int dimension) {
  if (e_blocks.size() != m_blocks.size()) throw Error(ErrorCode::DimensionMismatch, "E and M block counts differ");
  const auto nf = static_cast<Eigen::Index>(e_blocks.size());
  const Eigen::Index d = dimension;
  if (b_ff.rows() != nf * d || b_ff.cols() != nf * d) {
    throw Error(ErrorCode::DimensionMismatch, "B_ff does not match follower count");
  }
  Eigen::Index qf = 0;
  for (std::size_t i = 0; i < e_blocks.size(); ++i) {
    if (m_blocks[i].rows() != e_blocks[i].size() || m_blocks[i].cols() != e_blocks[i].size()) {
      throw Error(ErrorCode::DimensionMismatch, "E_i and M_i sizes differ");
    }
    qf += e_blocks[i].size() * d;
  }
  const MatrixXd id = MatrixXd::Identity(d, d);
  const Eigen::Index nd = nf * d;
  MatrixXd a = MatrixXd::Zero(2 * nd + qf, 2 * nd + qf);
  a.block(0, nd, nd, nd).setIdentity();
  a.block(nd, 0, nd, nd) = -gains.kappa_p * b_ff;
  a.block(nd, nd, nd, nd) = -gains.kappa_v * b_ff;
  Eigen::Index col = 2 * nd;
  for (Eigen::Index i = 0; i < nf; ++i) {
    const auto& e = e_blocks[static_cast<std::size_t>(i)];
    const auto& m = m_blocks[static_cast<std::size_t>(i)];
    const Eigen::Index q = e.size() * d;
    a.block(nd + i * d, col, d, q) = linalg::kron(e, id);
    a.block(col, col, q, q) = linalg::kron(m, id);
    col += q;
  }
  return a;
}

/// Everything derived from a Scenario that the integrator and the oracles
/// need: Laplacian, localizer, per-follower exosystems and internal models,
/// and the state layout.
class ClosedLoop {
 public:
  explicit ClosedLoop(Scenario scenario)
      : sc_(std::move(scenario)),
        laplacian_(build_bearing_laplacian(sc_.graph, sc_.bearings)),
        localizer_(laplacian_) {
    n_ = sc_.graph.agent_count();
    d_ = sc_.graph.dimension();
    nl_ = sc_.graph.leader_count();
    nf_ = sc_.graph.follower_count();
    check_inputs();

    Eigen::Index offset = static_cast<Eigen::Index>(n_) * d_ + static_cast<Eigen::Index>(nf_) * d_;
    for (int f = 0; f < nf_; ++f) {
      const auto fs = static_cast<std::size_t>(f);
      Follower fol;
      fol.hood = Neighborhood::of(nl_ + f, sc_.graph, sc_.bearings);
      if (fol.hood.neighbors.empty()) {
        throw Error(ErrorCode::IsolatedFollower, "follower " + std::to_string(nl_ + f + 1) + " has no neighbors");
      }
      fol.exo = build_canonical(sc_.disturbances[fs]);
      fol.model = synthesize_internal_model(fol.exo);
      fol.param = build_parameterization(fol.exo.sinusoid_count, fol.model.e);
      fol.q = fol.exo.order();
      fol.k = sc_.mode == ControlMode::Adaptive ? fol.param.size() : 0;
      fol.eta_offset = offset;
      offset += fol.q * d_;
      fol.theta_offset = offset;
      offset += fol.k;
      fol.vartheta_offset = offset;
      offset += fol.q * d_;
      fol.lambda = sc_.mode == ControlMode::Adaptive ? sc_.gains.lambda.at(fs) : MatrixXd();
      followers_.push_back(std::move(fol));
    }
    state_size_ = offset;
    validate_gains(sc_.gains, laplacian_.ff, sc_.mode);
  }

  [[nodiscard]] const Scenario& scenario() const noexcept { return sc_; }
  [[nodiscard]] const BearingLaplacian& laplacian() const noexcept { return laplacian_; }
  [[nodiscard]] const Localizer& localizer() const noexcept { return localizer_; }
  [[nodiscard]] int agent_count() const noexcept { return n_; }
  [[nodiscard]] int dimension() const noexcept { return d_; }
  [[nodiscard]] int leader_count() const noexcept { return nl_; }
  [[nodiscard]] int follower_count() const noexcept { return nf_; }
  [[nodiscard]] Eigen::Index state_size() const noexcept { return state_size_; }

  [[nodiscard]] const CanonicalExosystem& exosystem(int f) const { return follower(f).exo; }
  [[nodiscard]] const InternalModel& internal_model(int f) const { return follower(f).model; }
  [[nodiscard]] const AdaptiveParameterization& parameterization(int f) const { return follower(f).param; }
  [[nodiscard]] const MatrixXd& adaptation_gain(int f) const { return follower(f).lambda; }

  // --- state views -------------------------------------------------------

  [[nodiscard]] auto positions(const VectorXd& x) const { return x.head(static_cast<Eigen::Index>(n_) * d_); }
  [[nodiscard]] auto leader_positions(const VectorXd& x) const {
    return x.head(static_cast<Eigen::Index>(nl_) * d_);
  }
  [[nodiscard]] auto follower_positions(const VectorXd& x) const {
    return x.segment(static_cast<Eigen::Index>(nl_) * d_, static_cast<Eigen::Index>(nf_) * d_);
  }
  [[nodiscard]] auto follower_velocities(const VectorXd& x) const {
    return x.segment(static_cast<Eigen::Index>(n_) * d_, static_cast<Eigen::Index>(nf_) * d_);
  }
  [[nodiscard]] auto follower_velocity(const VectorXd& x, int f) const {
    return x.segment(static_cast<Eigen::Index>(n_ + f) * d_, d_);
  }
  [[nodiscard]] auto eta(const VectorXd& x, int f) const {
    const auto& fol = follower(f);
    return x.segment(fol.eta_offset, fol.q * d_);
  }
  [[nodiscard]] auto theta_hat(const VectorXd& x, int f) const {
    const auto& fol = follower(f);
    return x.segment(fol.theta_offset, fol.k);
  }
  [[nodiscard]] auto vartheta(const VectorXd& x, int f) const {
    const auto& fol = follower(f);
    return x.segment(fol.vartheta_offset, fol.q * d_);
  }

  /// Velocities of all agents stacked (leaders at v_c).
  [[nodiscard]] VectorXd all_velocities(const VectorXd& x) const {
    VectorXd v(static_cast<Eigen::Index>(n_) * d_);
    for (int i = 0; i < nl_; ++i) v.segment(static_cast<Eigen::Index>(i) * d_, d_) = sc_.leader_velocity;
    v.tail(static_cast<Eigen::Index>(nf_) * d_) = follower_velocities(x);
    return v;
  }

  [[nodiscard]] VectorXd leader_positions_at(double t) const {
    VectorXd p = sc_.initial_positions.head(static_cast<Eigen::Index>(nl_) * d_);
    for (int i = 0; i < nl_; ++i) p.segment(static_cast<Eigen::Index>(i) * d_, d_) += t * sc_.leader_velocity;
    return p;
  }

  // --- dynamics ----------------------------------------------------------

  [[nodiscard]] VectorXd initial_state() const {
    VectorXd x = VectorXd::Zero(state_size_);
    x.head(static_cast<Eigen::Index>(n_) * d_) = sc_.initial_positions;
    x.segment(static_cast<Eigen::Index>(n_) * d_, static_cast<Eigen::Index>(nf_) * d_) =
        sc_.initial_follower_velocities;
    for (int f = 0; f < nf_; ++f) {
      const auto& fol = follower(f);
      const VectorXd v = follower_velocity(x, f);
      const VectorXd vt = fol.exo.theta0;
      x.segment(fol.vartheta_offset, fol.q * d_) = vt;
      const MatrixXd nv = v * fol.model.n.transpose();
      MatrixXd eta0;
      switch (sc_.eta_init) {
        case EtaInit::CancelVelocity: eta0 = nv; break;
        case EtaInit::Zero: eta0 = MatrixXd::Zero(d_, fol.q); break;
        case EtaInit::XiZero: eta0 = nv - detail::blocks(vt, d_) * fol.model.t.transpose(); break;
        case EtaInit::Explicit: {
          const VectorXd& given = sc_.eta0.at(static_cast<std::size_t>(f));
          detail::check_block_size(given, d_, fol.q, "eta0");
          eta0 = detail::blocks(given, d_);
          break;
        }
      }
      x.segment(fol.eta_offset, fol.q * d_) = detail::flatten(eta0);
      if (fol.k > 0 && !sc_.theta_hat0.empty()) {
        const VectorXd& th = sc_.theta_hat0.at(static_cast<std::size_t>(f));
        if (th.size() != fol.k) throw Error(ErrorCode::DimensionMismatch, "theta_hat0 has wrong length");
        x.segment(fol.theta_offset, fol.k) = th;
      }
    }
    return x;
  }

  [[nodiscard]] ProjectedErrors projected(const VectorXd& x, int f) const {
    return projected_errors(follower(f).hood, positions(x), all_velocities(x));
  }

  /// Control input u_i of follower f at state x.
  [[nodiscard]] VectorXd control(const VectorXd& x, int f) const {
    return control(x, f, projected(x, f));
  }

  /// (Psi (x) I) vartheta_i: the disturbance carried by the exosystem state.
  [[nodiscard]] VectorXd disturbance(const VectorXd& x, int f) const { return vartheta(x, f).head(d_); }

  [[nodiscard]] VectorXd rhs(double /*t*/, const VectorXd& x) const {
    VectorXd dx = VectorXd::Zero(state_size_);
    const VectorXd v_all = all_velocities(x);
    dx.head(static_cast<Eigen::Index>(n_) * d_) = v_all;
    const VectorXd p = positions(x);
    for (int f = 0; f < nf_; ++f) {
      const auto& fol = follower(f);
      const ProjectedErrors s = projected_errors(fol.hood, p, v_all);
      const VectorXd v = follower_velocity(x, f);
      const VectorXd eta_f = eta(x, f);
      const VectorXd vt = vartheta(x, f);
      const VectorXd u = control(x, f, s);

      dx.segment(static_cast<Eigen::Index>(n_ + f) * d_, d_) = u + vt.head(d_);
      dx.segment(fol.vartheta_offset, fol.q * d_) = detail::flatten(detail::blocks(vt, d_) * fol.exo.phi.transpose());
      dx.segment(fol.eta_offset, fol.q * d_) = eta_dot(eta_f, u, v, fol.model.m, fol.model.n);
      if (fol.k > 0 && !sc_.freeze_adaptation) {
        const MatrixXd rho = regressor(eta_f, v, fol.model.n, fol.param);
        dx.segment(fol.theta_offset, fol.k) = theta_hat_dot(rho, s, fol.lambda);
      }
    }
    return dx;
  }

  // --- proof-level quantities -------------------------------------------

  /// xi_i = eta_i + (T (x) I) vartheta_i - (N (x) I) v_i
  [[nodiscard]] VectorXd xi(const VectorXd& x, int f) const {
    const auto& fol = follower(f);
    const VectorXd v = follower_velocity(x, f);
    const MatrixXd out = detail::blocks(eta(x, f), d_) + detail::blocks(vartheta(x, f), d_) * fol.model.t.transpose() -
                         v * fol.model.n.transpose();
    return detail::flatten(out);
  }

  [[nodiscard]] VectorXd xi_stacked(const VectorXd& x) const {
    VectorXd out(q_total());
    Eigen::Index off = 0;
    for (int f = 0; f < nf_; ++f) {
      const VectorXd xf = xi(x, f);
      out.segment(off, xf.size()) = xf;
      off += xf.size();
    }
    return out;
  }

  /// q_f = sum_i (2 r_i + 1) d
  [[nodiscard]] Eigen::Index q_total() const {
    Eigen::Index q = 0;
    for (const auto& fol : followers_) q += fol.q * d_;
    return q;
  }

  [[nodiscard]] std::vector<RowVectorXd> e_blocks() const {
    std::vector<RowVectorXd> out;
    for (const auto& fol : followers_) out.push_back(fol.model.e);
    return out;
  }

  [[nodiscard]] std::vector<MatrixXd> m_blocks() const {
    std::vector<MatrixXd> out;
    for (const auto& fol : followers_) out.push_back(fol.model.m);
    return out;
  }

  /// E_f = blockdiag(E_i (x) I_d), n_f d x q_f
  [[nodiscard]] MatrixXd e_f() const {
    MatrixXd out = MatrixXd::Zero(static_cast<Eigen::Index>(nf_) * d_, q_total());
    const MatrixXd id = MatrixXd::Identity(d_, d_);
    Eigen::Index col = 0;
    for (int f = 0; f < nf_; ++f) {
      const auto& fol = follower(f);
      out.block(static_cast<Eigen::Index>(f) * d_, col, d_, fol.q * d_) = linalg::kron(fol.model.e, id);
      col += fol.q * d_;
    }
    return out;
  }

  /// M_f = blockdiag(M_i (x) I_d)
  [[nodiscard]] MatrixXd m_f() const {
    const Eigen::Index q = q_total();
    MatrixXd out = MatrixXd::Zero(q, q);
    const MatrixXd id = MatrixXd::Identity(d_, d_);
    Eigen::Index off = 0;
    for (const auto& fol : followers_) {
      out.block(off, off, fol.q * d_, fol.q * d_) = linalg::kron(fol.model.m, id);
      off += fol.q * d_;
    }
    return out;
  }

  [[nodiscard]] MatrixXd a_sigma() const {
    return assemble_A_sigma(laplacian_.ff, e_blocks(), m_blocks(), sc_.gains, d_);
  }

  /// Stacked (p_f - p_f*(t), v_f - 1 (x) v_c).
  [[nodiscard]] std::pair<VectorXd, VectorXd> tracking_errors(const VectorXd& x) const {
    const VectorXd target = localizer_.follower_positions(leader_positions(x));
    return {follower_positions(x) - target, follower_velocities(x) - localizer_.follower_velocities(sc_.leader_velocity)};
  }

  /// theta_f - theta_hat_f, stacked over followers (adaptive mode).
  [[nodiscard]] VectorXd theta_error(const VectorXd& x) const {
    Eigen::Index k = 0;
    for (const auto& fol : followers_) k += fol.k;
    VectorXd out(k);
    Eigen::Index off = 0;
    for (int f = 0; f < nf_; ++f) {
      const auto& fol = follower(f);
      out.segment(off, fol.k) = *fol.param.theta_true - theta_hat(x, f);
      off += fol.k;
    }
    return out;
  }

  [[nodiscard]] SampleMetrics sample_metrics(const VectorXd& x) const {
    const auto [ep, ev] = tracking_errors(x);
    SampleMetrics m;
    m.err_p = ep.norm();
    m.err_v = ev.norm();
    m.min_dist = closest_pair(positions(x), n_, d_).distance;
    for (int f = 0; f < nf_; ++f) m.follower_err_p.push_back(ep.segment(static_cast<Eigen::Index>(f) * d_, d_).norm());
    return m;
  }

 private:
  struct Follower {
    Neighborhood hood;
    CanonicalExosystem exo;
    InternalModel model;
    AdaptiveParameterization param;
    MatrixXd lambda;
    int q = 0;
    int k = 0;
    Eigen::Index eta_offset = 0;
    Eigen::Index theta_offset = 0;
    Eigen::Index vartheta_offset = 0;
  };

  [[nodiscard]] const Follower& follower(int f) const { return followers_.at(static_cast<std::size_t>(f)); }

  [[nodiscard]] VectorXd control(const VectorXd& x, int f, const ProjectedErrors& s) const {
    const auto& fol = follower(f);
    switch (sc_.mode) {
      case ControlMode::Known:
        return control_known(s, eta(x, f), follower_velocity(x, f), fol.model, sc_.gains);
      case ControlMode::Adaptive:
        return control_adaptive(s, eta(x, f), follower_velocity(x, f), fol.model.n, fol.param, theta_hat(x, f),
                                sc_.gains);
      case ControlMode::FeedbackOnly:
        return feedback(s, sc_.gains);
    }
    return VectorXd::Zero(d_);
  }

  void check_inputs() const {
    if (sc_.leader_velocity.size() != d_) throw Error(ErrorCode::DimensionMismatch, "v_c has wrong dimension");
    if (sc_.initial_positions.size() != static_cast<Eigen::Index>(n_) * d_) {
      throw Error(ErrorCode::DimensionMismatch, "initial positions have wrong length");
    }
    if (sc_.initial_follower_velocities.size() != static_cast<Eigen::Index>(nf_) * d_) {
      throw Error(ErrorCode::DimensionMismatch, "initial follower velocities have wrong length");
    }
    if (static_cast<int>(sc_.disturbances.size()) != nf_) {
      throw Error(ErrorCode::DimensionMismatch, "need one disturbance spec per follower");
    }
    for (const auto& spec : sc_.disturbances) {
      if (spec.dimension != d_) throw Error(ErrorCode::DimensionMismatch, "disturbance dimension mismatch");
      if (sc_.mode == ControlMode::FeedbackOnly &&
          (!spec.terms.empty() || spec.constant.cwiseAbs().maxCoeff() != 0.0)) {
        throw Error(ErrorCode::ValidationError, "feedback_only mode permits zero disturbances only");
      }
    }
    if (sc_.mode == ControlMode::Adaptive && static_cast<int>(sc_.gains.lambda.size()) != nf_) {
      throw Error(ErrorCode::DimensionMismatch, "need one adaptation gain per follower");
    }
    const auto& s = sc_.integration;
    if (!(s.h > 0.0) || !(s.t_final > 0.0) || s.record_every < 1 || !(s.collision_threshold >= 0.0)) {
      throw Error(ErrorCode::ValidationError, "integration settings need h > 0, t_final > 0, record_every >= 1");
    }
  }

  Scenario sc_;
  BearingLaplacian laplacian_;
  Localizer localizer_;
  int n_ = 0;
  int d_ = 0;
  int nl_ = 0;
  int nf_ = 0;
  std::vector<Follower> followers_;
  Eigen::Index state_size_ = 0;
};

/// Fixed-step RK4 from t = 0 to settings.t_final. Samples every
/// `record_every` steps plus the final step. Throws CollisionError when two
/// agents come closer than the collision threshold, NonFiniteState on
/// divergence.
inline Trajectory integrate(const ClosedLoop& loop, const IntegrationSettings& settings) {
  const int n = loop.agent_count();
  const int d = loop.dimension();
  const Eigen::Index leader_len = static_cast<Eigen::Index>(loop.leader_count()) * d;
  const auto steps = static_cast<long long>(std::ceil(settings.t_final / settings.h - 1e-9));
  const auto rhs = [&loop](double t, const VectorXd& x) { return loop.rhs(t, x); };

  Trajectory traj;
  VectorXd x = loop.initial_state();
  double t = 0.0;

  const auto check = [&](double time, const VectorXd& state) {
    if (!state.allFinite()) {
      throw Error(ErrorCode::NonFiniteState, "state diverged at t=" + std::to_string(time));
    }
    const ClosestPair cp = closest_pair(loop.positions(state), n, d);
    if (cp.distance < settings.collision_threshold) throw CollisionError(time, cp.a + 1, cp.b + 1, cp.distance);
  };
  const auto record = [&](double time, const VectorXd& state) {
    traj.samples.push_back({time, state});
    traj.metrics.push_back(loop.sample_metrics(state));
  };

  check(t, x);
  record(t, x);
  for (long long step = 1; step <= steps; ++step) {
    const double t_next = step == steps ? settings.t_final : static_cast<double>(step) * settings.h;
    x = rk4_step(rhs, t, x, t_next - t);
    t = t_next;
    x.head(leader_len) = loop.leader_positions_at(t);
    check(t, x);
    if (step % settings.record_every == 0 || step == steps) record(t, x);
  }
  return traj;
}

inline Trajectory integrate(const ClosedLoop& loop) { return integrate(loop, loop.scenario().integration); }

/// max over samples of || xi_f(t) - blockdiag(e^{M_i t} (x) I) xi_f(0) ||.
inline double xi_oracle(const ClosedLoop& loop, const Trajectory& traj) {
  if (traj.samples.empty()) return 0.0;
  const int d = loop.dimension();
  std::vector<VectorXd> xi0;
  for (int f = 0; f < loop.follower_count(); ++f) xi0.push_back(loop.xi(traj.samples.front().x, f));

  double worst = 0.0;
  for (const auto& sample : traj.samples) {
    double sq = 0.0;
    for (int f = 0; f < loop.follower_count(); ++f) {
      const MatrixXd em = (loop.internal_model(f).m * sample.t).exp();
      const MatrixXd predicted = detail::blocks(xi0[static_cast<std::size_t>(f)], d) * em.transpose();
      sq += (loop.xi(sample.x, f) - detail::flatten(predicted)).squaredNorm();
    }
    worst = std::max(worst, std::sqrt(sq));
  }
  return worst;
}

struct LyapunovCertificate {
  MatrixXd a_c;
  MatrixXd q_c;
  MatrixXd p_c;
  MatrixXd g_c;
  double gamma_sigma = 0.0;
  double gamma = 0.0;
  double q_min_eigenvalue = 0.0;
  bool near_singular = false;  // lambda_min(Q_c) tiny relative to ||Q_c||
};

/// Q_c = blockdiag(2 kp B^2, 2 (kv B^2 - B)), P_c = [(kp+kv) B^2, B; B, B],
/// G_c M_f + M_f^T G_c = -I, gamma = 1.01 * lambda_max(K K^T) / lambda_min(Q_c)
/// with K = P_c B_c E_f.
inline LyapunovCertificate build_certificate(const MatrixXd& b_ff, const ControllerGains& gains, const MatrixXd& m_f,
                                             const MatrixXd& e_f) {
  const Eigen::Index nd = b_ff.rows();
  if (b_ff.cols() != nd || e_f.rows() != nd || e_f.cols() != m_f.rows() || m_f.rows() != m_f.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "certificate operands have inconsistent sizes");
  }
  const MatrixXd b2 = b_ff * b_ff;
  const double kp = gains.kappa_p;
  const double kv = gains.kappa_v;

  LyapunovCertificate cert;
  cert.a_c = MatrixXd::Zero(2 * nd, 2 * nd);
  cert.a_c.topRightCorner(nd, nd).setIdentity();
  cert.a_c.bottomLeftCorner(nd, nd) = -kp * b_ff;
  cert.a_c.bottomRightCorner(nd, nd) = -kv * b_ff;

  cert.q_c = MatrixXd::Zero(2 * nd, 2 * nd);
  cert.q_c.topLeftCorner(nd, nd) = 2.0 * kp * b2;
  cert.q_c.bottomRightCorner(nd, nd) = 2.0 * (kv * b2 - b_ff);

  cert.p_c.resize(2 * nd, 2 * nd);
  cert.p_c << (kp + kv) * b2, b_ff, b_ff, b_ff;

  if (!linalg::is_positive_definite(cert.q_c)) {
    throw Error(ErrorCode::CertificateFailed, "Q_c is not positive definite");
  }
  if (!linalg::is_positive_definite(cert.p_c)) {
    throw Error(ErrorCode::CertificateFailed, "P_c is not positive definite");
  }
  cert.g_c = linalg::solve_lyapunov(m_f, MatrixXd::Identity(m_f.rows(), m_f.cols()));
  if (!linalg::is_positive_definite(cert.g_c)) {
    throw Error(ErrorCode::CertificateFailed, "G_c is not positive definite");
  }

  MatrixXd b_c = MatrixXd::Zero(2 * nd, nd);
  b_c.bottomRows(nd).setIdentity();
  const MatrixXd k = cert.p_c * b_c * e_f;
  cert.q_min_eigenvalue = linalg::symmetric_min_eigenvalue(cert.q_c);
  cert.gamma_sigma = linalg::symmetric_max_eigenvalue(k * k.transpose()) / cert.q_min_eigenvalue;
  cert.gamma = 1.01 * cert.gamma_sigma;
  cert.near_singular = cert.q_min_eigenvalue < 1e-6 * cert.q_c.norm();
  return cert;
}

inline LyapunovCertificate build_certificate(const ClosedLoop& loop) {
  return build_certificate(loop.laplacian().ff, loop.scenario().gains, loop.m_f(), loop.e_f());
}

struct LyapunovReport {
  std::vector<double> values;
  bool non_increasing = true;
  double max_increase = 0.0;  // largest V_{k+1} - V_k observed
  std::optional<std::size_t> first_violation;
};

/// V = x~^T P_c x~ + gamma xi^T G_c xi + theta~^T Lambda^{-1} theta~ per sample.
/// Adaptive mode only; the ground-truth theta comes from the simulated exosystems.
inline LyapunovReport lyapunov_monitor(const ClosedLoop& loop, const Trajectory& traj, const LyapunovCertificate& cert,
                                       double slack = 1e-8) {
  if (loop.scenario().mode != ControlMode::Adaptive) {
    throw Error(ErrorCode::ValidationError, "Lyapunov monitor needs adaptive mode");
  }
  std::vector<Eigen::LDLT<MatrixXd>> lambda_inv;
  for (int f = 0; f < loop.follower_count(); ++f) lambda_inv.emplace_back(loop.adaptation_gain(f));

  LyapunovReport rep;
  for (const auto& sample : traj.samples) {
    const auto [ep, ev] = loop.tracking_errors(sample.x);
    VectorXd xt(ep.size() + ev.size());
    xt << ep, ev;
    const VectorXd xi = loop.xi_stacked(sample.x);
    const VectorXd th = loop.theta_error(sample.x);
    double v = xt.dot(cert.p_c * xt) + cert.gamma * xi.dot(cert.g_c * xi);
    Eigen::Index off = 0;
    for (int f = 0; f < loop.follower_count(); ++f) {
      const Eigen::Index k = loop.adaptation_gain(f).rows();
      const VectorXd seg = th.segment(off, k);
      v += seg.dot(lambda_inv[static_cast<std::size_t>(f)].solve(seg));
      off += k;
    }
    if (!rep.values.empty()) {
      const double prev = rep.values.back();
      const double increase = v - prev;
      rep.max_increase = std::max(rep.max_increase, increase);
      if (increase > slack * (1.0 + prev) && rep.non_increasing) {
        rep.non_increasing = false;
        rep.first_violation = rep.values.size();
      }
    }
    rep.values.push_back(v);
  }
  return rep;
}

struct RateFit {
  bool defined = false;
  double rate = 0.0;  // slope of log ||(p~, v~)|| per second
  std::size_t samples = 0;
};

struct MetricsSummary {
  double initial_err_p = 0.0;
  double initial_err_v = 0.0;
  double terminal_time = 0.0;
  double terminal_err_p = 0.0;
  double terminal_err_v = 0.0;
  std::vector<double> terminal_follower_err_p;
  double min_pairwise_distance = 0.0;
  double max_state_norm = 0.0;
  RateFit rate_fit;
};

/// Least-squares slope of log sqrt(err_p^2 + err_v^2) against t over the
/// final half of the run. Undefined when fewer than two samples have a
/// positive error norm.
inline RateFit fit_decay_rate(const Trajectory& traj) {
  RateFit fit;
  if (traj.samples.empty()) return fit;
  const double t_end = traj.samples.back().t;
  const double t_start = traj.samples.front().t;
  const double t_half = t_start + 0.5 * (t_end - t_start);
  std::vector<std::pair<double, double>> pts;
  for (std::size_t i = 0; i < traj.samples.size(); ++i) {
    if (traj.samples[i].t < t_half) continue;
    const double norm = std::hypot(traj.metrics[i].err_p, traj.metrics[i].err_v);
    if (!(norm > 0.0) || !std::isfinite(norm)) return fit;
    pts.emplace_back(traj.samples[i].t, std::log(norm));
  }
  if (pts.size() < 2) return fit;
  double mt = 0.0;
  double my = 0.0;
  for (const auto& [t, y] : pts) {
    mt += t;
    my += y;
  }
  mt /= static_cast<double>(pts.size());
  my /= static_cast<double>(pts.size());
  double sxy = 0.0;
  double sxx = 0.0;
  for (const auto& [t, y] : pts) {
    sxy += (t - mt) * (y - my);
    sxx += (t - mt) * (t - mt);
  }
  if (!(sxx > 0.0)) return fit;
  fit.defined = true;
  fit.rate = sxy / sxx;
  fit.samples = pts.size();
  return fit;
}

inline MetricsSummary metrics(const Trajectory& traj) {
  MetricsSummary out;
  if (traj.samples.empty()) return out;
  out.initial_err_p = traj.metrics.front().err_p;
  out.initial_err_v = traj.metrics.front().err_v;
  out.terminal_time = traj.samples.back().t;
  out.terminal_err_p = traj.metrics.back().err_p;
  out.terminal_err_v = traj.metrics.back().err_v;
  out.terminal_follower_err_p = traj.metrics.back().follower_err_p;
  out.min_pairwise_distance = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < traj.samples.size(); ++i) {
    out.min_pairwise_distance = std::min(out.min_pairwise_distance, traj.metrics[i].min_dist);
    out.max_state_norm = std::max(out.max_state_norm, traj.samples[i].x.cwiseAbs().maxCoeff());
  }
  out.rate_fit = fit_decay_rate(traj);
  return out;
}

}  // namespace bearing_forge
