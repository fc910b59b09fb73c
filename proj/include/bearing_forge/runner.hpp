#pragma once

// Artifact writers and the end-to-end `run` pipeline used by the CLI.
//
// trajectory.csv columns:
//   t, p_<id>_<axis>..., v_<id>_<axis>... (per agent), err_p_norm_<id> (per
//   follower), err_p_norm, err_v_norm, min_dist, V
// Numbers use 17 significant digits. V is empty unless the Lyapunov monitor
// ran (adaptive mode with oracles enabled).

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "linalg.hpp"
#include "scenario.hpp"
#include "sim_engine.hpp"

namespace bearing_forge {

enum ExitCode : int {
  kExitSuccess = 0,
  kExitValidation = 2,
  kExitCollision = 3,
  kExitNonFinite = 4,
  kExitIo = 5,
};

inline int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::CollisionDetected: return kExitCollision;
    case ErrorCode::NonFiniteState: return kExitNonFinite;
    case ErrorCode::IoError: return kExitIo;
    default: return kExitValidation;
  }
}

inline std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

inline std::string axis_name(int axis, int dimension) {
  static constexpr const char* kNames[] = {"x", "y", "z"};
  return dimension <= 3 ? kNames[axis] : std::to_string(axis + 1);
}

inline void write_trajectory_csv(std::ostream& out, const ClosedLoop& loop, const Trajectory& traj) {
  const int n = loop.agent_count();
  const int d = loop.dimension();
  const int nl = loop.leader_count();

  out << "t";
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < d; ++k) out << ",p_" << i + 1 << '_' << axis_name(k, d);
    for (int k = 0; k < d; ++k) out << ",v_" << i + 1 << '_' << axis_name(k, d);
  }
  for (int f = 0; f < loop.follower_count(); ++f) out << ",err_p_norm_" << nl + f + 1;
  out << ",err_p_norm,err_v_norm,min_dist,V\n";

  const bool has_v = traj.lyapunov.size() == traj.samples.size();
  for (std::size_t s = 0; s < traj.samples.size(); ++s) {
    const VectorXd& x = traj.samples[s].x;
    const VectorXd v = loop.all_velocities(x);
    out << format_double(traj.samples[s].t);
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < d; ++k) out << ',' << format_double(x(i * d + k));
      for (int k = 0; k < d; ++k) out << ',' << format_double(v(i * d + k));
    }
    const SampleMetrics& m = traj.metrics[s];
    for (double e : m.follower_err_p) out << ',' << format_double(e);
    out << ',' << format_double(m.err_p) << ',' << format_double(m.err_v) << ',' << format_double(m.min_dist) << ',';
    if (has_v) out << format_double(traj.lyapunov[s]);
    out << '\n';
  }
}

inline nlohmann::json metrics_json(const ClosedLoop& loop, const MetricsSummary& m) {
  nlohmann::json per_follower = nlohmann::json::object();
  for (int f = 0; f < loop.follower_count(); ++f) {
    per_follower[std::to_string(loop.leader_count() + f + 1)] = m.terminal_follower_err_p[static_cast<std::size_t>(f)];
  }
  nlohmann::json rate = {{"defined", m.rate_fit.defined}};
  if (m.rate_fit.defined) {
    rate["rate"] = m.rate_fit.rate;
    rate["samples"] = m.rate_fit.samples;
  }
  return {
      {"mode", std::string(to_string(loop.scenario().mode))},
      {"initial", {{"err_p_norm", m.initial_err_p}, {"err_v_norm", m.initial_err_v}}},
      {"terminal",
       {{"t", m.terminal_time},
        {"err_p_norm", m.terminal_err_p},
        {"err_v_norm", m.terminal_err_v},
        {"err_p_norm_per_follower", per_follower}}},
      {"min_pairwise_distance", m.min_pairwise_distance},
      {"max_abs_state", m.max_state_norm},
      {"rate_fit", rate},
  };
}

struct OracleReport {
  double spectral_abscissa = 0.0;
  Eigen::VectorXcd eigenvalues;
  double xi_max_deviation = 0.0;
  std::optional<LyapunovCertificate> certificate;
  std::optional<LyapunovReport> lyapunov;
  std::string certificate_error;
};

inline OracleReport run_oracles(const ClosedLoop& loop, Trajectory& traj) {
  OracleReport rep;
  const MatrixXd a = loop.a_sigma();
  rep.eigenvalues = linalg::eigenvalues(a);
  rep.spectral_abscissa = rep.eigenvalues.real().maxCoeff();
  rep.xi_max_deviation = xi_oracle(loop, traj);
  if (loop.scenario().mode == ControlMode::Adaptive) {
    try {
      rep.certificate = build_certificate(loop);
      rep.lyapunov = lyapunov_monitor(loop, traj, *rep.certificate);
      traj.lyapunov = rep.lyapunov->values;
    } catch (const Error& e) {
      rep.certificate_error = e.what();
    }
  }
  return rep;
}

inline nlohmann::json oracle_json(const OracleReport& rep) {
  nlohmann::json eig = nlohmann::json::array();
  for (Eigen::Index i = 0; i < rep.eigenvalues.size(); ++i) {
    eig.push_back({rep.eigenvalues(i).real(), rep.eigenvalues(i).imag()});
  }
  nlohmann::json lyap = {{"monitored", rep.lyapunov.has_value()}};
  if (rep.certificate) {
    const auto& c = *rep.certificate;
    lyap["gamma"] = c.gamma;
    lyap["gamma_sigma"] = c.gamma_sigma;
    lyap["lambda_min_Qc"] = c.q_min_eigenvalue;
    lyap["lambda_min_Pc"] = linalg::symmetric_min_eigenvalue(c.p_c);
    lyap["lambda_min_Gc"] = linalg::symmetric_min_eigenvalue(c.g_c);
    lyap["lyapunov_identity_residual"] = (c.a_c.transpose() * c.p_c + c.p_c * c.a_c + c.q_c).norm();
    lyap["near_singular"] = c.near_singular;
  }
  if (rep.lyapunov) {
    const auto& l = *rep.lyapunov;
    lyap["non_increasing"] = l.non_increasing;
    lyap["max_increase"] = l.max_increase;
    lyap["V_initial"] = l.values.front();
    lyap["V_final"] = l.values.back();
  }
  if (!rep.certificate_error.empty()) lyap["error"] = rep.certificate_error;
  return {
      {"spectral_abscissa", rep.spectral_abscissa},
      {"eigenvalues", eig},
      {"xi_max_deviation", rep.xi_max_deviation},
      {"lyapunov", lyap},
  };
}

struct RunResult {
  int exit_code = kExitSuccess;
  std::string message;
  std::optional<MetricsSummary> metrics;
  std::optional<OracleReport> oracles;
};

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

}  // namespace detail

/// Integrates the scenario and writes trajectory.csv, metrics.json and,
/// when `oracles` is set, oracles.json into `config.output_dir`.
inline RunResult run(const ScenarioConfig& config, bool oracles) {
  RunResult result;
  try {
    const ClosedLoop loop(config.scenario);
    Trajectory traj = integrate(loop);
    const MetricsSummary summary = metrics(traj);
    result.metrics = summary;
    if (oracles) result.oracles = run_oracles(loop, traj);

    std::error_code ec;
    std::filesystem::create_directories(config.output_dir, ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot create " + config.output_dir.string() + ": " + ec.message());

    std::ostringstream csv;
    write_trajectory_csv(csv, loop, traj);
    detail::write_text(config.output_dir / "trajectory.csv", csv.str());
    detail::write_text(config.output_dir / "metrics.json", metrics_json(loop, summary).dump(2) + "\n");
    if (result.oracles) {
      detail::write_text(config.output_dir / "oracles.json", oracle_json(*result.oracles).dump(2) + "\n");
    }
  } catch (const Error& e) {
    result.exit_code = exit_code_for(e.code());
    result.message = e.what();
  }
  return result;
}

}  // namespace bearing_forge
