#pragma once

// JSON scenario files. Agent ids are 1-based in the file; leaders must be
// exactly ids 1..n_l. See docs/scenario_format.md for the schema.

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "control_laws.hpp"
#include "disturbance.hpp"
#include "errors.hpp"
#include "formation_graph.hpp"
#include "sim_engine.hpp"

namespace bearing_forge {

struct ScenarioOverrides {
  std::optional<double> kappa_p;
  std::optional<double> kappa_v;
  std::optional<double> t_final;
  std::optional<double> h;
  std::optional<ControlMode> mode;
  std::optional<std::filesystem::path> output_dir;
};

struct ScenarioConfig {
  std::string name;
  Scenario scenario;
  std::filesystem::path output_dir;
  bool oracles = false;
};

namespace detail {

using nlohmann::json;

[[noreturn]] inline void invalid(const std::string& field, const std::string& why) {
  throw Error(ErrorCode::ValidationError, field + ": " + why);
}

inline const json& require(const json& obj, const char* key, const std::string& ctx) {
  if (!obj.is_object() || !obj.contains(key)) invalid(ctx + "." + key, "missing");
  return obj.at(key);
}

inline double number(const json& value, const std::string& field) {
  if (!value.is_number()) invalid(field, "expected a number");
  return value.get<double>();
}

inline VectorXd vector_of(const json& value, int size, const std::string& field) {
  if (!value.is_array() || static_cast<int>(value.size()) != size) {
    invalid(field, "expected an array of " + std::to_string(size) + " numbers");
  }
  VectorXd out(size);
  for (int k = 0; k < size; ++k) out(k) = number(value[static_cast<std::size_t>(k)], field);
  return out;
}

inline int agent_id(const json& value, int n, const std::string& field) {
  if (!value.is_number_integer()) invalid(field, "expected an integer agent id");
  const int id = value.get<int>();
  if (id < 1 || id > n) invalid(field, "agent id " + std::to_string(id) + " does not exist");
  return id;
}

inline int agent_key(const std::string& key, int n, const std::string& field) {
  int id = 0;
  std::size_t used = 0;
  try {
    id = std::stoi(key, &used);
  } catch (const std::exception&) {
    invalid(field, "key '" + key + "' is not an agent id");
  }
  if (used != key.size()) invalid(field, "key '" + key + "' is not an agent id");
  if (id < 1 || id > n) invalid(field, "agent id " + std::to_string(id) + " does not exist");
  return id;
}

/// Reads an {"<id>": [..]} object into a stacked vector over all agents;
/// `present` records which ids were given.
inline VectorXd per_agent(const json& obj, int n, int d, const std::string& field, std::vector<bool>& present) {
  if (!obj.is_object()) invalid(field, "expected an object keyed by agent id");
  VectorXd out = VectorXd::Zero(static_cast<Eigen::Index>(n) * d);
  present.assign(static_cast<std::size_t>(n), false);
  for (const auto& [key, value] : obj.items()) {
    const int id = agent_key(key, n, field);
    out.segment(static_cast<Eigen::Index>(id - 1) * d, d) = vector_of(value, d, field + "." + key);
    present[static_cast<std::size_t>(id - 1)] = true;
  }
  return out;
}

inline DisturbanceSpec parse_disturbance(const json& obj, int d, const std::string& ctx) {
  if (!obj.is_object()) invalid(ctx, "expected an object");
  DisturbanceSpec spec = DisturbanceSpec::zero(d);
  if (obj.contains("constant")) spec.constant = vector_of(obj.at("constant"), d, ctx + ".constant");
  if (obj.contains("terms")) {
    const json& terms = obj.at("terms");
    if (!terms.is_array()) invalid(ctx + ".terms", "expected an array");
    for (std::size_t j = 0; j < terms.size(); ++j) {
      const std::string tctx = ctx + ".terms[" + std::to_string(j) + "]";
      SinusoidTerm term;
      term.omega = number(require(terms[j], "omega", tctx), tctx + ".omega");
      term.amplitude = vector_of(require(terms[j], "amplitude", tctx), d, tctx + ".amplitude");
      term.phase = terms[j].contains("phase") ? vector_of(terms[j].at("phase"), d, tctx + ".phase") : VectorXd::Zero(d);
      spec.terms.push_back(term);
    }
  }
  try {
    validate(spec);
  } catch (const Error& e) {
    invalid(ctx, e.what());
  }
  return spec;
}

}  // namespace detail

inline ScenarioConfig parse_scenario(const nlohmann::json& root, const ScenarioOverrides& overrides = {}) {
  using detail::invalid;
  using detail::json;
  using detail::require;

  if (!root.is_object()) invalid("scenario", "expected a JSON object");
  const int d = require(root, "dimension", "scenario").is_number_integer() ? root.at("dimension").get<int>() : 0;
  if (d < 2) invalid("dimension", "expected an integer >= 2");

  const json& agents = require(root, "agents", "scenario");
  const json& count = require(agents, "count", "agents");
  if (!count.is_number_integer() || count.get<int>() < 3) invalid("agents.count", "expected an integer >= 3");
  const int n = count.get<int>();
  const json& leaders = require(agents, "leaders", "agents");
  if (!leaders.is_array() || leaders.empty()) invalid("agents.leaders", "expected a non-empty array of ids");
  std::set<int> leader_ids;
  for (const auto& id : leaders) leader_ids.insert(detail::agent_id(id, n, "agents.leaders"));
  const int nl = static_cast<int>(leader_ids.size());
  if (nl >= n) invalid("agents.leaders", "at least one follower is required");
  if (*leader_ids.rbegin() != nl || leader_ids.size() != leaders.size()) {
    invalid("agents.leaders", "leaders must be exactly the ids 1..n_l without repeats");
  }
  const int nf = n - nl;

  const json& edge_list = require(root, "edges", "scenario");
  if (!edge_list.is_array()) invalid("edges", "expected an array of [i, j] pairs");
  std::vector<SensingGraph::Edge> edges;
  std::set<std::pair<int, int>> seen;
  for (std::size_t k = 0; k < edge_list.size(); ++k) {
    const std::string ctx = "edges[" + std::to_string(k) + "]";
    const json& e = edge_list[k];
    if (!e.is_array() || e.size() != 2) invalid(ctx, "expected [i, j]");
    const int i = detail::agent_id(e[0], n, ctx);
    const int j = detail::agent_id(e[1], n, ctx);
    if (i == j) invalid(ctx, "self-loop");
    if (!seen.insert({std::min(i, j), std::max(i, j)}).second) invalid(ctx, "duplicate edge");
    edges.emplace_back(i - 1, j - 1);
  }
  SensingGraph graph(n, d, nl, edges);

  // geometry
  const json& geo = require(root, "geometry", "scenario");
  const bool has_positions = geo.contains("desired_positions");
  const bool has_bearings = geo.contains("bearings");
  if (!has_positions && !has_bearings) invalid("geometry", "need desired_positions or bearings");

  std::optional<BearingSet> bearings;
  if (has_positions) {
    std::vector<bool> present;
    const VectorXd p_star = detail::per_agent(geo.at("desired_positions"), n, d, "geometry.desired_positions", present);
    for (int i = 0; i < n; ++i) {
      if (!present[static_cast<std::size_t>(i)]) {
        invalid("geometry.desired_positions", "agent " + std::to_string(i + 1) + " missing");
      }
    }
    try {
      bearings = BearingSet::from_positions(graph, p_star);
    } catch (const Error& e) {
      invalid("geometry.desired_positions", e.what());
    }
  }
  if (has_bearings) {
    const json& list = geo.at("bearings");
    if (!list.is_array()) invalid("geometry.bearings", "expected an array");
    BearingSet given(d);
    for (std::size_t k = 0; k < list.size(); ++k) {
      const std::string ctx = "geometry.bearings[" + std::to_string(k) + "]";
      const int i = detail::agent_id(require(list[k], "from", ctx), n, ctx + ".from");
      const int j = detail::agent_id(require(list[k], "to", ctx), n, ctx + ".to");
      if (!graph.has_edge(i - 1, j - 1)) invalid(ctx, "no edge between agents " + std::to_string(i) + " and " + std::to_string(j));
      const VectorXd g = detail::vector_of(require(list[k], "g", ctx), d, ctx + ".g");
      try {
        given.set(i - 1, j - 1, g);
      } catch (const Error& e) {
        invalid(ctx, e.what());
      }
      if (bearings) {
        const double gap = (bearings->at(i - 1, j - 1) - given.at(i - 1, j - 1)).norm();
        if (gap > 1e-9) {
          invalid(ctx, "disagrees with desired_positions by " + std::to_string(gap));
        }
      }
    }
    if (!bearings) {
      for (const auto& [i, j] : graph.undirected_edges()) {
        if (!given.contains(i, j)) {
          invalid("geometry.bearings", "MissingBearing: edge (" + std::to_string(i + 1) + "," + std::to_string(j + 1) + ")");
        }
      }
      bearings = given;
    }
  }

  const VectorXd v_c = detail::vector_of(require(geo, "leader_velocity", "geometry"), d, "geometry.leader_velocity");
  std::vector<bool> present;
  const VectorXd p0 = detail::per_agent(require(geo, "initial_positions", "geometry"), n, d, "geometry.initial_positions", present);
  for (int i = 0; i < n; ++i) {
    if (!present[static_cast<std::size_t>(i)]) invalid("geometry.initial_positions", "agent " + std::to_string(i + 1) + " missing");
  }
  VectorXd v0 = VectorXd::Zero(static_cast<Eigen::Index>(nf) * d);
  if (geo.contains("initial_velocities")) {
    const VectorXd all = detail::per_agent(geo.at("initial_velocities"), n, d, "geometry.initial_velocities", present);
    for (int i = 0; i < nl; ++i) {
      if (present[static_cast<std::size_t>(i)]) {
        invalid("geometry.initial_velocities", "leader " + std::to_string(i + 1) + " moves at leader_velocity");
      }
    }
    v0 = all.tail(static_cast<Eigen::Index>(nf) * d);
  }

  // disturbances
  std::vector<DisturbanceSpec> disturbances(static_cast<std::size_t>(nf), DisturbanceSpec::zero(d));
  if (root.contains("disturbances")) {
    const json& dist = root.at("disturbances");
    if (!dist.is_object()) invalid("disturbances", "expected an object keyed by follower id");
    for (const auto& [key, value] : dist.items()) {
      const int id = detail::agent_key(key, n, "disturbances");
      if (id <= nl) invalid("disturbances." + key, "agent " + key + " is a leader");
      disturbances[static_cast<std::size_t>(id - nl - 1)] = detail::parse_disturbance(value, d, "disturbances." + key);
    }
  }

  // controller
  const json& ctl = require(root, "controller", "scenario");
  ControlMode mode = ControlMode::Known;
  if (ctl.contains("mode")) {
    if (!ctl.at("mode").is_string()) invalid("controller.mode", "expected a string");
    try {
      mode = parse_control_mode(ctl.at("mode").get<std::string>());
    } catch (const Error& e) {
      invalid("controller.mode", e.what());
    }
  }
  if (overrides.mode) mode = *overrides.mode;

  ControllerGains gains;
  gains.kappa_p = detail::number(require(ctl, "kappa_p", "controller"), "controller.kappa_p");
  gains.kappa_v = detail::number(require(ctl, "kappa_v", "controller"), "controller.kappa_v");
  if (overrides.kappa_p) gains.kappa_p = *overrides.kappa_p;
  if (overrides.kappa_v) gains.kappa_v = *overrides.kappa_v;
  const double rate = ctl.contains("adaptation_rate") ? detail::number(ctl.at("adaptation_rate"), "controller.adaptation_rate") : 1.0;
  if (mode == ControlMode::Adaptive) {
    for (const auto& spec : disturbances) {
      const int k = 2 * spec.sinusoid_count() + 1;
      gains.lambda.push_back(rate * MatrixXd::Identity(k, k));
    }
  }

  const bool freeze = ctl.value("freeze_adaptation", false);

  EtaInit eta_init = EtaInit::CancelVelocity;
  std::vector<VectorXd> eta0;
  if (ctl.contains("eta0")) {
    const json& e = ctl.at("eta0");
    if (e.is_string()) {
      const auto s = e.get<std::string>();
      if (s == "cancel_velocity") eta_init = EtaInit::CancelVelocity;
      else if (s == "zero") eta_init = EtaInit::Zero;
      else if (s == "xi_zero") eta_init = EtaInit::XiZero;
      else invalid("controller.eta0", "unknown policy '" + s + "'");
    } else if (e.is_object()) {
      eta_init = EtaInit::Explicit;
      for (int f = 0; f < nf; ++f) {
        const std::string key = std::to_string(nl + f + 1);
        const int q = 2 * disturbances[static_cast<std::size_t>(f)].sinusoid_count() + 1;
        eta0.push_back(detail::vector_of(require(e, key.c_str(), "controller.eta0"), q * d, "controller.eta0." + key));
      }
    } else {
      invalid("controller.eta0", "expected a policy name or an object keyed by follower id");
    }
  }

  std::vector<VectorXd> theta0;
  bool theta_from_truth = false;
  if (ctl.contains("theta_hat0")) {
    const json& th = ctl.at("theta_hat0");
    if (th.is_string()) {
      const auto s = th.get<std::string>();
      if (s == "true") theta_from_truth = true;
      else if (s != "zero") invalid("controller.theta_hat0", "unknown policy '" + s + "'");
    } else if (th.is_object()) {
      for (int f = 0; f < nf; ++f) {
        const std::string key = std::to_string(nl + f + 1);
        const int k = 2 * disturbances[static_cast<std::size_t>(f)].sinusoid_count() + 1;
        theta0.push_back(detail::vector_of(require(th, key.c_str(), "controller.theta_hat0"), k, "controller.theta_hat0." + key));
      }
    } else {
      invalid("controller.theta_hat0", "expected \"zero\", \"true\" or an object keyed by follower id");
    }
  }

  // integration
  IntegrationSettings integ;
  if (root.contains("integration")) {
    const json& in = root.at("integration");
    if (in.contains("h")) integ.h = detail::number(in.at("h"), "integration.h");
    if (in.contains("t_final")) integ.t_final = detail::number(in.at("t_final"), "integration.t_final");
    if (in.contains("record_every")) {
      if (!in.at("record_every").is_number_integer()) invalid("integration.record_every", "expected an integer");
      integ.record_every = in.at("record_every").get<int>();
    }
    if (in.contains("collision_threshold")) {
      integ.collision_threshold = detail::number(in.at("collision_threshold"), "integration.collision_threshold");
    }
  }
  if (overrides.h) integ.h = *overrides.h;
  if (overrides.t_final) integ.t_final = *overrides.t_final;
  if (!(integ.h > 0.0)) invalid("integration.h", "must be positive");
  if (!(integ.t_final > 0.0)) invalid("integration.t_final", "must be positive");
  if (integ.record_every < 1) invalid("integration.record_every", "must be at least 1");
  if (!(integ.collision_threshold >= 0.0)) invalid("integration.collision_threshold", "must be non-negative");

  ScenarioConfig cfg{
      .name = root.value("name", std::string("scenario")),
      .scenario =
          Scenario{
              .graph = graph,
              .bearings = *bearings,
              .leader_velocity = v_c,
              .initial_positions = p0,
              .initial_follower_velocities = v0,
              .disturbances = disturbances,
              .mode = mode,
              .gains = gains,
              .freeze_adaptation = freeze,
              .theta_hat0 = theta0,
              .eta_init = eta_init,
              .eta0 = eta0,
              .integration = integ,
          },
      .output_dir = "out",
      .oracles = false,
  };
  if (root.contains("outputs")) {
    const json& out = root.at("outputs");
    if (out.contains("directory")) cfg.output_dir = out.at("directory").get<std::string>();
    cfg.oracles = out.value("oracles", false);
  }
  if (overrides.output_dir) cfg.output_dir = *overrides.output_dir;

  // Fail fast on the stability preconditions: localizability, isolated followers,
  // gain conditions, feedback_only with disturbances.
  try {
    const ClosedLoop loop(cfg.scenario);
    if (theta_from_truth && mode == ControlMode::Adaptive) {
      for (int f = 0; f < nf; ++f) cfg.scenario.theta_hat0.push_back(*loop.parameterization(f).theta_true);
    }
    (void)ClosedLoop(cfg.scenario).initial_state();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ValidationError) throw;
    throw Error(ErrorCode::ValidationError, e.what());
  }
  return cfg;
}

inline ScenarioConfig parse_scenario_text(const std::string& text, const ScenarioOverrides& overrides = {}) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
  return parse_scenario(root, overrides);
}

inline ScenarioConfig load_scenario(const std::filesystem::path& path, const ScenarioOverrides& overrides = {}) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_scenario_text(buffer.str(), overrides);
}

}  // namespace bearing_forge
