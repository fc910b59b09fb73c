// bearing-forge: batch front end for scenario files.
//
//   bearing-forge run <scenario.json> [--kappa-p X] [--kappa-v X] [--t-final X]
//                     [--h X] [--mode M] [--out DIR] [--oracles]
//                     [--sweep PARAM=v1,v2,...]
//   bearing-forge validate <scenario.json> [overrides]
//   bearing-forge spectrum <scenario.json> [overrides]
//   bearing-forge localize <scenario.json>

#include <CLI11.hpp>

#include <future>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "bearing_forge/bearing_forge.hpp"

namespace bf = bearing_forge;

namespace {

struct Options {
  std::string scenario;
  std::optional<double> kappa_p;
  std::optional<double> kappa_v;
  std::optional<double> t_final;
  std::optional<double> h;
  std::optional<std::string> mode;
  std::optional<std::string> out;
  bool oracles = false;
  std::string sweep;
};

void add_common(CLI::App* cmd, Options& opt) {
  cmd->set_help_flag("--help", "Print this help message and exit");
  cmd->add_option("scenario", opt.scenario, "Scenario JSON file")->required();
  cmd->add_option("--kappa-p", opt.kappa_p, "Position gain override");
  cmd->add_option("--kappa-v", opt.kappa_v, "Velocity gain override");
  cmd->add_option("--t-final", opt.t_final, "Final time override (s)");
  cmd->add_option("--h", opt.h, "RK4 step override (s)");
  cmd->add_option("--mode", opt.mode, "Controller mode: known | adaptive | feedback_only");
  cmd->add_option("--out", opt.out, "Output directory override");
}

bf::ScenarioOverrides overrides_from(const Options& opt) {
  bf::ScenarioOverrides ov;
  ov.kappa_p = opt.kappa_p;
  ov.kappa_v = opt.kappa_v;
  ov.t_final = opt.t_final;
  ov.h = opt.h;
  if (opt.mode) ov.mode = bf::parse_control_mode(*opt.mode);
  if (opt.out) ov.output_dir = *opt.out;
  return ov;
}

int report(const bf::Error& e) {
  std::cerr << "error: " << e.what() << '\n';
  return bf::exit_code_for(e.code());
}

void print_summary(const bf::ScenarioConfig& cfg, const bf::RunResult& res) {
  std::cout << cfg.name << ": ";
  if (res.exit_code != bf::kExitSuccess) {
    std::cout << "failed (" << res.message << ")\n";
    return;
  }
  const auto& m = *res.metrics;
  std::cout << "t=" << m.terminal_time << " err_p=" << bf::format_double(m.terminal_err_p)
            << " err_v=" << bf::format_double(m.terminal_err_v) << " min_dist=" << m.min_pairwise_distance;
  if (res.oracles) {
    std::cout << " abscissa=" << res.oracles->spectral_abscissa << " xi_dev=" << res.oracles->xi_max_deviation;
    if (res.oracles->lyapunov) {
      std::cout << " V_non_increasing=" << (res.oracles->lyapunov->non_increasing ? "true" : "false");
    }
  }
  std::cout << "\n  artifacts: " << cfg.output_dir.string() << '\n';
}

int cmd_run(const Options& opt) {
  const bf::ScenarioOverrides base = overrides_from(opt);
  if (opt.sweep.empty()) {
    const bf::ScenarioConfig cfg = bf::load_scenario(opt.scenario, base);
    const bf::RunResult res = bf::run(cfg, opt.oracles || cfg.oracles);
    print_summary(cfg, res);
    if (res.exit_code != bf::kExitSuccess) std::cerr << "error: " << res.message << '\n';
    return res.exit_code;
  }

  // --sweep PARAM=v1,v2,...: each variant writes to <out>/<PARAM>_<value>.
  const auto eq = opt.sweep.find('=');
  if (eq == std::string::npos) throw bf::Error(bf::ErrorCode::ValidationError, "--sweep expects PARAM=v1,v2,...");
  const std::string param = opt.sweep.substr(0, eq);
  std::vector<std::string> values;
  std::stringstream list(opt.sweep.substr(eq + 1));
  for (std::string item; std::getline(list, item, ',');) values.push_back(item);

  const bf::ScenarioConfig probe = bf::load_scenario(opt.scenario, base);
  std::vector<bf::ScenarioConfig> variants;
  for (const auto& text : values) {
    bf::ScenarioOverrides ov = base;
    const double value = std::stod(text);
    if (param == "kappa_p") ov.kappa_p = value;
    else if (param == "kappa_v") ov.kappa_v = value;
    else if (param == "t_final") ov.t_final = value;
    else if (param == "h") ov.h = value;
    else throw bf::Error(bf::ErrorCode::ValidationError, "--sweep supports kappa_p, kappa_v, t_final, h");
    ov.output_dir = probe.output_dir / (param + "_" + text);
    variants.push_back(bf::load_scenario(opt.scenario, ov));
  }
  std::vector<std::future<bf::RunResult>> jobs;
  for (const auto& cfg : variants) {
    jobs.push_back(std::async(std::launch::async, [&cfg, &opt] { return bf::run(cfg, opt.oracles || cfg.oracles); }));
  }
  int worst = bf::kExitSuccess;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const bf::RunResult res = jobs[i].get();
    print_summary(variants[i], res);
    if (res.exit_code != bf::kExitSuccess && worst == bf::kExitSuccess) worst = res.exit_code;
  }
  return worst;
}

int cmd_validate(const Options& opt) {
  const bf::ScenarioConfig cfg = bf::load_scenario(opt.scenario, overrides_from(opt));
  const bf::ClosedLoop loop(cfg.scenario);
  const double lmin = bf::linalg::symmetric_min_eigenvalue(loop.laplacian().ff);
  std::cout << cfg.name << ": ok\n"
            << "  agents=" << loop.agent_count() << " leaders=" << loop.leader_count()
            << " dimension=" << loop.dimension() << " mode=" << bf::to_string(cfg.scenario.mode) << '\n'
            << "  lambda_min(B_ff)=" << bf::format_double(lmin)
            << " kappa_p=" << cfg.scenario.gains.kappa_p << " kappa_v=" << cfg.scenario.gains.kappa_v << '\n';
  return bf::kExitSuccess;
}

int cmd_spectrum(const Options& opt) {
  const bf::ScenarioConfig cfg = bf::load_scenario(opt.scenario, overrides_from(opt));
  const bf::ClosedLoop loop(cfg.scenario);
  const Eigen::VectorXcd eig = bf::linalg::eigenvalues(loop.a_sigma());
  std::vector<std::complex<double>> sorted(eig.data(), eig.data() + eig.size());
  std::sort(sorted.begin(), sorted.end(), [](auto a, auto b) {
    return a.real() != b.real() ? a.real() > b.real() : a.imag() > b.imag();
  });
  std::cout << "# eigenvalues of A_sigma (real imag)\n";
  for (const auto& z : sorted) std::cout << bf::format_double(z.real()) << ' ' << bf::format_double(z.imag()) << '\n';
  std::cout << "# spectral abscissa " << bf::format_double(sorted.front().real()) << '\n';
  return bf::kExitSuccess;
}

int cmd_localize(const Options& opt) {
  const bf::ScenarioConfig cfg = bf::load_scenario(opt.scenario, overrides_from(opt));
  const bf::ClosedLoop loop(cfg.scenario);
  const int d = loop.dimension();
  const int nl = loop.leader_count();
  const Eigen::VectorXd p_l = cfg.scenario.initial_positions.head(static_cast<Eigen::Index>(nl) * d);
  const bf::TargetFormation target = bf::localize_followers(loop.laplacian(), p_l, cfg.scenario.leader_velocity);
  std::cout << "# follower target positions and velocities (id, p..., v...)\n";
  for (int f = 0; f < loop.follower_count(); ++f) {
    std::cout << nl + f + 1;
    for (int k = 0; k < d; ++k) std::cout << ' ' << bf::format_double(target.positions(f * d + k));
    for (int k = 0; k < d; ++k) std::cout << ' ' << bf::format_double(target.velocities(f * d + k));
    std::cout << '\n';
  }
  return bf::kExitSuccess;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bearing-based leader-follower formation control with disturbance rejection"};
  app.require_subcommand(1);

  Options opt;
  auto* run = app.add_subcommand("run", "Integrate a scenario and write trajectory/metrics/oracle files");
  add_common(run, opt);
  run->add_flag("--oracles", opt.oracles, "Also compute and write oracles.json");
  run->add_option("--sweep", opt.sweep, "Run variants in parallel: PARAM=v1,v2,... (kappa_p, kappa_v, t_final, h)");
  auto* validate = app.add_subcommand("validate", "Load and validate a scenario without integrating");
  add_common(validate, opt);
  auto* spectrum = app.add_subcommand("spectrum", "Print the eigenvalues of the known-frequency closed-loop matrix");
  add_common(spectrum, opt);
  auto* localize = app.add_subcommand("localize", "Print the follower target formation");
  add_common(localize, opt);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : bf::kExitValidation;
  }

  try {
    if (*run) return cmd_run(opt);
    if (*validate) return cmd_validate(opt);
    if (*spectrum) return cmd_spectrum(opt);
    if (*localize) return cmd_localize(opt);
  } catch (const bf::Error& e) {
    return report(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return bf::kExitValidation;
  }
  return bf::kExitSuccess;
}
