#include <CLI11.hpp>
#include <cstdint>
#include <iostream>
#include <json.hpp>
#include <optional>

#include "qvrl/analysis.hpp"
#include "qvrl/errors.hpp"
#include "qvrl/experiment.hpp"
#include "qvrl/learners.hpp"
#include "qvrl/parallel.hpp"

namespace {

using nlohmann::json;

int print_schedule_report(const qvrl::ScheduleReport& rep) {
  json checks = json::array();
  for (const auto& c : rep.checks)
    checks.push_back({{"check", c.name}, {"passed", c.passed}, {"detail", c.detail}});
  json out = {{"passed", rep.passed()},
              {"decaying_temperature", rep.decaying_temperature},
              {"required_step_constant", rep.required_step_constant},
              {"checks", checks}};
  std::cout << out.dump(2) << '\n';
  return rep.passed() ? qvrl::exit_ok : qvrl::exit_schedule_violation;
}

int check_schedule(const std::string& path) {
  const qvrl::ExperimentConfig cfg = qvrl::load_config(path);
  const json& p = cfg.resolved["parameters"];
  if (!p.contains("schedule")) {
    std::cerr << "error: experiment '" << qvrl::to_string(cfg.experiment)
              << "' has no schedule\n";
    return qvrl::exit_config_error;
  }
  qvrl::ScheduleScreenOptions opts;
  std::size_t horizon = 1000000;
  if (cfg.experiment == qvrl::ExperimentKind::schedule_check) {
    horizon = p["horizon"].get<std::size_t>();
    opts.step_condition_constant = p["step_condition_constant"].get<double>();
    opts.divergence_ratio = p["divergence_ratio"].get<double>();
    opts.tail_tolerance = p["tail_tolerance"].get<double>();
  }
  return print_schedule_report(
      qvrl::validate_schedule(qvrl::parse_schedule(p["schedule"]), horizon, opts));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Risk-sensitive continuous-time q-learning experiments"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run an experiment from a JSON configuration");
  std::string run_config;
  bool paper_scale = false;
  std::optional<int> workers;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  run->add_option("config", run_config, "Configuration file")->required();
  run->add_flag("--paper-scale", paper_scale, "Full-scale episode and replication counts");
  run->add_option("--workers", workers, "Worker threads (default: QVRL_WORKERS or 1)");
  run->add_option("--seed", seed, "Override master_seed");
  run->add_option("--out", out_dir, "Override output_dir");

  auto* check = app.add_subcommand("check-schedule", "Screen a configuration's schedule");
  std::string check_config;
  check->add_option("config", check_config, "Configuration file")->required();

  auto* pg = app.add_subcommand("pg-bias", "Policy-gradient bias of the naive estimator");
  double phi = 1.0, x = 1.0, horizon = 1.0, eps = -2.0, dt = 0.01;
  std::size_t paths = 10000;
  std::uint64_t pg_seed = 1;
  pg->add_option("--phi", phi, "Policy feedback gain")->capture_default_str();
  pg->add_option("--x", x, "Initial state")->capture_default_str();
  pg->add_option("--T", horizon, "Horizon")->capture_default_str();
  pg->add_option("--eps", eps, "Risk sensitivity")->capture_default_str();
  pg->add_option("--paths", paths, "Monte Carlo paths")->capture_default_str();
  pg->add_option("--dt", dt, "Time step")->capture_default_str();
  pg->add_option("--seed", pg_seed, "Master seed")->capture_default_str();
  std::optional<int> pg_workers;
  pg->add_option("--workers", pg_workers, "Worker threads");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      qvrl::ExperimentConfig cfg = qvrl::load_config(run_config);
      if (paper_scale) qvrl::apply_paper_scale(cfg);
      if (workers) cfg.workers = *workers;
      if (seed) cfg.master_seed = *seed;
      if (out_dir) cfg.output_dir = *out_dir;
      cfg.resolved = cfg.echo();
      const auto rep = qvrl::run_experiment(cfg);
      json shown = rep.report["results"];
      if (shown.contains("grid")) shown["grid"] = "see grid.csv";
      std::cout << shown.dump(2) << '\n';
      for (const auto& f : rep.failures) std::cerr << "failure: " << f << '\n';
      std::cerr << "outputs written to " << cfg.output_dir.string() << '\n';
      return rep.exit_code;
    }
    if (*check) return check_schedule(check_config);
    if (*pg) {
      const auto rep = qvrl::pg_bias_demo(phi, x, horizon, eps, paths, dt,
                                          qvrl::RngStream(pg_seed, 0),
                                          qvrl::resolve_workers(pg_workers));
      const json out = {{"naive_estimate", rep.naive_estimate},
                        {"naive_stderr", rep.naive_stderr},
                        {"true_gradient", rep.true_gradient},
                        {"predicted_naive_mean", rep.predicted_naive_mean},
                        {"bias", rep.bias},
                        {"paths", rep.paths}};
      std::cout << out.dump(2) << '\n';
      return qvrl::exit_ok;
    }
  } catch (const qvrl::ConfigError& e) {
    std::cerr << e.what() << '\n';
    return qvrl::exit_config_error;
  } catch (const qvrl::PreconditionViolation& e) {
    std::cerr << "error: " << e.what() << '\n';
    return qvrl::exit_config_error;
  } catch (const qvrl::LearnerDivergence& e) {
    std::cerr << "diverged at episode " << e.episode() << ": " << e.what() << '\n';
    return qvrl::exit_divergence;
  }
  return qvrl::exit_ok;
}
