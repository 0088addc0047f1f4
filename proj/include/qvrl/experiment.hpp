#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "qvrl/learners.hpp"

namespace qvrl {

enum class ExperimentKind { merton_regime_a, merton_regime_b, lq_sweep, pg_bias, schedule_check };

std::string to_string(ExperimentKind k);

/// Fully resolved experiment description. `resolved` holds every key with
/// defaults filled in; the typed fields mirror its top level.
struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::merton_regime_a;
  std::uint64_t master_seed = 1;
  std::size_t n_episodes = 10000;
  std::size_t replications = 100;
  std::filesystem::path output_dir = "qvrl_out";
  int workers = 0;  ///< 0: QVRL_WORKERS or 1
  nlohmann::json resolved;

  /// Top-level fields written back into `resolved`.
  nlohmann::json echo() const;
};

/// Defaults for an experiment kind, as the full resolved document.
nlohmann::json default_config(ExperimentKind k);

/// Merges `doc` over the defaults of doc["experiment"]. Unknown keys and
/// missing required keys are reported together in a ConfigError.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Sequence from {"kind": "power"|"log"|"const", ...}. Throws ConfigError.
Sequence parse_sequence(const nlohmann::json& spec, const std::string& where);
Schedule parse_schedule(const nlohmann::json& spec);

/// Scales Merton runs to 1e5 episodes x 1000 replications and LQ sweeps to
/// 1e4 replications; coarsens the per-episode record stride to keep
/// output bounded.
void apply_paper_scale(ExperimentConfig& cfg);

enum ExitCode : int {
  exit_ok = 0,
  exit_config_error = 1,
  exit_partial_failure = 2,
  exit_divergence = 3,
  exit_schedule_violation = 4,
};

struct ExperimentReport {
  int exit_code = exit_ok;
  nlohmann::json report;
  std::vector<std::string> failures;
  std::vector<std::filesystem::path> files;
};

/// Runs the experiment and writes its outputs into cfg.output_dir:
///   config.json, report.json, and per experiment
///   merton: replications/rep_NNNNN.csv, summary.csv, aggregate.csv
///   lq_sweep: replications.csv, grid.csv
///   pg_bias: pg_bias.csv
///   schedule_check: schedule_check.csv
ExperimentReport run_experiment(const ExperimentConfig& cfg);

/// Rebuilds the aggregate table (aggregate.csv for Merton runs, grid.csv
/// for LQ sweeps) from config.json and the per-replication files.
std::string reaggregate(const std::filesystem::path& output_dir);

}  // namespace qvrl
