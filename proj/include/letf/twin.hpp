// Twin experiments: a hidden reference run, synthetic observations and one
// configured filter cycling forecast, inflation, analysis and rejuvenation.
#pragma once

#include "letf/config.hpp"
#include "letf/diagnostics.hpp"

#include <optional>
#include <string>
#include <vector>

namespace letf {

struct CycleRecord {
  Index cycle = 0;
  double rmse = 0.0;  ///< error of the analysis mean at this cycle
  double ess = 0.0;
  double wall_ms = 0.0;
};

struct RunSummary {
  double rmse = 0.0;  ///< time average after the discarded cycles; +inf when diverged
  /// Root mean square over recorded cycles and observed components of the mean error.
  double observed_rmse = 0.0;
  double mean_ess = 0.0;
  double wall_seconds = 0.0;
  bool diverged = false;
  Index divergence_cycle = -1;
  std::string divergence_reason;
  Index cycles_run = 0;
  Index fallback_count = 0;
  std::string csv_path;
  std::string config_echo;
  std::vector<CycleRecord> cycles;
};

/// Runs one experiment; when `out_dir` is set, writes cycles.csv and summary.txt there.
RunSummary run_twin_experiment(const ExperimentConfig& cfg, const std::optional<std::string>& out_dir = std::nullopt);

/// Reference initial state after the seeded perturbation and spin-up.
Vector reference_initial_state(const ExperimentConfig& cfg);

struct SweepCell {
  double param1 = 0.0;
  double param2 = 0.0;
  double rmse = 0.0;
};

/// Every (param1, param2) pair; diverged runs report rmse = +inf.
std::vector<SweepCell> run_sweep(const ExperimentConfig& base, const SweepConfig& sweep);

/// Cell with the smallest rmse.
SweepCell best_cell(const std::vector<SweepCell>& cells);

std::string cycles_csv(const std::vector<CycleRecord>& cycles);
std::string sweep_csv(const std::vector<SweepCell>& cells);
std::string summary_text(const RunSummary& summary);

}  // namespace letf
