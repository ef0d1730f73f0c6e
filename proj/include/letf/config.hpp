// Experiment configuration: a flat INI file with one section per concern.
#pragma once

#include "letf/core.hpp"
#include "letf/localization.hpp"
#include "letf/models.hpp"
#include "letf/qmc.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace letf {

class ConfigError : public Error {
 public:
  using Error::Error;
};

enum class ModelId { Lorenz63, Lorenz96 };

enum class FilterId {
  Perfect,         ///< analysis := reference (test stub)
  ObsOnly,         ///< observed components := observation, forecast elsewhere
  Sir,
  Enkf,            ///< square root filter, or perturbed observations when enkf_perturbed_obs is set
  Esrf,
  Etpf,
  EtpfR0,          ///< localized ETPF with r_loc_R = inf and r_loc_c = 0
  StochasticEtpf,
  Letkf,
  LocalizedEtpf
};

std::string to_string(ModelId id);
std::string to_string(FilterId id);
FilterId parse_filter_id(const std::string& name);

struct ExperimentConfig {
  ModelId model = ModelId::Lorenz63;
  Lorenz63Params l63;
  Lorenz96Params l96;
  Index dim = 3;

  FlowMapConfig flow;

  std::vector<Index> obs_indices = {0};
  double obs_variance = 8.0;

  FilterId filter = FilterId::Esrf;
  Index ensemble_size = 50;
  double inflation = 1.0;
  double rejuvenation = 0.0;
  double epsilon = 0.0;
  bool enkf_perturbed_obs = false;
  LocalizationConfig localization;
  /// Domain length used for observation positions; grid points sit at j * L / dim.
  double domain_length = 3.0;

  /// Total assimilation cycles, the discarded ones included.
  Index cycles = 5200;
  Index discard = 200;
  Index spinup = 1000;
  double init_spread = 1.0;
  double reference_perturbation = 0.01;
  double divergence_threshold = 20.0;
  Index divergence_window = 50;
  bool component_normalized_rmse = false;
  /// When false the wall_ms column is written as 0 so reruns are byte identical.
  bool record_timing = true;
  std::uint64_t seed = 1;

  GridGeometry grid() const { return {domain_length, dim}; }
  OdeModel make_model() const;
  ObservationModel make_observation_model() const;
  void validate() const;
  /// key = value lines covering every field, in INI section order.
  std::string echo() const;
};

/// Lorenz-63 twin setup: observe x with R = 8, dt = 0.01, 12 steps per cycle.
ExperimentConfig lorenz63_defaults();
/// 40 variables, every other grid point observed (odd indices), dt = 0.005, 22 steps.
ExperimentConfig lorenz96_defaults();

/// Two parameter grid for the sweep subcommand.
struct SweepConfig {
  std::string param1 = "inflation";
  std::vector<double> values1 = {1.0};
  std::string param2 = "rejuvenation";
  std::vector<double> values2 = {0.0};
};

/// Sets a named scalar parameter (inflation, rejuvenation, epsilon, ensemble_size,
/// r_loc_R, r_loc_c, cycles). Throws ConfigError for unknown names.
void set_parameter(ExperimentConfig& cfg, const std::string& name, double value);

struct SmootherConfig {
  double a = 0.9;
  double m0 = 0.0;
  double p0 = 1.0;
  double r = 0.5;
  Index steps = 2;
  Index samples = 20000;
  Index mcmc_samples = 200000;
  Index burn_in = 2000;
  double proposal_std = 0.8;
};

struct FileConfig {
  ExperimentConfig experiment;
  SweepConfig sweep;
  QmcConfig qmc;
  SmootherConfig smoother;
};

/// Parses INI text. The [model] name picks the defaults that the remaining keys override.
FileConfig parse_config(const std::string& text);
FileConfig load_config(const std::string& path);

/// "a:b:step" ranges or comma separated lists.
std::vector<double> parse_value_list(const std::string& text);

}  // namespace letf
