#include "letf/twin.hpp"

#include "letf/filters.hpp"
#include "letf/localization.hpp"
#include "letf/random.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace letf {

namespace {

using Clock = std::chrono::steady_clock;

// Stream ids of the independent random sources of one run.
constexpr std::uint64_t kReferenceStream = 0;
constexpr std::uint64_t kObservationStream = 1;
constexpr std::uint64_t kInitStream = 2;
constexpr std::uint64_t kFilterStream = 3;

Vector reference_base_state(const ExperimentConfig& cfg) {
  if (cfg.model == ModelId::Lorenz63) return Vector::Ones(3);
  Vector u = Vector::Constant(cfg.dim, cfg.l96.forcing);
  u[std::min<Index>(20, cfg.dim - 1)] += 0.01;
  return u;
}

Ensemble rejuvenate(Ensemble analysis, const Ensemble& forecast, double h, RngStream& rng) {
  if (h <= 0.0) return analysis;
  return add_gaussian_perturbations(analysis, ensemble_covariance(forecast), h, rng);
}

struct StepOutcome {
  Ensemble analysis;
  double ess = std::numeric_limits<double>::quiet_NaN();
  Index fallbacks = 0;
};

StepOutcome analysis_step(const ExperimentConfig& cfg, const Ensemble& forecast, const Vector& y,
                          const Vector& z_ref, const ObservationModel& om, RngStream& rng) {
  StepOutcome out;
  const auto take = [&out](AnalysisResult r) {
    out.analysis = std::move(r.analysis);
    if (auto it = r.diagnostics.find("ess"); it != r.diagnostics.end()) out.ess = it->second;
  };
  switch (cfg.filter) {
    case FilterId::Perfect:
      out.analysis = Ensemble(z_ref.replicate(1, forecast.size()));
      break;
    case FilterId::ObsOnly: {
      Matrix z = forecast.states();
      for (std::size_t k = 0; k < cfg.obs_indices.size(); ++k)
        z.row(cfg.obs_indices[k]).setConstant(y[static_cast<Index>(k)]);
      out.analysis = Ensemble(std::move(z));
      break;
    }
    case FilterId::Sir:
      take(sir_analysis(forecast, y, om, {cfg.epsilon, cfg.rejuvenation, false}, rng));
      break;
    case FilterId::Enkf:
    case FilterId::Esrf: {
      AnalysisResult r = cfg.filter == FilterId::Enkf && cfg.enkf_perturbed_obs
                             ? enkf_perturbed_analysis(forecast, y, om, rng)
                             : esrf_analysis(forecast, y, om);
      r.analysis = rejuvenate(std::move(r.analysis), forecast, cfg.rejuvenation, rng);
      take(std::move(r));
      break;
    }
    case FilterId::Etpf:
      take(etpf_analysis(forecast, y, om, {cfg.rejuvenation, RejuvenationCovariance::Forecast}, rng));
      break;
    case FilterId::StochasticEtpf: {
      AnalysisResult r = stochastic_etpf_analysis(forecast, y, om, rng);
      r.analysis = rejuvenate(std::move(r.analysis), forecast, cfg.rejuvenation, rng);
      take(std::move(r));
      break;
    }
    case FilterId::EtpfR0:
    case FilterId::LocalizedEtpf: {
      LocalizationConfig loc = cfg.localization;
      if (cfg.filter == FilterId::EtpfR0) {
        loc.r_loc_R = std::numeric_limits<double>::infinity();
        loc.r_loc_c = 0.0;
      }
      LocalizedAnalysis r =
          localized_etpf_analysis(forecast, y, om, loc, cfg.grid(), {cfg.rejuvenation, false}, rng);
      out.fallbacks = r.fallback_count;
      take(std::move(r.result));
      break;
    }
    case FilterId::Letkf: {
      LocalizedAnalysis r = letkf_analysis(forecast, y, om, cfg.localization, cfg.grid());
      r.result.analysis = rejuvenate(std::move(r.result.analysis), forecast, cfg.rejuvenation, rng);
      take(std::move(r.result));
      break;
    }
  }
  if (std::isnan(out.ess)) out.ess = effective_sample_size(importance_weights(forecast, y, om));
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  f << text;
}

}  // namespace

Vector reference_initial_state(const ExperimentConfig& cfg) {
  cfg.validate();
  const OdeModel model = cfg.make_model();
  RngStream rng(cfg.seed, kReferenceStream);
  Vector z = reference_base_state(cfg) + cfg.reference_perturbation * rng.normal_vector(cfg.dim);
  for (Index n = 0; n < cfg.spinup; ++n) z = flow_map(model, z, cfg.flow);
  return z;
}

RunSummary run_twin_experiment(const ExperimentConfig& cfg, const std::optional<std::string>& out_dir) {
  cfg.validate();
  const auto start = Clock::now();
  const OdeModel model = cfg.make_model();
  const ObservationModel om = cfg.make_observation_model();
  RngStream obs_rng(cfg.seed, kObservationStream);
  RngStream init_rng(cfg.seed, kInitStream);
  RngStream filter_rng(cfg.seed, kFilterStream);

  RunSummary summary;
  summary.config_echo = cfg.echo();
  Vector z_ref = reference_initial_state(cfg);
  Ensemble ens(z_ref.replicate(1, cfg.ensemble_size) + cfg.init_spread * init_rng.normal_matrix(cfg.dim, cfg.ensemble_size));
  const Vector obs_sd = om.r_diag.cwiseSqrt();
  const double norm_scale = cfg.component_normalized_rmse ? 1.0 / std::sqrt(static_cast<double>(cfg.dim)) : 1.0;

  TrajectoryRecord record;
  Index over_threshold = 0;
  double obs_sq = 0.0;
  for (Index n = 1; n <= cfg.cycles; ++n) {
    const auto t0 = Clock::now();
    z_ref = flow_map(model, z_ref, cfg.flow);
    const Vector y = om.observe(z_ref) + obs_sd.cwiseProduct(obs_rng.normal_vector(om.obs_dim()));

    StepOutcome step;
    try {
      propagate(model, ens, cfg.flow);
      if (cfg.inflation != 1.0) ens = apply_inflation(ens, cfg.inflation);
      step = analysis_step(cfg, ens, y, z_ref, om, filter_rng);
    } catch (const IntegrationError& e) {
      summary.diverged = true;
      summary.divergence_reason = std::string("integration failure: ") + e.what();
    } catch (const Error& e) {
      summary.diverged = true;
      summary.divergence_reason = std::string("analysis failure: ") + e.what();
    }
    if (summary.diverged) {
      summary.divergence_cycle = n;
      break;
    }
    ens = std::move(step.analysis);
    summary.fallback_count += step.fallbacks;

    const Vector mean = ensemble_mean(ens);
    const double err = (mean - z_ref).norm() * norm_scale;
    CycleRecord rec;
    rec.cycle = n;
    rec.rmse = err;
    rec.ess = step.ess;
    rec.wall_ms = cfg.record_timing ? std::chrono::duration<double, std::milli>(Clock::now() - t0).count() : 0.0;
    summary.cycles.push_back(rec);
    summary.cycles_run = n;
    if (n > cfg.discard) {
      record.push(n, mean, z_ref, step.ess);
      for (Index j : cfg.obs_indices) obs_sq += (mean[j] - z_ref[j]) * (mean[j] - z_ref[j]);
    }

    over_threshold = (!std::isfinite(err) || err > cfg.divergence_threshold) ? over_threshold + 1 : 0;
    if (!std::isfinite(err) || over_threshold >= cfg.divergence_window) {
      summary.diverged = true;
      summary.divergence_cycle = n;
      summary.divergence_reason = std::isfinite(err) ? "error above threshold" : "non-finite analysis";
      break;
    }
  }

  if (summary.diverged || record.size() == 0) {
    summary.rmse = std::numeric_limits<double>::infinity();
  } else {
    summary.rmse = rmse_time_average(record, {RmseAverage::NormMean, cfg.component_normalized_rmse});
  }
  summary.observed_rmse =
      record.size() ? std::sqrt(obs_sq / static_cast<double>(record.size() * cfg.obs_indices.size())) : 0.0;
  double ess_sum = 0.0;
  for (double e : record.ess) ess_sum += e;
  summary.mean_ess = record.size() ? ess_sum / static_cast<double>(record.size()) : 0.0;
  summary.wall_seconds = cfg.record_timing ? std::chrono::duration<double>(Clock::now() - start).count() : 0.0;

  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    const std::filesystem::path csv = std::filesystem::path(*out_dir) / "cycles.csv";
    summary.csv_path = csv.string();
    write_file(csv, cycles_csv(summary.cycles));
    write_file(std::filesystem::path(*out_dir) / "summary.txt", summary_text(summary));
  }
  return summary;
}

std::vector<SweepCell> run_sweep(const ExperimentConfig& base, const SweepConfig& sweep) {
  std::vector<SweepCell> cells;
  for (double v1 : sweep.values1)
    for (double v2 : sweep.values2) {
      ExperimentConfig cfg = base;
      set_parameter(cfg, sweep.param1, v1);
      set_parameter(cfg, sweep.param2, v2);
      cells.push_back({v1, v2, run_twin_experiment(cfg).rmse});
    }
  return cells;
}

SweepCell best_cell(const std::vector<SweepCell>& cells) {
  if (cells.empty()) throw InvalidArgumentError("best_cell: no cells");
  SweepCell best = cells.front();
  for (const SweepCell& c : cells)
    if (c.rmse < best.rmse) best = c;
  return best;
}

std::string cycles_csv(const std::vector<CycleRecord>& cycles) {
  std::ostringstream os;
  os << std::setprecision(17) << "cycle,rmse,ess,wall_ms\n";
  for (const CycleRecord& c : cycles) os << c.cycle << ',' << c.rmse << ',' << c.ess << ',' << c.wall_ms << '\n';
  return os.str();
}

std::string sweep_csv(const std::vector<SweepCell>& cells) {
  std::ostringstream os;
  os << std::setprecision(17) << "param1,param2,rmse\n";
  for (const SweepCell& c : cells) os << c.param1 << ',' << c.param2 << ',' << c.rmse << '\n';
  return os.str();
}

std::string summary_text(const RunSummary& s) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "{\n  \"rmse\": " << s.rmse << ",\n  \"observed_rmse\": " << s.observed_rmse << ",\n  \"mean_ess\": " << s.mean_ess << ",\n  \"wall_seconds\": "
     << s.wall_seconds << ",\n  \"cycles_run\": " << s.cycles_run << ",\n  \"diverged\": "
     << (s.diverged ? "true" : "false") << ",\n  \"divergence_cycle\": " << s.divergence_cycle
     << ",\n  \"divergence_reason\": \"" << s.divergence_reason << "\",\n  \"fallback_count\": " << s.fallback_count
     << ",\n  \"csv\": \"" << s.csv_path << "\"\n}\n";
  os << "# config\n" << s.config_echo;
  return os.str();
}

}  // namespace letf
