// Halton points and the single-step QMC convergence study: one ETPF transform
// against one residual resampling step on a two dimensional uniform prior.
#pragma once

#include "letf/core.hpp"
#include "letf/diagnostics.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace letf {

/// Van der Corput radical inverse of `index` in `base`.
double radical_inverse(std::uint64_t index, unsigned base);

/// dims x n matrix; column k is the Halton point with index start + k, bases
/// are the first `dims` primes (dims <= 8).
Matrix halton_points(Index n, Index dims, std::uint64_t start = 1);

/// Star discrepancy estimated over anchored boxes whose corners lie on a
/// regular grid with `grid` cells per axis. Points are the columns of `pts`.
double star_discrepancy_estimate(const Matrix& pts, Index grid = 64);

/// Posterior moments of a two dimensional distribution.
struct PosteriorMoments {
  Vector mean = Vector::Zero(2);
  Vector var = Vector::Zero(2);
  double cor = 0.0;
};

struct QmcConfig {
  std::vector<Index> sizes = {64, 128, 256, 512, 1024, 2048, 4096, 8192, 16384};
  Index reference_size = Index{1} << 22;
  double obs_variance = 2.0;
  /// Random (Cranley-Patterson) shifts of the Halton set; errors are RMSEs over them.
  Index shifts = 4;
  /// Resampling and stochastic ETPF draws per shift.
  Index repeats = 4;
  bool stochastic_etpf = true;
  std::uint64_t seed = 1;
};

struct QmcRow {
  Index m = 0;
  double etpf_mean_rmse = 0.0;
  double etpf_var_rmse = 0.0;
  double etpf_cor_rmse = 0.0;
  double resampling_mean_rmse = 0.0;
  double resampling_var_rmse = 0.0;
  double resampling_cor_rmse = 0.0;
  double stochastic_mean_rmse = 0.0;
  double stochastic_var_rmse = 0.0;
  double stochastic_cor_rmse = 0.0;
  double lp_seconds = 0.0;
};

struct QmcResult {
  double y_obs = 0.0;
  PosteriorMoments reference;
  std::vector<QmcRow> rows;
  ConvergenceFit etpf_mean_fit;
  ConvergenceFit resampling_mean_fit;
  ConvergenceFit stochastic_mean_fit;
};

/// Weighted moments with unnormalized log weights; columns of `pts` are samples.
PosteriorMoments weighted_moments(const Matrix& pts, const Vector& weights);

/// Self-normalized importance sampling reference with randomly shifted Halton points.
PosteriorMoments qmc_reference_moments(double y_obs, double obs_variance, Index n, std::uint64_t seed);

QmcResult qmc_single_step_experiment(const QmcConfig& cfg);

/// CSV with one row per ensemble size followed by commented slope lines.
std::string qmc_table_csv(const QmcResult& result);

}  // namespace letf
