// Skill and convergence metrics for filter runs and sampling studies.
#pragma once

#include "letf/core.hpp"

#include <optional>
#include <utility>
#include <vector>

namespace letf {

/// Per-cycle analysis means next to the reference states they are scored against.
struct TrajectoryRecord {
  std::vector<Index> steps;
  std::vector<Vector> analysis_means;
  std::vector<Vector> references;
  std::vector<double> ess;

  void push(Index step, Vector mean, Vector reference, double ess_value);
  std::size_t size() const { return steps.size(); }
  /// Throws DimensionError when the columns are misaligned.
  void validate() const;
};

enum class RmseAverage {
  NormMean,       ///< (1/N) sum_n ||mean_n - ref_n||
  RootMeanSquare  ///< sqrt((1/N) sum_n ||mean_n - ref_n||^2)
};

struct RmseOptions {
  RmseAverage average = RmseAverage::NormMean;
  /// Divide each norm by sqrt(N_z).
  bool component_normalized = false;
};

double rmse_time_average(const TrajectoryRecord& record, const RmseOptions& opts = {});

/// C(x, s) = sum_n z^n(x + s) z^n(x) / sum_n z^n(x)^2 on a periodic grid,
/// shift in grid points. Without `x` the value is averaged over all x.
double spatial_correlation(const std::vector<Vector>& trajectory, Index shift, std::optional<Index> x = std::nullopt);

struct ConvergenceFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_stderr = 0.0;
};

/// Least squares fit of log(error) against log(M). Needs at least three
/// points with positive M and positive error.
ConvergenceFit fit_convergence(const std::vector<std::pair<double, double>>& points);
double convergence_slope(const std::vector<std::pair<double, double>>& points);

}  // namespace letf
