#include "letf/diagnostics.hpp"

#include <cmath>

namespace letf {

void TrajectoryRecord::push(Index step, Vector mean, Vector reference, double ess_value) {
  if (mean.size() != reference.size()) throw DimensionError("TrajectoryRecord: mean and reference lengths differ");
  steps.push_back(step);
  analysis_means.push_back(std::move(mean));
  references.push_back(std::move(reference));
  ess.push_back(ess_value);
}

void TrajectoryRecord::validate() const {
  const std::size_t n = steps.size();
  if (analysis_means.size() != n || references.size() != n || ess.size() != n)
    throw DimensionError("TrajectoryRecord: misaligned columns");
  for (std::size_t k = 0; k < n; ++k)
    if (analysis_means[k].size() != references[k].size())
      throw DimensionError("TrajectoryRecord: mean and reference lengths differ");
}

double rmse_time_average(const TrajectoryRecord& record, const RmseOptions& opts) {
  record.validate();
  if (record.size() == 0) throw InvalidArgumentError("rmse_time_average: empty record");
  double acc = 0.0;
  for (std::size_t k = 0; k < record.size(); ++k) {
    double err = (record.analysis_means[k] - record.references[k]).norm();
    if (opts.component_normalized) err /= std::sqrt(static_cast<double>(record.references[k].size()));
    acc += opts.average == RmseAverage::NormMean ? err : err * err;
  }
  acc /= static_cast<double>(record.size());
  return opts.average == RmseAverage::NormMean ? acc : std::sqrt(acc);
}

double spatial_correlation(const std::vector<Vector>& trajectory, Index shift, std::optional<Index> x) {
  if (trajectory.empty()) throw InvalidArgumentError("spatial_correlation: empty trajectory");
  const Index n = trajectory.front().size();
  if (n < 1) throw DimensionError("spatial_correlation: empty state");
  for (const Vector& z : trajectory)
    if (z.size() != n) throw DimensionError("spatial_correlation: states differ in length");
  const auto wrap = [n](Index j) { return ((j % n) + n) % n; };

  const auto at = [&](Index j) {
    const Index js = wrap(j + shift);
    double num = 0.0;
    double den = 0.0;
    for (const Vector& z : trajectory) {
      num += z[js] * z[j];
      den += z[j] * z[j];
    }
    if (den == 0.0) throw InvalidArgumentError("spatial_correlation: zero variance at a grid point");
    return num / den;
  };
  if (x) return at(wrap(*x));
  double sum = 0.0;
  for (Index j = 0; j < n; ++j) sum += at(j);
  return sum / static_cast<double>(n);
}

ConvergenceFit fit_convergence(const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 3) throw InvalidArgumentError("fit_convergence: need at least three points");
  const auto k = static_cast<Index>(points.size());
  Vector lx(k), ly(k);
  for (Index i = 0; i < k; ++i) {
    const auto [m, err] = points[static_cast<std::size_t>(i)];
    if (!(m > 0.0) || !(err > 0.0) || !std::isfinite(err))
      throw InvalidArgumentError("fit_convergence: sizes and errors must be positive and finite");
    lx[i] = std::log(m);
    ly[i] = std::log(err);
  }
  const double mx = lx.mean();
  const double my = ly.mean();
  const double sxx = (lx.array() - mx).square().sum();
  if (sxx == 0.0) throw InvalidArgumentError("fit_convergence: all sizes are equal");
  ConvergenceFit fit;
  fit.slope = ((lx.array() - mx) * (ly.array() - my)).sum() / sxx;
  fit.intercept = my - fit.slope * mx;
  const double sse = (ly.array() - fit.intercept - fit.slope * lx.array()).square().sum();
  fit.slope_stderr = k > 2 ? std::sqrt(sse / static_cast<double>(k - 2) / sxx) : 0.0;
  return fit;
}

double convergence_slope(const std::vector<std::pair<double, double>>& points) {
  return fit_convergence(points).slope;
}

}  // namespace letf
