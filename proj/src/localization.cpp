#include "letf/localization.hpp"

#include <cmath>

namespace letf {

namespace {

double physical_radius(double r, const LocalizationConfig& cfg, const GridGeometry& grid) {
  return cfg.units == RadiusUnits::GridIndex ? r * grid.spacing() : r;
}

template <class Shape>
double kernel_from_shape(Shape shape, double x, double x2, double r, double length) {
  if (r < 0.0 || std::isnan(r)) throw InvalidArgumentError("localization radius must be nonnegative");
  const double dist = periodic_distance(x, x2, length);
  if (std::isinf(r)) return 1.0;
  if (r == 0.0) return dist <= 1e-12 * length ? 1.0 : 0.0;
  return shape(dist / r);
}

void check_grid_state(const Ensemble& forecast, const GridGeometry& grid) {
  grid.validate();
  if (forecast.dim() != grid.n_grid) throw DimensionError("localized analysis: state dimension must equal grid size");
}

}  // namespace

void GridGeometry::validate() const {
  if (!(length > 0.0) || n_grid < 1) throw InvalidArgumentError("grid geometry needs L > 0 and at least one point");
}

double periodic_distance(double x, double x2, double length) {
  if (!(length > 0.0)) throw InvalidArgumentError("periodic_distance: L must be positive");
  const double d = x - x2;
  return std::min({std::abs(d - length), std::abs(d), std::abs(d + length)});
}

double triangular_shape(double s) { return s <= 2.0 ? 1.0 - 0.5 * s : 0.0; }

double gaspari_cohn_shape(double s) {
  if (s <= 1.0) {
    const double s2 = s * s;
    return 1.0 - 5.0 / 3.0 * s2 + 5.0 / 8.0 * s2 * s + 0.5 * s2 * s2 - 0.25 * s2 * s2 * s;
  }
  if (s < 2.0) {
    const double s2 = s * s;
    const double s3 = s2 * s;
    return -2.0 / (3.0 * s) + 4.0 - 5.0 * s + 5.0 / 3.0 * s2 + 5.0 / 8.0 * s3 - 0.5 * s2 * s2 + s2 * s3 / 12.0;
  }
  return 0.0;
}

double kernel_triangular(double x, double x2, double r, double length) {
  return kernel_from_shape(triangular_shape, x, x2, r, length);
}

double kernel_gaspari_cohn(double x, double x2, double r, double length) {
  return kernel_from_shape(gaspari_cohn_shape, x, x2, r, length);
}

double kernel_value(KernelType kernel, double x, double x2, double r, double length) {
  return kernel == KernelType::Triangular ? kernel_triangular(x, x2, r, length)
                                          : kernel_gaspari_cohn(x, x2, r, length);
}

Vector localized_R_inverse(double x, const ObservationModel& om, const LocalizationConfig& cfg,
                           const GridGeometry& grid) {
  om.validate();
  grid.validate();
  if (!om.has_locations()) throw InvalidArgumentError("localized_R_inverse: observation locations are missing");
  const double r = physical_radius(cfg.r_loc_R, cfg, grid);
  Vector out(om.obs_dim());
  for (Index k = 0; k < om.obs_dim(); ++k)
    out[k] = kernel_value(cfg.kernel, x, om.obs_locations[static_cast<std::size_t>(k)], r, grid.length) / om.r_diag[k];
  return out;
}

LocalizedAnalysis letkf_analysis(const Ensemble& forecast, const Vector& obs, const ObservationModel& om,
                                 const LocalizationConfig& cfg, const GridGeometry& grid) {
  check_grid_state(forecast, grid);
  if (forecast.size() < 2) throw DegenerateEnsembleError("letkf_analysis: need at least two members");
  if (obs.size() != om.obs_dim()) throw DimensionError("letkf_analysis: observation length");
  const Matrix y = om.observe(forecast);
  const Matrix& z = forecast.states();

  LocalizedAnalysis out;
  out.transforms.reserve(static_cast<std::size_t>(grid.n_grid));
  Matrix analysis(z.rows(), z.cols());
  for (Index j = 0; j < grid.n_grid; ++j) {
    const Vector r_inv = localized_R_inverse(grid.position(j), om, cfg, grid);
    EsrfTransform tr = esrf_transform(y, obs, r_inv);
    analysis.row(j) = z.row(j) * tr.s.matrix();
    out.transforms.push_back(tr.s.matrix());
  }
  out.result.analysis = Ensemble(std::move(analysis));
  out.result.diagnostics["ess"] = effective_sample_size(
      weights_from_log_likelihood(gaussian_log_likelihood(y, obs, om.r_diag.cwiseInverse())));
  return out;
}

LocalizedAnalysis localized_etpf_analysis(const Ensemble& forecast, const Vector& obs, const ObservationModel& om,
                                          const LocalizationConfig& cfg, const GridGeometry& grid,
                                          const LocalizedEtpfOptions& opts, RngStream& rng) {
  check_grid_state(forecast, grid);
  const Index m = forecast.size();
  if (m < 2) throw DegenerateEnsembleError("localized_etpf_analysis: need at least two members");
  if (obs.size() != om.obs_dim()) throw DimensionError("localized_etpf_analysis: observation length");
  if (opts.rejuvenation < 0.0) throw InvalidArgumentError("localized_etpf_analysis: negative rejuvenation");
  const Matrix y = om.observe(forecast);
  const Matrix& z = forecast.states();
  const Index n = grid.n_grid;
  const double dx = grid.spacing();
  const double r_cost = physical_radius(cfg.r_loc_c, cfg, grid);
  const WeightVector uniform = WeightVector::uniform(m);

  LocalizedAnalysis out;
  if (opts.keep_transforms) out.transforms.reserve(static_cast<std::size_t>(n));
  Matrix analysis(z.rows(), z.cols());
  double ess_sum = 0.0;
  Matrix cost(m, m);
  for (Index j = 0; j < n; ++j) {
    const double xj = grid.position(j);
    const Vector r_inv = localized_R_inverse(xj, om, cfg, grid);
    const Vector log_lik = gaussian_log_likelihood(y, obs, r_inv);

    Matrix s;
    bool identity = (log_lik.array() == log_lik[0]).all();
    std::optional<WeightVector> w;
    if (!identity) {
      try {
        w = weights_from_log_likelihood(log_lik);
      } catch (const WeightCollapseError&) {
        identity = true;
        ++out.fallback_count;
      }
    }
    if (identity) {
      s = Matrix::Identity(m, m);
      ess_sum += static_cast<double>(m);
    } else {
      cost.setZero();
      for (Index k = 0; k < n; ++k) {
        const double kw = kernel_value(cfg.kernel, xj, grid.position(k), r_cost, grid.length);
        if (kw <= 0.0) continue;
        const auto row = z.row(k);
        for (Index b = 0; b < m; ++b)
          for (Index a = 0; a < m; ++a) {
            const double d = row[a] - row[b];
            cost(a, b) += kw * d * d * dx;
          }
      }
      const OptimalCoupling opt = solve_optimal_coupling(CostMatrix(cost), *w, uniform);
      s = coupling_to_transform(opt.coupling).matrix();
      ess_sum += effective_sample_size(*w);
    }
    analysis.row(j) = z.row(j) * s;
    if (opts.keep_transforms) out.transforms.push_back(std::move(s));
  }
  Ensemble result(std::move(analysis));
  if (opts.rejuvenation > 0.0)
    result = add_gaussian_perturbations(result, ensemble_covariance(forecast), opts.rejuvenation, rng);
  out.result.analysis = std::move(result);
  out.result.diagnostics["ess"] = ess_sum / static_cast<double>(n);
  out.result.diagnostics["fallbacks"] = static_cast<double>(out.fallback_count);
  return out;
}

}  // namespace letf
