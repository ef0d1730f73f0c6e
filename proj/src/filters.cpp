#include "letf/filters.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <limits>
#include <sstream>

namespace letf {

namespace {

// Square root of a symmetric positive semidefinite matrix with negative
// roundoff eigenvalues clamped to zero.
Matrix psd_sqrt(const Matrix& p) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (p + p.transpose()));
  if (eig.info() != Eigen::Success) throw DecompositionError("psd_sqrt: eigendecomposition failed");
  const Vector root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

void check_obs(const Vector& obs, const ObservationModel& om) {
  om.validate();
  if (obs.size() != om.obs_dim()) throw DimensionError("observation vector length differs from the observation model");
}

void record_ess(AnalysisResult& out, const WeightVector& w) {
  const double ess = effective_sample_size(w);
  out.diagnostics["ess"] = ess;
  out.diagnostics["ess_warning"] = ess < 2.0 ? 1.0 : 0.0;
}

}  // namespace

WeightVector weights_from_log_likelihood(const Vector& log_lik) {
  if (log_lik.size() < 1) throw InvalidArgumentError("no log-likelihoods");
  double mx = -std::numeric_limits<double>::infinity();
  for (Index i = 0; i < log_lik.size(); ++i)
    if (std::isfinite(log_lik[i])) mx = std::max(mx, log_lik[i]);
  if (!std::isfinite(mx)) throw WeightCollapseError("importance weights collapsed: no finite likelihood");
  Vector w(log_lik.size());
  for (Index i = 0; i < log_lik.size(); ++i) w[i] = std::isfinite(log_lik[i]) ? std::exp(log_lik[i] - mx) : 0.0;
  const double total = w.sum();
  if (!(total > 0.0) || !std::isfinite(total)) throw WeightCollapseError("importance weights collapsed");
  return WeightVector(w / total);
}

Vector gaussian_log_likelihood(const Matrix& obs_ens, const Vector& obs, const Vector& r_inv) {
  if (obs_ens.rows() != obs.size() || r_inv.size() != obs.size())
    throw DimensionError("gaussian_log_likelihood: size mismatch");
  const Matrix innov = obs_ens.colwise() - obs;
  return -0.5 * (r_inv.asDiagonal() * innov.cwiseAbs2()).colwise().sum().transpose();
}

WeightVector importance_weights(const Ensemble& forecast, const Vector& obs, const ObservationModel& om) {
  check_obs(obs, om);
  const Matrix y = om.observe(forecast);
  return weights_from_log_likelihood(gaussian_log_likelihood(y, obs, om.r_diag.cwiseInverse()));
}

double effective_sample_size(const WeightVector& w) { return 1.0 / w.values().squaredNorm(); }

CouplingMatrix resampling_coupling(const WeightVector& w, double epsilon) {
  if (!(epsilon >= 0.0)) throw InvalidArgumentError("resampling_coupling: epsilon must be nonnegative");
  if (epsilon * w.values().maxCoeff() > 1.0 + 1e-12) {
    std::ostringstream os;
    os << "resampling_coupling: epsilon " << epsilon << " violates epsilon * max w <= 1";
    throw InvalidArgumentError(os.str());
  }
  const Index m = w.size();
  const double inv_m = 1.0 / static_cast<double>(m);
  CouplingMatrix out;
  out.t.resize(m, m);
  for (Index j = 0; j < m; ++j) {
    const double keep = epsilon * w[j];
    for (Index i = 0; i < m; ++i) out.t(i, j) = inv_m * ((i == j ? keep : 0.0) + (1.0 - keep) * w[i]);
  }
  out.row_marginal = w;
  out.col_marginal = WeightVector::uniform(m);
  return out;
}

TransformMatrix realize_resampling(const CouplingMatrix& coupling, RngStream& rng) {
  const Index m = coupling.t.rows();
  const Index n = coupling.t.cols();
  Matrix s = Matrix::Zero(m, n);
  for (Index j = 0; j < n; ++j) {
    const auto col = coupling.t.col(j);
    const Index pick = rng.categorical(std::span<const double>(col.data(), static_cast<std::size_t>(m)));
    s(pick, j) = 1.0;
  }
  return TransformMatrix(std::move(s));
}

std::vector<Index> residual_resampling_indices(const WeightVector& w, Index m, RngStream& rng) {
  if (m < 1) throw InvalidArgumentError("residual_resampling: need at least one output member");
  const Index n = w.size();
  std::vector<Index> picks;
  picks.reserve(static_cast<std::size_t>(m));
  Vector residual(n);
  for (Index i = 0; i < n; ++i) {
    const double scaled = static_cast<double>(m) * w[i];
    Index copies = static_cast<Index>(std::floor(scaled + 1e-12));
    copies = std::min(copies, m - static_cast<Index>(picks.size()));
    picks.insert(picks.end(), static_cast<std::size_t>(copies), i);
    residual[i] = std::max(scaled - static_cast<double>(copies), 0.0);
  }
  if (static_cast<Index>(picks.size()) < m) {
    for (Index i = 0; i < n; ++i)
      if (residual[i] < 1e-12) residual[i] = 0.0;
    if (!(residual.sum() > 0.0)) residual = w.values();
    std::vector<double> cdf(static_cast<std::size_t>(n));
    std::partial_sum(residual.begin(), residual.end(), cdf.begin());
    while (static_cast<Index>(picks.size()) < m) {
      const double u = rng.uniform() * cdf.back();
      Index i = static_cast<Index>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
      if (i == n) {
        i = n - 1;
        while (residual[i] == 0.0) --i;
      }
      picks.push_back(i);
    }
  }
  return picks;
}

TransformMatrix residual_resampling(const WeightVector& w, Index m, RngStream& rng) {
  const std::vector<Index> picks = residual_resampling_indices(w, m, rng);
  Matrix s = Matrix::Zero(w.size(), m);
  for (Index j = 0; j < m; ++j) s(picks[static_cast<std::size_t>(j)], j) = 1.0;
  return TransformMatrix(std::move(s));
}

Ensemble apply_inflation(const Ensemble& ens, double alpha) {
  if (!(alpha > 0.0)) throw InvalidArgumentError("apply_inflation: alpha must be positive");
  const Vector mean = ensemble_mean(ens);
  Matrix z = ens.states();
  z = (alpha * (z.colwise() - mean)).colwise() + mean;
  return Ensemble(std::move(z));
}

Ensemble add_gaussian_perturbations(const Ensemble& ens, const Matrix& cov, double h, RngStream& rng) {
  if (h == 0.0) return ens;
  if (cov.rows() != ens.dim() || cov.cols() != ens.dim()) throw DimensionError("perturbation covariance shape");
  const Matrix root = h * psd_sqrt(cov);
  Matrix noise = rng.normal_matrix(ens.dim(), ens.size());
  return Ensemble(ens.states() + root * noise);
}

std::vector<Index> resampling_indices(const WeightVector& w, double epsilon, RngStream& rng) {
  if (!(epsilon >= 0.0)) throw InvalidArgumentError("resampling_indices: epsilon must be nonnegative");
  if (epsilon * w.values().maxCoeff() > 1.0 + 1e-12)
    throw InvalidArgumentError("resampling_indices: epsilon violates epsilon * max w <= 1");
  const Index m = w.size();
  std::vector<double> cdf(static_cast<std::size_t>(m));
  std::partial_sum(w.values().begin(), w.values().end(), cdf.begin());
  std::vector<Index> picks(static_cast<std::size_t>(m));
  for (Index j = 0; j < m; ++j) {
    // column j of M T: keep j with probability epsilon w_j, otherwise draw from w
    if (epsilon > 0.0 && rng.uniform() < epsilon * w[j]) {
      picks[static_cast<std::size_t>(j)] = j;
      continue;
    }
    const double u = rng.uniform() * cdf.back();
    Index i = static_cast<Index>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    if (i == m) {
      i = m - 1;
      while (w[i] == 0.0) --i;
    }
    picks[static_cast<std::size_t>(j)] = i;
  }
  return picks;
}

AnalysisResult sir_analysis(const Ensemble& forecast, const Vector& obs, const ObservationModel& om,
                            const SirOptions& opts, RngStream& rng) {
  if (opts.rejuvenation < 0.0) throw InvalidArgumentError("sir_analysis: rejuvenation must be nonnegative");
  AnalysisResult out;
  const WeightVector w = importance_weights(forecast, obs, om);
  const Index m = forecast.size();
  const std::vector<Index> picks = resampling_indices(w, opts.epsilon, rng);
  Matrix z(forecast.dim(), m);
  for (Index j = 0; j < m; ++j) z.col(j) = forecast.member(picks[static_cast<std::size_t>(j)]);
  Ensemble analysis(std::move(z));
  if (opts.rejuvenation > 0.0 && m >= 2)
    analysis = add_gaussian_perturbations(analysis, ensemble_covariance(forecast), opts.rejuvenation, rng);
  out.analysis = std::move(analysis);
  if (opts.keep_transform) {
    Matrix s = Matrix::Zero(m, m);
    for (Index j = 0; j < m; ++j) s(picks[static_cast<std::size_t>(j)], j) = 1.0;
    out.transform = TransformMatrix(std::move(s));
  }
  out.weights = w;
  record_ess(out, w);
  return out;
}

AnalysisResult enkf_perturbed_analysis(const Ensemble& forecast, const Vector& obs, const ObservationModel& om,
                                       RngStream& rng) {
  check_obs(obs, om);
  const Index m = forecast.size();
  if (m < 2) throw DegenerateEnsembleError("enkf_perturbed_analysis: need at least two members");
  const Matrix y = om.observe(forecast);
  const Matrix az = ensemble_deviations(forecast);
  const Matrix ay = column_deviations(y);
  const double scale = 1.0 / static_cast<double>(m - 1);
  Matrix innov_cov = scale * ay * ay.transpose();
  innov_cov.diagonal() += om.r_diag;
  const Eigen::LDLT<Matrix> solver(innov_cov);
  if (solver.info() != Eigen::Success) throw DecompositionError("enkf: P_yy + R is singular");

  // Perturbed innovations y_j + xi_j - y_obs, xi_j ~ N(0, R).
  Matrix innovations = y.colwise() - obs;
  const Vector r_sd = om.r_diag.cwiseSqrt();
  innovations += r_sd.asDiagonal() * rng.normal_matrix(om.obs_dim(), m);

  const Matrix solved = solver.solve(innovations);
  const Matrix gain = scale * az * ay.transpose() * solver.solve(Matrix::Identity(om.obs_dim(), om.obs_dim()));

  AnalysisResult out;
  out.analysis = Ensemble(forecast.states() - gain * innovations);
  Matrix s = Matrix::Identity(m, m) - scale * ay.transpose() * solved;
  out.transform = TransformMatrix(std::move(s));
  out.diagnostics["ess"] = effective_sample_size(importance_weights(forecast, obs, om));
  return out;
}

EsrfTransform esrf_transform(const Matrix& obs_ens, const Vector& obs, const Vector& r_inv) {
  const Index m = obs_ens.cols();
  if (m < 2) throw DegenerateEnsembleError("esrf_transform: need at least two members");
  if (r_inv.size() != obs.size() || obs_ens.rows() != obs.size()) throw DimensionError("esrf_transform: size mismatch");
  const double scale = 1.0 / static_cast<double>(m - 1);
  const Matrix ay = column_deviations(obs_ens);
  const Vector ybar = obs_ens.rowwise().mean();
  Matrix g = scale * ay.transpose() * r_inv.asDiagonal() * ay;
  g.diagonal().array() += 1.0;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (g + g.transpose()));
  if (eig.info() != Eigen::Success || eig.eigenvalues().minCoeff() <= 0.0)
    throw DecompositionError("esrf_transform: I + A^T R^-1 A / (M-1) is not positive definite");
  const Matrix& v = eig.eigenvectors();
  const Vector lam = eig.eigenvalues();
  EsrfTransform out;
  out.d = v * lam.cwiseSqrt().cwiseInverse().asDiagonal() * v.transpose();
  out.d = 0.5 * (out.d + out.d.transpose());
  out.q = v * lam.cwiseInverse().asDiagonal() * v.transpose();
  out.q = 0.5 * (out.q + out.q.transpose());
  const Vector innov = obs - ybar;
  out.mean_weights = scale * out.q * (ay.transpose() * r_inv.cwiseProduct(innov));
  Matrix s = out.d;
  s.colwise() += out.mean_weights;
  out.s = TransformMatrix(std::move(s));
  return out;
}

AnalysisResult esrf_analysis(const Ensemble& forecast, const Vector& obs, const ObservationModel& om) {
  check_obs(obs, om);
  if (forecast.size() < 2) throw DegenerateEnsembleError("esrf_analysis: need at least two members");
  const Matrix y = om.observe(forecast);
  EsrfTransform tr = esrf_transform(y, obs, om.r_diag.cwiseInverse());
  AnalysisResult out;
  out.analysis = tr.s.apply(forecast);
  out.transform = std::move(tr.s);
  out.diagnostics["ess"] = effective_sample_size(weights_from_log_likelihood(
      gaussian_log_likelihood(y, obs, om.r_diag.cwiseInverse())));
  return out;
}

namespace {

struct EtpfCore {
  WeightVector w;
  TransformMatrix s;
  double objective;
};

EtpfCore etpf_transform(const Ensemble& forecast, const Vector& obs, const ObservationModel& om) {
  const Index m = forecast.size();
  if (m < 2) throw DegenerateEnsembleError("etpf: need at least two members");
  WeightVector w = importance_weights(forecast, obs, om);
  const OptimalCoupling opt = solve_optimal_coupling(squared_distance_cost(forecast), w, WeightVector::uniform(m));
  return {std::move(w), coupling_to_transform(opt.coupling), opt.objective};
}

}  // namespace

AnalysisResult etpf_analysis(const Ensemble& forecast, const Vector& obs, const ObservationModel& om,
                             const EtpfOptions& opts, RngStream& rng) {
  if (opts.rejuvenation < 0.0) throw InvalidArgumentError("etpf_analysis: rejuvenation must be nonnegative");
  EtpfCore core = etpf_transform(forecast, obs, om);
  Ensemble analysis = core.s.apply(forecast);
  if (opts.rejuvenation > 0.0) {
    if (opts.covariance == RejuvenationCovariance::Forecast) {
      analysis = add_gaussian_perturbations(analysis, ensemble_covariance(forecast), opts.rejuvenation, rng);
    } else {
      const Matrix& z = forecast.states();
      for (Index j = 0; j < analysis.size(); ++j) {
        const Vector mean_j = analysis.member(j);
        const Matrix dev = z.colwise() - mean_j;
        const Matrix pj = dev * core.s.matrix().col(j).asDiagonal() * dev.transpose();
        analysis.member(j) += opts.rejuvenation * psd_sqrt(pj) * rng.normal_vector(forecast.dim());
      }
    }
  }
  AnalysisResult out;
  out.analysis = std::move(analysis);
  out.transform = std::move(core.s);
  out.diagnostics["lp_objective"] = core.objective;
  record_ess(out, core.w);
  out.weights = std::move(core.w);
  return out;
}

AnalysisResult stochastic_etpf_analysis(const Ensemble& forecast, const Vector& obs, const ObservationModel& om,
                                        RngStream& rng) {
  EtpfCore core = etpf_transform(forecast, obs, om);
  const Index m = forecast.size();
  Matrix realized = Matrix::Zero(m, m);
  for (Index j = 0; j < m; ++j) {
    const auto col = core.s.matrix().col(j);
    realized(rng.categorical(std::span<const double>(col.data(), static_cast<std::size_t>(m))), j) = 1.0;
  }
  TransformMatrix s(std::move(realized));
  AnalysisResult out;
  out.analysis = s.apply(forecast);
  out.transform = std::move(s);
  out.diagnostics["lp_objective"] = core.objective;
  record_ess(out, core.w);
  out.weights = std::move(core.w);
  return out;
}

}  // namespace letf
