// Global analysis steps of the linear ensemble transform family: importance
// weighting and resampling couplings (SIR), EnKF with perturbed observations,
// the ensemble square root filter and the ensemble transform particle filter.
#pragma once

#include "letf/core.hpp"
#include "letf/random.hpp"
#include "letf/transport.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace letf {

struct AnalysisResult {
  Ensemble analysis;
  std::optional<TransformMatrix> transform;
  std::optional<WeightVector> weights;
  /// Named scalars such as "ess", "lp_objective", "ess_warning".
  std::map<std::string, double> diagnostics;
};

/// Normalizes log-likelihoods with a max shift. Throws WeightCollapseError if
/// no entry is finite.
WeightVector weights_from_log_likelihood(const Vector& log_lik);

/// Gaussian log-likelihoods -1/2 (h(z_i) - y)^T diag(r_inv) (h(z_i) - y) of
/// the columns of an observed ensemble.
Vector gaussian_log_likelihood(const Matrix& obs_ens, const Vector& obs, const Vector& r_inv);

WeightVector importance_weights(const Ensemble& forecast, const Vector& obs, const ObservationModel& om);

/// 1 / sum w_i^2.
double effective_sample_size(const WeightVector& w);

/// t_ij = (eps w_j delta_ij + (1 - eps w_j) w_i) / M; eps = 0 is monomial resampling.
CouplingMatrix resampling_coupling(const WeightVector& w, double epsilon = 0.0);

/// Draws a 0/1 transform: column j selects row i with probability M t_ij.
TransformMatrix realize_resampling(const CouplingMatrix& coupling, RngStream& rng);

/// floor(M w_i) deterministic copies of member i; the remaining columns are
/// multinomial draws from the normalized residual weights.
TransformMatrix residual_resampling(const WeightVector& w, Index m, RngStream& rng);

/// Same draw as residual_resampling, returned as the selected row per column.
std::vector<Index> residual_resampling_indices(const WeightVector& w, Index m, RngStream& rng);

/// z_i -> mean + alpha (z_i - mean).
Ensemble apply_inflation(const Ensemble& ens, double alpha);

/// Adds xi_j ~ N(0, h^2 P) to every member (P symmetric positive semidefinite).
Ensemble add_gaussian_perturbations(const Ensemble& ens, const Matrix& cov, double h, RngStream& rng);

/// Samples one 0/1 transform of resampling_coupling(w, epsilon) without
/// forming the M x M coupling; entry j is the forecast member copied to column j.
std::vector<Index> resampling_indices(const WeightVector& w, double epsilon, RngStream& rng);

struct SirOptions {
  double epsilon = 0.0;
  double rejuvenation = 0.0;
  /// Store the realized 0/1 transform in the result (M x M).
  bool keep_transform = true;
};

AnalysisResult sir_analysis(const Ensemble& forecast, const Vector& obs, const ObservationModel& om,
                            const SirOptions& opts, RngStream& rng);

/// Perturbed-observation EnKF. Also reports the equivalent transform matrix.
AnalysisResult enkf_perturbed_analysis(const Ensemble& forecast, const Vector& obs, const ObservationModel& om,
                                       RngStream& rng);

struct EsrfTransform {
  Matrix d;              ///< symmetric square root D
  Matrix q;              ///< Q = D^2
  Vector mean_weights;   ///< (1/(M-1)) Q A_y^T R^-1 (y - ybar); sums to zero
  TransformMatrix s;     ///< s_ij = mean_weights_i + d_ij
};

/// Transform of the square root filter for a given inverse-variance vector.
/// `r_inv` entries may be zero (observations ignored).
EsrfTransform esrf_transform(const Matrix& obs_ens, const Vector& obs, const Vector& r_inv);

/// Deterministic ensemble square root filter (symmetric square root).
AnalysisResult esrf_analysis(const Ensemble& forecast, const Vector& obs, const ObservationModel& om);

enum class RejuvenationCovariance {
  Forecast,      ///< P_j = P_zz^f for every member
  CouplingLocal  ///< P_j = sum_i s_ij (z_i - zbar_j)(z_i - zbar_j)^T
};

struct EtpfOptions {
  double rejuvenation = 0.0;
  RejuvenationCovariance covariance = RejuvenationCovariance::Forecast;
};

/// ETPF: S = M T* with T* the optimal coupling between the weighted and the
/// uniform forecast measure under squared-distance cost.
AnalysisResult etpf_analysis(const Ensemble& forecast, const Vector& obs, const ObservationModel& om,
                             const EtpfOptions& opts, RngStream& rng);

/// Stochastic ETPF: analysis member j is forecast member i drawn with probability s_ij.
AnalysisResult stochastic_etpf_analysis(const Ensemble& forecast, const Vector& obs, const ObservationModel& om,
                                        RngStream& rng);

}  // namespace letf
