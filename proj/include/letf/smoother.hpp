// Path space sampling of the initial condition given a sequence of
// observations: importance sampling of whole trajectories and random walk
// Metropolis on z^0.
#pragma once

#include "letf/core.hpp"
#include "letf/random.hpp"

#include <functional>
#include <vector>

namespace letf {

using StepMap = std::function<Vector(const Vector&)>;

/// Observation y^n is taken after n applications of `step` (n = 1..N).
struct PathProblem {
  StepMap step;
  ObservationModel om;
  std::vector<Vector> observations;
};

struct WeightedPaths {
  /// trajectory[n] holds the M path states at time n; trajectory[0] is the prior draw.
  std::vector<Ensemble> trajectory;
  Vector log_weights;  ///< accumulated, unnormalized
  WeightVector weights;
  double ess = 0.0;
  /// Set when the ESS falls below 2 with at least two paths.
  bool collapse_warning = false;
};

WeightedPaths path_importance_sampler(const PathProblem& problem, const std::function<Vector(RngStream&)>& prior_sampler,
                                      Index m, RngStream& rng);

/// Weighted mean of the initial states.
Vector posterior_mean_initial(const WeightedPaths& paths);

/// Sum over time of the Gaussian observation log-likelihoods along the path from z0.
double path_log_likelihood(const PathProblem& problem, const Vector& z0);

struct McmcResult {
  Matrix samples;  ///< N_z x n_samples, one column per retained state of the chain
  double acceptance_rate = 0.0;
};

/// Random walk Metropolis on z^0 with proposal z0 + proposal_std * N(0, I).
McmcResult mcmc_path_sampler(const PathProblem& problem, const std::function<double(const Vector&)>& prior_log_density,
                             const Vector& initial, double proposal_std, Index n_samples, RngStream& rng,
                             Index burn_in = 0);

/// Closed form posterior of z^0 for the scalar model z' = a z with prior
/// N(m0, p0) and observations y^n = z^n + N(0, r).
struct ScalarGaussianPosterior {
  double mean = 0.0;
  double variance = 0.0;
};
ScalarGaussianPosterior scalar_linear_gaussian_posterior(double a, double m0, double p0, double r,
                                                         const std::vector<double>& observations);

/// Batch means estimate of the standard error of a chain average.
double batch_means_stderr(const Vector& chain, Index batches = 50);

}  // namespace letf
