#include "letf/smoother.hpp"

#include "letf/filters.hpp"

#include <cmath>
#include <limits>

namespace letf {

namespace {

void check_problem(const PathProblem& problem) {
  if (!problem.step) throw InvalidArgumentError("path sampler: missing step map");
  problem.om.validate();
  for (const Vector& y : problem.observations)
    if (y.size() != problem.om.obs_dim()) throw DimensionError("path sampler: observation length");
}

double obs_log_likelihood(const ObservationModel& om, const Vector& z, const Vector& y) {
  const Vector d = om.observe(z) - y;
  return -0.5 * (d.array().square() / om.r_diag.array()).sum();
}

}  // namespace

WeightedPaths path_importance_sampler(const PathProblem& problem, const std::function<Vector(RngStream&)>& prior_sampler,
                                      Index m, RngStream& rng) {
  if (m < 1) throw InvalidArgumentError("path_importance_sampler: need at least one path");
  if (!prior_sampler) throw InvalidArgumentError("path_importance_sampler: missing prior sampler");
  check_problem(problem);

  std::vector<Vector> members;
  members.reserve(static_cast<std::size_t>(m));
  for (Index i = 0; i < m; ++i) members.push_back(prior_sampler(rng));
  WeightedPaths out;
  out.trajectory.push_back(Ensemble::from_members(members));
  out.log_weights = Vector::Zero(m);
  const Vector r_inv = problem.om.r_diag.cwiseInverse();

  for (const Vector& y : problem.observations) {
    Matrix next(out.trajectory.back().dim(), m);
    const Matrix& prev = out.trajectory.back().states();
    for (Index i = 0; i < m; ++i) next.col(i) = problem.step(prev.col(i));
    Ensemble ens(std::move(next));
    out.log_weights += gaussian_log_likelihood(problem.om.observe(ens), y, r_inv);
    out.trajectory.push_back(std::move(ens));
  }
  out.weights = weights_from_log_likelihood(out.log_weights);
  out.ess = effective_sample_size(out.weights);
  out.collapse_warning = m >= 2 && out.ess < 2.0;
  return out;
}

Vector posterior_mean_initial(const WeightedPaths& paths) {
  if (paths.trajectory.empty()) throw InvalidArgumentError("posterior_mean_initial: no paths");
  return paths.trajectory.front().states() * paths.weights.values();
}

double path_log_likelihood(const PathProblem& problem, const Vector& z0) {
  Vector z = z0;
  double ll = 0.0;
  for (const Vector& y : problem.observations) {
    z = problem.step(z);
    ll += obs_log_likelihood(problem.om, z, y);
  }
  return ll;
}

McmcResult mcmc_path_sampler(const PathProblem& problem, const std::function<double(const Vector&)>& prior_log_density,
                             const Vector& initial, double proposal_std, Index n_samples, RngStream& rng,
                             Index burn_in) {
  check_problem(problem);
  if (!prior_log_density) throw InvalidArgumentError("mcmc_path_sampler: missing prior density");
  if (!(proposal_std >= 0.0)) throw InvalidArgumentError("mcmc_path_sampler: proposal std must be nonnegative");
  if (n_samples < 1 || burn_in < 0) throw InvalidArgumentError("mcmc_path_sampler: invalid sample counts");

  const auto log_target = [&](const Vector& z) { return prior_log_density(z) + path_log_likelihood(problem, z); };
  Vector current = initial;
  double current_lp = log_target(current);
  if (std::isnan(current_lp) || current_lp == -std::numeric_limits<double>::infinity())
    throw InvalidArgumentError("mcmc_path_sampler: initial state has zero target density");

  McmcResult out;
  out.samples.resize(initial.size(), n_samples);
  Index accepted = 0;
  for (Index k = 0; k < burn_in + n_samples; ++k) {
    const Vector proposal = current + proposal_std * rng.normal_vector(current.size());
    const double lp = log_target(proposal);
    const double log_alpha = lp - current_lp;
    if (log_alpha >= 0.0 || std::log(rng.uniform()) < log_alpha) {
      current = proposal;
      current_lp = lp;
      if (k >= burn_in) ++accepted;
    }
    if (k >= burn_in) out.samples.col(k - burn_in) = current;
  }
  out.acceptance_rate = static_cast<double>(accepted) / static_cast<double>(n_samples);
  return out;
}

ScalarGaussianPosterior scalar_linear_gaussian_posterior(double a, double m0, double p0, double r,
                                                         const std::vector<double>& observations) {
  if (!(p0 > 0.0) || !(r > 0.0)) throw InvalidArgumentError("scalar posterior: variances must be positive");
  double precision = 1.0 / p0;
  double shift = m0 / p0;
  double an = 1.0;
  for (double y : observations) {
    an *= a;
    precision += an * an / r;
    shift += an * y / r;
  }
  return {shift / precision, 1.0 / precision};
}

double batch_means_stderr(const Vector& chain, Index batches) {
  if (batches < 2) throw InvalidArgumentError("batch_means_stderr: need at least two batches");
  const Index len = chain.size() / batches;
  if (len < 1) throw InvalidArgumentError("batch_means_stderr: chain shorter than the number of batches");
  Vector means(batches);
  for (Index b = 0; b < batches; ++b) means[b] = chain.segment(b * len, len).mean();
  const double mu = means.mean();
  const double var = (means.array() - mu).square().sum() / static_cast<double>(batches - 1);
  return std::sqrt(var / static_cast<double>(batches));
}

}  // namespace letf
