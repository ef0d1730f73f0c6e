// Discrete Monge-Kantorovich couplings: exact LP, entropic approximation,
// cyclical-monotonicity certification and the Gaussian optimal map.
#pragma once

#include "letf/core.hpp"
#include "letf/network_simplex.hpp"
#include "letf/random.hpp"

#include <utility>
#include <vector>

namespace letf {

/// Nonnegative, finite cost matrix (rows: source members, cols: target members).
class CostMatrix {
 public:
  CostMatrix() = default;
  explicit CostMatrix(Matrix c);

  Index rows() const { return c_.rows(); }
  Index cols() const { return c_.cols(); }
  const Matrix& matrix() const { return c_; }
  double operator()(Index i, Index j) const { return c_(i, j); }

 private:
  Matrix c_;
};

/// c_ij = ||z_i - z_j||^2 between the members of one ensemble.
CostMatrix squared_distance_cost(const Ensemble& ens);

/// Nonnegative matrix with prescribed row and column marginals.
struct CouplingMatrix {
  Matrix t;
  WeightVector row_marginal;
  WeightVector col_marginal;

  /// Throws InvalidArgumentError when an entry is negative or a marginal is off by more than tol.
  void validate(double tol = 1e-9) const;
};

/// LP optimum with its dual certificate (c_ij >= u_i + v_j, equality on the support).
struct OptimalCoupling {
  CouplingMatrix coupling;
  Vector row_duals;
  Vector col_duals;
  double objective = 0.0;
  Index support_size = 0;
};

/// Exact minimizer of sum_ij t_ij c_ij over couplings of `rows` and `cols`
/// (network simplex). Zero-mass rows or columns stay in the problem.
OptimalCoupling solve_optimal_coupling(const CostMatrix& cost, const WeightVector& rows, const WeightVector& cols);

/// S = M T for a coupling whose column marginal is uniform 1/M.
TransformMatrix coupling_to_transform(const CouplingMatrix& coupling, double tol = 1e-9);

struct CyclicalMonotonicityReport {
  bool violated = false;
  /// Largest cost reduction found by re-pairing (0 when none).
  double worst_margin = 0.0;
  /// Re-pairing sigma that achieves worst_margin (identity when not violated).
  std::vector<Index> permutation;
  bool exhaustive = false;
};

struct CyclicalMonotonicityOptions {
  Index exhaustive_limit = 8;
  Index random_permutations = 2000;
  std::uint64_t seed = 0x5eed;
  /// Reductions smaller than this count as ties, not violations.
  double tolerance = 1e-9;
};

/// Looks for a permutation sigma with sum ||f_i - a_sigma(i)||^2 < sum ||f_i - a_i||^2.
///
/// Supports with up to `exhaustive_limit` pairs are searched exhaustively.
/// Larger supports are searched with a negative-cycle (Bellman-Ford) pass on
/// the re-pairing graph, which decides the question exactly, plus random
/// permutations to refine the reported margin.
CyclicalMonotonicityReport check_cyclical_monotonicity(const std::vector<std::pair<Vector, Vector>>& support,
                                                       const CyclicalMonotonicityOptions& opts = {});

struct SinkhornOptions {
  double reg = 1e-2;
  double tol = 1e-9;
  int max_iters = 100000;
  /// Start with a larger regularization and shrink it geometrically to `reg`.
  bool epsilon_scaling = true;
};

struct SinkhornResult {
  CouplingMatrix coupling;
  double objective = 0.0;
  double marginal_error = 0.0;
  int iterations = 0;
};

/// Entropy-regularized coupling computed with log-domain Sinkhorn iterations.
/// Throws NonConvergenceError (carrying the achieved marginal error) on the
/// iteration limit.
SinkhornResult sinkhorn_coupling(const CostMatrix& cost, const WeightVector& rows, const WeightVector& cols,
                                 const SinkhornOptions& opts = {});

/// Symmetric positive definite A with A P_f A^T = P_a that is optimal for the
/// squared-distance cost between N(., P_f) and N(., P_a).
Matrix gaussian_optimal_map(const Matrix& p_forecast, const Matrix& p_analysis);

}  // namespace letf
