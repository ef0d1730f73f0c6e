#include "letf/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace letf {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Matrix pair_costs(const std::vector<std::pair<Vector, Vector>>& support) {
  const Index n = static_cast<Index>(support.size());
  Matrix c(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index k = 0; k < n; ++k)
      c(i, k) = (support[static_cast<std::size_t>(i)].first - support[static_cast<std::size_t>(k)].second).squaredNorm();
  return c;
}

double permutation_cost(const Matrix& c, const std::vector<Index>& sigma) {
  double s = 0.0;
  for (std::size_t i = 0; i < sigma.size(); ++i) s += c(static_cast<Index>(i), sigma[i]);
  return s;
}

// Bellman-Ford on edges i -> k weighted c_ik - c_ii. A negative cycle is a
// re-pairing that lowers the total cost.
bool negative_cycle(const Matrix& c, double tol, std::vector<Index>& sigma, double& margin) {
  const Index n = c.rows();
  const double slack = 1e-13 * std::max(1.0, c.cwiseAbs().maxCoeff());
  std::vector<double> dist(static_cast<std::size_t>(n), 0.0);
  std::vector<Index> pred(static_cast<std::size_t>(n), -1);
  Index touched = -1;
  for (Index pass = 0; pass < n; ++pass) {
    touched = -1;
    for (Index i = 0; i < n; ++i) {
      for (Index k = 0; k < n; ++k) {
        if (i == k) continue;
        const double cand = dist[static_cast<std::size_t>(i)] + c(i, k) - c(i, i);
        if (cand < dist[static_cast<std::size_t>(k)] - slack) {
          dist[static_cast<std::size_t>(k)] = cand;
          pred[static_cast<std::size_t>(k)] = i;
          touched = k;
        }
      }
    }
    if (touched < 0) return false;
  }
  // Walk back n steps to land on the cycle, then collect it.
  Index v = touched;
  for (Index s = 0; s < n; ++s) v = pred[static_cast<std::size_t>(v)];
  std::vector<Index> cycle{v};
  for (Index u = pred[static_cast<std::size_t>(v)]; u != v; u = pred[static_cast<std::size_t>(u)]) cycle.push_back(u);
  std::reverse(cycle.begin(), cycle.end());  // now follows edge direction
  sigma.resize(static_cast<std::size_t>(n));
  std::iota(sigma.begin(), sigma.end(), Index{0});
  double weight = 0.0;
  for (std::size_t t = 0; t < cycle.size(); ++t) {
    const Index from = cycle[t];
    const Index to = cycle[(t + 1) % cycle.size()];
    sigma[static_cast<std::size_t>(from)] = to;
    weight += c(from, to) - c(from, from);
  }
  margin = -weight;
  return margin > tol;
}

// Numerically stable log(sum(exp(x))) over finite entries; -inf if none.
template <class Getter>
double log_sum_exp(Index n, Getter x) {
  double mx = kNegInf;
  for (Index k = 0; k < n; ++k) mx = std::max(mx, x(k));
  if (mx == kNegInf) return kNegInf;
  double s = 0.0;
  for (Index k = 0; k < n; ++k) {
    const double v = x(k);
    if (v != kNegInf) s += std::exp(v - mx);
  }
  return mx + std::log(s);
}

}  // namespace

CostMatrix::CostMatrix(Matrix c) : c_(std::move(c)) {
  if (c_.size() == 0) throw InvalidArgumentError("cost matrix is empty");
  if (!c_.allFinite() || (c_.array() < 0.0).any())
    throw InvalidArgumentError("cost matrix entries must be finite and nonnegative");
}

CostMatrix squared_distance_cost(const Ensemble& ens) {
  const Index m = ens.size();
  const Matrix& z = ens.states();
  const Vector sq = z.colwise().squaredNorm().transpose();
  Matrix c = (-2.0 * z.transpose() * z).colwise() + sq;
  c.rowwise() += sq.transpose();
  for (Index j = 0; j < m; ++j) {
    c(j, j) = 0.0;
    for (Index i = 0; i < j; ++i) {
      // recompute exactly; the Gram form can lose digits for close members
      const double d = (z.col(i) - z.col(j)).squaredNorm();
      c(i, j) = d;
      c(j, i) = d;
    }
  }
  return CostMatrix(std::move(c));
}

void CouplingMatrix::validate(double tol) const {
  if (t.rows() != row_marginal.size() || t.cols() != col_marginal.size())
    throw DimensionError("coupling shape does not match its marginals");
  if ((t.array() < -tol).any()) throw InvalidArgumentError("coupling has negative entries");
  const double row_err = (t.rowwise().sum() - row_marginal.values()).cwiseAbs().maxCoeff();
  const double col_err = (t.colwise().sum().transpose() - col_marginal.values()).cwiseAbs().maxCoeff();
  if (row_err > tol || col_err > tol) {
    std::ostringstream os;
    os << "coupling marginals off by " << std::max(row_err, col_err);
    throw InvalidArgumentError(os.str());
  }
}

OptimalCoupling solve_optimal_coupling(const CostMatrix& cost, const WeightVector& rows, const WeightVector& cols) {
  if (cost.rows() != rows.size() || cost.cols() != cols.size())
    throw DimensionError("solve_optimal_coupling: cost shape does not match marginals");
  const Matrix& c = cost.matrix();
  const auto fn = [&c](Index i, Index j) { return c(i, j); };
  const TransportSolution sol = solve_transport(rows.values(), cols.values(), fn, c.maxCoeff());

  OptimalCoupling out;
  out.coupling.t = Matrix::Zero(rows.size(), cols.size());
  for (const auto& e : sol.support) out.coupling.t(e.row, e.col) += e.mass;
  out.coupling.row_marginal = rows;
  out.coupling.col_marginal = cols;
  out.row_duals = sol.row_duals;
  out.col_duals = sol.col_duals;
  out.objective = sol.objective;
  out.support_size = static_cast<Index>(sol.support.size());
  return out;
}

TransformMatrix coupling_to_transform(const CouplingMatrix& coupling, double tol) {
  const Index m = coupling.t.cols();
  const double target = 1.0 / static_cast<double>(m);
  const double dev = (coupling.col_marginal.values().array() - target).abs().maxCoeff();
  if (dev > tol) throw InvalidArgumentError("coupling_to_transform: column marginal is not uniform");
  Matrix s = static_cast<double>(m) * coupling.t;
  s = s.cwiseMax(0.0);
  return TransformMatrix(std::move(s));
}

CyclicalMonotonicityReport check_cyclical_monotonicity(const std::vector<std::pair<Vector, Vector>>& support,
                                                       const CyclicalMonotonicityOptions& opts) {
  CyclicalMonotonicityReport report;
  const Index n = static_cast<Index>(support.size());
  report.permutation.resize(static_cast<std::size_t>(n));
  std::iota(report.permutation.begin(), report.permutation.end(), Index{0});
  if (n < 2) return report;

  const Matrix c = pair_costs(support);
  const double base = c.trace();
  std::vector<Index> sigma(static_cast<std::size_t>(n));
  std::iota(sigma.begin(), sigma.end(), Index{0});

  auto consider = [&](const std::vector<Index>& perm, double margin) {
    if (margin > report.worst_margin) {
      report.worst_margin = margin;
      report.permutation = perm;
    }
  };

  if (n <= opts.exhaustive_limit) {
    report.exhaustive = true;
    while (std::next_permutation(sigma.begin(), sigma.end())) consider(sigma, base - permutation_cost(c, sigma));
  } else {
    std::vector<Index> cyc;
    double margin = 0.0;
    if (negative_cycle(c, opts.tolerance, cyc, margin)) consider(cyc, margin);
    RngStream rng(opts.seed, static_cast<std::uint64_t>(n));
    for (Index r = 0; r < opts.random_permutations; ++r) {
      std::shuffle(sigma.begin(), sigma.end(), rng.engine());
      consider(sigma, base - permutation_cost(c, sigma));
    }
  }
  report.violated = report.worst_margin > opts.tolerance;
  return report;
}

SinkhornResult sinkhorn_coupling(const CostMatrix& cost, const WeightVector& rows, const WeightVector& cols,
                                 const SinkhornOptions& opts) {
  if (!(opts.reg > 0.0)) throw InvalidArgumentError("sinkhorn: regularization must be positive");
  if (cost.rows() != rows.size() || cost.cols() != cols.size())
    throw DimensionError("sinkhorn: cost shape does not match marginals");
  const Matrix& c = cost.matrix();
  const Index nr = c.rows();
  const Index nc = c.cols();
  const Vector log_r = rows.values().array().log();
  const Vector log_c = cols.values().array().log();
  Vector f = Vector::Zero(nr);
  Vector g = Vector::Zero(nc);

  auto update = [&](double reg) {
    for (Index i = 0; i < nr; ++i) {
      if (log_r[i] == kNegInf) {
        f[i] = kNegInf;
        continue;
      }
      f[i] = reg * log_r[i] - reg * log_sum_exp(nc, [&](Index j) { return (g[j] - c(i, j)) / reg; });
    }
    for (Index j = 0; j < nc; ++j) {
      if (log_c[j] == kNegInf) {
        g[j] = kNegInf;
        continue;
      }
      g[j] = reg * log_c[j] - reg * log_sum_exp(nr, [&](Index i) { return (f[i] - c(i, j)) / reg; });
    }
  };
  auto plan = [&](double reg) {
    Matrix t(nr, nc);
    for (Index j = 0; j < nc; ++j)
      for (Index i = 0; i < nr; ++i) {
        const double e = f[i] + g[j] - c(i, j);
        t(i, j) = (f[i] == kNegInf || g[j] == kNegInf) ? 0.0 : std::exp(e / reg);
      }
    return t;
  };
  auto row_error = [&](const Matrix& t) { return (t.rowwise().sum() - rows.values()).cwiseAbs().sum(); };

  // Geometric schedule of regularizations ending at opts.reg.
  std::vector<double> schedule;
  if (opts.epsilon_scaling) {
    double r = std::max(opts.reg, c.maxCoeff());
    while (r > opts.reg * 2.0) {
      schedule.push_back(r);
      r *= 0.5;
    }
  }
  schedule.push_back(opts.reg);

  SinkhornResult out;
  int total = 0;
  for (std::size_t stage = 0; stage + 1 < schedule.size(); ++stage) {
    for (int it = 0; it < 50; ++it) update(schedule[stage]);
    total += 50;
  }
  double err = std::numeric_limits<double>::infinity();
  int it = 0;
  Matrix t;
  while (it < opts.max_iters) {
    update(opts.reg);
    ++it;
    t = plan(opts.reg);
    err = row_error(t);
    if (err < opts.tol) break;
  }
  if (!(err < opts.tol)) {
    std::ostringstream os;
    os << "sinkhorn: no convergence after " << opts.max_iters << " iterations (marginal error " << err << ")";
    throw NonConvergenceError(os.str(), err);
  }
  out.coupling.t = std::move(t);
  out.coupling.row_marginal = rows;
  out.coupling.col_marginal = cols;
  out.objective = out.coupling.t.cwiseProduct(c).sum();
  out.marginal_error = err;
  out.iterations = total + it;
  return out;
}

Matrix gaussian_optimal_map(const Matrix& p_forecast, const Matrix& p_analysis) {
  auto require_spd = [](const Matrix& p, const char* name) {
    if (p.rows() != p.cols() || p.rows() == 0) throw DimensionError(std::string(name) + " must be square");
    if (!p.allFinite()) throw DecompositionError(std::string(name) + " has non-finite entries");
    if ((p - p.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, p.cwiseAbs().maxCoeff()))
      throw DecompositionError(std::string(name) + " is not symmetric");
    Eigen::LLT<Matrix> llt(p);
    if (llt.info() != Eigen::Success) throw DecompositionError(std::string(name) + " is not positive definite");
  };
  require_spd(p_forecast, "P_f");
  require_spd(p_analysis, "P_a");
  if (p_forecast.rows() != p_analysis.rows()) throw DimensionError("gaussian_optimal_map: dimensions differ");
  const Matrix root_a = symmetric_sqrt(p_analysis);
  const Matrix middle = root_a * p_forecast * root_a;
  Matrix a = root_a * symmetric_inverse_sqrt(middle) * root_a;
  return 0.5 * (a + a.transpose());
}

}  // namespace letf
