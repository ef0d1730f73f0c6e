#include "letf/random.hpp"
#include "letf/transport.hpp"

#include <doctest.h>

#include <fstream>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace letf;

namespace {

double min_over_permutations(const Matrix& c) {
  std::vector<Index> p(static_cast<std::size_t>(c.rows()));
  std::iota(p.begin(), p.end(), 0);
  double best = INFINITY;
  do {
    double s = 0.0;
    for (Index i = 0; i < c.rows(); ++i) s += c(i, p[static_cast<std::size_t>(i)]);
    best = std::min(best, s);
  } while (std::next_permutation(p.begin(), p.end()));
  return best;
}

WeightVector random_weights(Index m, RngStream& rng) {
  Vector w(m);
  for (Index i = 0; i < m; ++i) w[i] = rng.uniform() + 0.01;
  return WeightVector(w / w.sum());
}

Matrix integer_costs(Index m, RngStream& rng) {
  Matrix c(m, m);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < m; ++j) c(i, j) = std::floor(10.0 * rng.uniform());
  return c;
}

}  // namespace

TEST_CASE("solve_optimal_coupling small examples") {
  SUBCASE("identity coupling for zero diagonal") {
    Matrix c(2, 2);
    c << 0.0, 1.0, 1.0, 0.0;
    const OptimalCoupling opt = solve_optimal_coupling(CostMatrix(c), WeightVector::uniform(2), WeightVector::uniform(2));
    CHECK(opt.coupling.t(0, 0) == doctest::Approx(0.5));
    CHECK(opt.coupling.t(1, 1) == doctest::Approx(0.5));
    CHECK(opt.coupling.t(0, 1) == doctest::Approx(0.0));
    CHECK(opt.objective == doctest::Approx(0.0));
  }
  SUBCASE("constraints force the plan") {
    Vector r(2);
    r << 1.0, 0.0;
    RngStream rng(2);
    const OptimalCoupling opt =
        solve_optimal_coupling(CostMatrix(integer_costs(2, rng)), WeightVector(r), WeightVector::uniform(2));
    CHECK(opt.coupling.t(0, 0) == doctest::Approx(0.5));
    CHECK(opt.coupling.t(0, 1) == doctest::Approx(0.5));
    CHECK(opt.coupling.t.row(1).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("assignment optimum over permutation matrices") {
    RngStream rng(9);
    for (int trial = 0; trial < 50; ++trial) {
      const Index m = 2 + trial % 5;  // up to 6
      const Matrix c = integer_costs(m, rng);
      const OptimalCoupling opt = solve_optimal_coupling(CostMatrix(c), WeightVector::uniform(m), WeightVector::uniform(m));
      CHECK(opt.objective == doctest::Approx(min_over_permutations(c) / static_cast<double>(m)).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(solve_optimal_coupling(CostMatrix(Matrix::Zero(2, 3)), WeightVector::uniform(2), WeightVector::uniform(2)),
                  DimensionError);
}

TEST_CASE("LP certificate and basic-solution properties") {
  RngStream rng(17);
  for (int trial = 0; trial < 40; ++trial) {
    const Index m = 2 + trial % 15;
    const WeightVector rows = random_weights(m, rng), cols = random_weights(m, rng);
    const Ensemble ens(rng.normal_matrix(3, m));
    const CostMatrix c = squared_distance_cost(ens);
    const OptimalCoupling opt = solve_optimal_coupling(c, rows, cols);
    opt.coupling.validate(1e-9);
    CHECK(opt.support_size <= 2 * m - 1);
    double obj = 0.0;
    for (Index i = 0; i < m; ++i)
      for (Index j = 0; j < m; ++j) {
        const double reduced = c(i, j) - opt.row_duals[i] - opt.col_duals[j];
        CHECK(reduced >= -1e-7);
        if (opt.coupling.t(i, j) > 1e-12) CHECK(std::abs(reduced) < 1e-7);
        obj += opt.coupling.t(i, j) * c(i, j);
      }
    CHECK(obj == doctest::Approx(opt.objective).epsilon(1e-10));
    // strong duality
    CHECK(opt.row_duals.dot(rows.values()) + opt.col_duals.dot(cols.values()) ==
          doctest::Approx(opt.objective).epsilon(1e-9));
  }
}

TEST_CASE("LP objective is invariant under simultaneous permutation") {
  RngStream rng(23);
  const Index m = 7;
  const Matrix c = rng.normal_matrix(m, m).cwiseAbs();
  const WeightVector r = random_weights(m, rng), q = random_weights(m, rng);
  std::vector<Index> pr(m), pc(m);
  std::iota(pr.begin(), pr.end(), 0);
  std::iota(pc.begin(), pc.end(), 0);
  std::shuffle(pr.begin(), pr.end(), rng.engine());
  std::shuffle(pc.begin(), pc.end(), rng.engine());
  Matrix c2(m, m);
  Vector r2(m), q2(m);
  for (Index i = 0; i < m; ++i) {
    r2[i] = r[pr[i]];
    q2[i] = q[pc[i]];
    for (Index j = 0; j < m; ++j) c2(i, j) = c(pr[i], pc[j]);
  }
  const double a = solve_optimal_coupling(CostMatrix(c), r, q).objective;
  const double b = solve_optimal_coupling(CostMatrix(c2), WeightVector(r2), WeightVector(q2)).objective;
  CHECK(a == doctest::Approx(b).epsilon(1e-12));
}

TEST_CASE("zero-mass rows keep their index") {
  Vector w(4);
  w << 0.5, 0.0, 0.5, 0.0;
  RngStream rng(5);
  const Ensemble ens(rng.normal_matrix(2, 4));
  const OptimalCoupling opt = solve_optimal_coupling(squared_distance_cost(ens), WeightVector(w), WeightVector::uniform(4));
  CHECK(opt.coupling.t.rows() == 4);
  CHECK(opt.coupling.t.row(1).sum() == 0.0);
  CHECK(opt.coupling.t.row(3).sum() == 0.0);
}

TEST_CASE("coupling_to_transform") {
  CouplingMatrix t{Matrix::Identity(3, 3) / 3.0, WeightVector::uniform(3), WeightVector::uniform(3)};
  CHECK(coupling_to_transform(t).matrix().isApprox(Matrix::Identity(3, 3)));

  Vector w(3);
  w << 0.2, 0.5, 0.3;
  CouplingMatrix prod{w * Eigen::RowVectorXd::Constant(3, 1.0 / 3.0), WeightVector(w), WeightVector::uniform(3)};
  const Matrix s = coupling_to_transform(prod).matrix();
  for (Index j = 0; j < 3; ++j) CHECK((s.col(j) - w).cwiseAbs().maxCoeff() < 1e-14);

  CouplingMatrix bad{w * Eigen::RowVectorXd::Constant(3, 1.0) * Matrix(w.asDiagonal()), WeightVector(w), WeightVector(w)};
  CHECK_THROWS_AS(coupling_to_transform(bad), InvalidArgumentError);

  RngStream rng(31);
  const Index m = 9;
  const Ensemble ens(rng.normal_matrix(2, m));
  const OptimalCoupling opt = solve_optimal_coupling(squared_distance_cost(ens), random_weights(m, rng), WeightVector::uniform(m));
  const TransformMatrix tr = coupling_to_transform(opt.coupling);
  CHECK((tr.matrix().colwise().sum().array() - 1.0).abs().maxCoeff() < 1e-10);
  CHECK(tr.is_stochastic());
}

TEST_CASE("check_cyclical_monotonicity") {
  using Pairs = std::vector<std::pair<Vector, Vector>>;
  Pairs sorted;
  for (int i = 0; i < 5; ++i) sorted.emplace_back(Vector::Constant(1, i), Vector::Constant(1, i + 0.5));
  const CyclicalMonotonicityReport ok = check_cyclical_monotonicity(sorted);
  CHECK_FALSE(ok.violated);
  CHECK(ok.exhaustive);

  Pairs crossed = {{Vector::Constant(1, 0.0), Vector::Constant(1, 1.0)}, {Vector::Constant(1, 1.0), Vector::Constant(1, 0.0)}};
  const CyclicalMonotonicityReport bad = check_cyclical_monotonicity(crossed);
  CHECK(bad.violated);
  CHECK(bad.worst_margin == doctest::Approx(2.0));

  SUBCASE("LP support is cyclically monotone, large supports use the cycle search") {
    RngStream rng(41);
    const Index m = 15;
    const Ensemble ens(rng.normal_matrix(2, m));
    const OptimalCoupling opt = solve_optimal_coupling(squared_distance_cost(ens), random_weights(m, rng), WeightVector::uniform(m));
    Pairs support;
    for (Index i = 0; i < m; ++i)
      for (Index j = 0; j < m; ++j)
        if (opt.coupling.t(i, j) > 1e-9) support.emplace_back(ens.member(i), ens.member(j));
    const CyclicalMonotonicityReport rep = check_cyclical_monotonicity(support);
    CHECK_FALSE(rep.violated);
    CHECK_FALSE(rep.exhaustive);

    // a deliberately bad pairing of the same points is caught
    Pairs reversed;
    for (Index i = 0; i < m; ++i) reversed.emplace_back(ens.member(i), ens.member(m - 1 - i));
    CHECK(check_cyclical_monotonicity(reversed).violated);
  }
}

TEST_CASE("sinkhorn_coupling") {
  RngStream rng(3);
  SUBCASE("single member") {
    const SinkhornResult r = sinkhorn_coupling(CostMatrix(Matrix::Constant(1, 1, 2.0)), WeightVector::uniform(1), WeightVector::uniform(1));
    CHECK(r.coupling.t(0, 0) == doctest::Approx(1.0));
  }
  SUBCASE("large regularization approaches the product coupling") {
    const WeightVector a = random_weights(4, rng), b = random_weights(4, rng);
    SinkhornOptions o;
    o.reg = 1e4;
    o.epsilon_scaling = false;
    const SinkhornResult r = sinkhorn_coupling(CostMatrix(rng.normal_matrix(4, 4).cwiseAbs()), a, b, o);
    CHECK((r.coupling.t - a.values() * b.values().transpose()).cwiseAbs().maxCoeff() < 1e-3);
  }
  SUBCASE("small regularization is close to the LP") {
    for (int trial = 0; trial < 10; ++trial) {
      const Matrix c = rng.normal_matrix(5, 5).cwiseAbs();
      const WeightVector a = random_weights(5, rng), b = random_weights(5, rng);
      SinkhornOptions o;
      o.reg = 1e-3;
      const SinkhornResult r = sinkhorn_coupling(CostMatrix(c), a, b, o);
      const double lp = solve_optimal_coupling(CostMatrix(c), a, b).objective;
      CHECK(r.marginal_error < 1e-9);
      CHECK(std::abs(r.objective - lp) <= 0.01 * lp + 1e-12);
    }
  }
  SUBCASE("iteration limit raises") {
    SinkhornOptions o;
    o.reg = 1e-4;
    o.max_iters = 2;
    o.epsilon_scaling = false;
    CHECK_THROWS_AS(sinkhorn_coupling(CostMatrix(rng.normal_matrix(6, 6).cwiseAbs()), random_weights(6, rng),
                                      random_weights(6, rng), o),
                    NonConvergenceError);
  }
}

TEST_CASE("gaussian_optimal_map") {
  CHECK(gaussian_optimal_map(Matrix::Identity(3, 3) * 2.0, Matrix::Identity(3, 3) * 2.0).isApprox(Matrix::Identity(3, 3)));
  CHECK(gaussian_optimal_map(Matrix::Constant(1, 1, 4.0), Matrix::Constant(1, 1, 1.0))(0, 0) == doctest::Approx(0.5));
  RngStream rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix b1 = rng.normal_matrix(3, 3), b2 = rng.normal_matrix(3, 3);
    const Matrix pf = b1 * b1.transpose() + 0.1 * Matrix::Identity(3, 3);
    const Matrix pa = b2 * b2.transpose() + 0.1 * Matrix::Identity(3, 3);
    const Matrix a = gaussian_optimal_map(pf, pa);
    CHECK((a * pf * a.transpose() - pa).norm() < 1e-8);
    CHECK((a - a.transpose()).norm() < 1e-12);
    CHECK(Eigen::SelfAdjointEigenSolver<Matrix>(a).eigenvalues().minCoeff() > 0.0);
  }
  Matrix indefinite = Matrix::Identity(2, 2);
  indefinite(1, 1) = -1.0;
  CHECK_THROWS_AS(gaussian_optimal_map(indefinite, Matrix::Identity(2, 2)), DecompositionError);
}

TEST_CASE("collapsed ensembles with duplicate members terminate") {
  RngStream rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const Index m = 50;
    // a few distinct states, each repeated, with nearly equal weights
    const Matrix distinct = rng.normal_matrix(3, 4);
    Matrix z(3, m);
    for (Index i = 0; i < m; ++i) z.col(i) = distinct.col(i % 4) + 1e-9 * (trial % 2) * rng.normal_vector(3);
    Vector w(m);
    for (Index i = 0; i < m; ++i) w[i] = 1.0 + 1e-8 * rng.normal() + (i < 3 ? 6.0 : 0.0);
    const WeightVector rows(w / w.sum());
    const CostMatrix c = squared_distance_cost(Ensemble(z));
    const OptimalCoupling opt = solve_optimal_coupling(c, rows, WeightVector::uniform(m));
    opt.coupling.validate(1e-9);
    for (Index i = 0; i < m; ++i)
      for (Index j = 0; j < m; ++j) CHECK(c(i, j) - opt.row_duals[i] - opt.col_duals[j] >= -1e-7);
  }
}

TEST_CASE("recorded LP from a collapsed filter ensemble") {
  // rows, columns, supply, demand, cost matrix, cost bound
  std::ifstream in(LETF_TEST_DATA_DIR "/collapsed_lp.txt");
  REQUIRE(in.good());
  Index m = 0, n = 0;
  in >> m >> n;
  Vector supply(m), demand(n);
  for (Index i = 0; i < m; ++i) in >> supply[i];
  for (Index j = 0; j < n; ++j) in >> demand[j];
  Matrix c(m, n);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < n; ++j) in >> c(i, j);
  double bound = 0.0;
  in >> bound;
  REQUIRE(in.good());
  const TransportSolution sol = solve_transport(supply, demand, [&c](Index i, Index j) { return c(i, j); }, bound);
  CHECK(sol.pivots < 10000);
  const OptimalCoupling opt = solve_optimal_coupling(CostMatrix(c), WeightVector(supply), WeightVector(demand));
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < n; ++j) CHECK(c(i, j) - opt.row_duals[i] - opt.col_duals[j] >= -1e-7);
}
