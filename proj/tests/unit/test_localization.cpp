#include "letf/localization.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace letf;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// L96-like setup: 40 points, odd indices observed.
struct Setup {
  GridGeometry grid{40.0 / 3.0, 40};
  ObservationModel om;
  Ensemble forecast;
  Vector obs;
};

Setup make_setup(Index m, std::uint64_t seed) {
  Setup s;
  std::vector<Index> idx;
  std::vector<double> loc;
  for (Index j = 1; j < 40; j += 2) {
    idx.push_back(j);
    loc.push_back(s.grid.position(j));
  }
  s.om = ObservationModel::selection(idx, Vector::Constant(20, 1.0), loc);
  RngStream rng(seed);
  Matrix z(40, m);
  // spatially smooth members so neighbouring transforms are related
  for (Index i = 0; i < m; ++i) {
    const double a = rng.normal(), b = rng.normal(), c = rng.normal();
    for (Index j = 0; j < 40; ++j)
      z(j, i) = 2.0 + a * std::sin(2 * M_PI * j / 40.0) + b * std::cos(4 * M_PI * j / 40.0) + 0.3 * c + 0.2 * rng.normal();
  }
  s.forecast = Ensemble(z);
  s.obs = s.om.observe(Vector(z.rowwise().mean())) + 0.5 * rng.normal_vector(20);
  return s;
}

}  // namespace

TEST_CASE("periodic_distance") {
  CHECK(periodic_distance(3.0, 3.0, 40.0) == 0.0);
  CHECK(periodic_distance(0.0, 39.0, 40.0) == doctest::Approx(1.0));
  CHECK(periodic_distance(0.0, 20.0, 40.0) == doctest::Approx(20.0));
  CHECK(periodic_distance(5.0, 37.0, 40.0) == doctest::Approx(8.0));
  CHECK_THROWS_AS(periodic_distance(0.0, 1.0, 0.0), InvalidArgumentError);
}

TEST_CASE("kernel shapes") {
  CHECK(triangular_shape(0.0) == 1.0);
  CHECK(triangular_shape(1.0) == 0.5);
  CHECK(triangular_shape(2.0) == 0.0);
  CHECK(triangular_shape(0.5) == 0.75);
  CHECK(triangular_shape(3.0) == 0.0);

  CHECK(gaspari_cohn_shape(0.0) == 1.0);
  CHECK(std::abs(gaspari_cohn_shape(2.0)) < 1e-12);
  CHECK(gaspari_cohn_shape(2.5) == 0.0);
  CHECK(gaspari_cohn_shape(1.0) == doctest::Approx(5.0 / 24.0).epsilon(1e-14));
  // second branch evaluated exactly at s = 1
  const double s = 1.0;
  const double outer = -2.0 / (3.0 * s) + 4.0 - 5.0 * s + 5.0 / 3.0 * s * s + 5.0 / 8.0 * s * s * s -
                       0.5 * std::pow(s, 4) + std::pow(s, 5) / 12.0;
  CHECK(std::abs(outer - gaspari_cohn_shape(1.0)) < 1e-12);

  SUBCASE("range, monotone decay and continuity on a fine grid") {
    double prev = 1.0;
    for (int k = 0; k <= 3000; ++k) {
      const double t = k * 1e-3;
      const double g = gaspari_cohn_shape(t);
      CHECK(g >= -1e-15);
      CHECK(g <= 1.0);
      CHECK(g <= prev + 1e-15);
      CHECK(std::abs(g - prev) < 2e-3);
      prev = g;
      CHECK(triangular_shape(t) >= 0.0);
    }
  }
}

TEST_CASE("kernel functions with radii") {
  const double l = 40.0;
  CHECK(kernel_triangular(0.0, 2.0, 2.0, l) == 0.5);
  CHECK(kernel_gaspari_cohn(1.0, 39.0, 1.0, l) == doctest::Approx(0.0));
  CHECK(kernel_gaspari_cohn(0.0, 3.0, 1.5, l) == kernel_gaspari_cohn(3.0, 0.0, 1.5, l));
  CHECK(kernel_triangular(1.0, 1.0, 0.0, l) == 1.0);
  CHECK(kernel_triangular(1.0, 2.0, 0.0, l) == 0.0);
  CHECK(kernel_gaspari_cohn(0.0, 20.0, kInf, l) == 1.0);
  CHECK_THROWS_AS(kernel_triangular(0.0, 1.0, -1.0, l), InvalidArgumentError);
}

TEST_CASE("localized_R_inverse") {
  const Setup s = make_setup(5, 1);
  LocalizationConfig cfg;
  cfg.r_loc_R = 2.0;
  const double x_obs = s.grid.position(5);
  const Vector rinv = localized_R_inverse(x_obs, s.om, cfg, s.grid);
  CHECK(rinv[2] == doctest::Approx(1.0));  // observation index 5 sits at x
  // index 11 is 6 grid points away, beyond 2 * r_loc_R = 4 points
  CHECK(rinv[5] == 0.0);
  // index 7 is two grid points away: s = 1 in grid units
  CHECK(rinv[3] == doctest::Approx(kernel_gaspari_cohn(x_obs, s.grid.position(7), 2.0 * s.grid.spacing(), s.grid.length)));
  CHECK(rinv[3] == doctest::Approx(5.0 / 24.0));

  cfg.units = RadiusUnits::Physical;
  CHECK(localized_R_inverse(x_obs, s.om, cfg, s.grid)[3] ==
        doctest::Approx(gaspari_cohn_shape(2.0 * s.grid.spacing() / 2.0)));

  ObservationModel nolocs = ObservationModel::selection({1}, Vector::Ones(1));
  CHECK_THROWS_AS(localized_R_inverse(0.0, nolocs, cfg, s.grid), InvalidArgumentError);
}

TEST_CASE("letkf_analysis") {
  const Setup s = make_setup(15, 3);
  SUBCASE("infinite radius equals the global square root filter") {
    LocalizationConfig cfg;
    cfg.r_loc_R = kInf;
    const LocalizedAnalysis loc = letkf_analysis(s.forecast, s.obs, s.om, cfg, s.grid);
    const AnalysisResult glob = esrf_analysis(s.forecast, s.obs, s.om);
    CHECK((loc.result.analysis.states() - glob.analysis.states()).cwiseAbs().maxCoeff() < 1e-8);
    for (const Matrix& t : loc.transforms) CHECK((t - glob.transform->matrix()).cwiseAbs().maxCoeff() < 1e-8);
  }
  SUBCASE("no observation within reach leaves the component unchanged") {
    ObservationModel far = ObservationModel::selection({1}, Vector::Ones(1), {s.grid.position(1)});
    LocalizationConfig cfg;
    cfg.r_loc_R = 2.0;
    const LocalizedAnalysis loc = letkf_analysis(s.forecast, Vector::Constant(1, 0.0), far, cfg, s.grid);
    CHECK((loc.transforms[20] - Matrix::Identity(15, 15)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((loc.result.analysis.states().row(20) - s.forecast.states().row(20)).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("column sums at every grid point") {
    LocalizationConfig cfg;
    cfg.r_loc_R = 3.0;
    for (const Matrix& t : letkf_analysis(s.forecast, s.obs, s.om, cfg, s.grid).transforms)
      CHECK((t.colwise().sum().array() - 1.0).abs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("localized_etpf_analysis") {
  const Setup s = make_setup(12, 4);
  RngStream rng(1);
  SUBCASE("column sums, stochasticity and local weights") {
    LocalizationConfig cfg;
    cfg.r_loc_R = 2.0;
    cfg.r_loc_c = 1.0;
    const LocalizedAnalysis loc = localized_etpf_analysis(s.forecast, s.obs, s.om, cfg, s.grid, {}, rng);
    REQUIRE(loc.transforms.size() == 40);
    for (const Matrix& t : loc.transforms) {
      CHECK((t.colwise().sum().array() - 1.0).abs().maxCoeff() < 1e-10);
      CHECK((t.array() >= -1e-12).all());
    }
    for (Index j = 0; j < 40; ++j) {
      const Vector rinv = localized_R_inverse(s.grid.position(j), s.om, cfg, s.grid);
      const WeightVector w = weights_from_log_likelihood(gaussian_log_likelihood(s.om.observe(s.forecast), s.obs, rinv));
      // local mean identity for each component
      const double lhs = loc.result.analysis.states().row(j).mean();
      CHECK(lhs == doctest::Approx(s.forecast.states().row(j).dot(w.values())).epsilon(1e-10));
    }
  }
  SUBCASE("uniform local weights give S = I") {
    ObservationModel one = ObservationModel::selection({1}, Vector::Ones(1), {s.grid.position(1)});
    LocalizationConfig cfg;
    cfg.r_loc_R = 1.0;
    const LocalizedAnalysis loc = localized_etpf_analysis(s.forecast, Vector::Zero(1), one, cfg, s.grid, {}, rng);
    CHECK(loc.transforms[25] == Matrix::Identity(12, 12));
  }
  SUBCASE("single grid point with K = 1 equals the global ETPF") {
    const GridGeometry g{1.0, 1};
    RngStream r2(3);
    const Ensemble f(r2.normal_matrix(1, 9));
    const ObservationModel om = ObservationModel::selection({0}, Vector::Constant(1, 0.3), {0.0});
    LocalizationConfig cfg;
    cfg.r_loc_R = kInf;
    cfg.r_loc_c = kInf;
    const Vector y = Vector::Constant(1, 0.4);
    const LocalizedAnalysis loc = localized_etpf_analysis(f, y, om, cfg, g, {}, rng);
    const AnalysisResult glob = etpf_analysis(f, y, om, {}, rng);
    CHECK((loc.result.analysis.states() - glob.analysis.states()).cwiseAbs().maxCoeff() < 1e-10);
  }
  SUBCASE("r_loc_c = 0 only uses the local component in the cost") {
    LocalizationConfig cfg;
    cfg.r_loc_R = kInf;
    cfg.r_loc_c = 0.0;
    const LocalizedAnalysis loc = localized_etpf_analysis(s.forecast, s.obs, s.om, cfg, s.grid, {}, rng);
    const WeightVector w =
        weights_from_log_likelihood(gaussian_log_likelihood(s.om.observe(s.forecast), s.obs, s.om.r_diag.cwiseInverse()));
    for (Index j : {0, 17, 39}) {
      // scalar transport of the j-th component: the LP objective of S(x_j) / M matches a 1-D solve
      Matrix c(12, 12);
      for (Index a = 0; a < 12; ++a)
        for (Index b = 0; b < 12; ++b) c(a, b) = std::pow(s.forecast.states()(j, a) - s.forecast.states()(j, b), 2);
      const OptimalCoupling opt = solve_optimal_coupling(CostMatrix(c), w, WeightVector::uniform(12));
      const Matrix t = loc.transforms[static_cast<std::size_t>(j)] / 12.0;
      CHECK((t.array() * c.array()).sum() == doctest::Approx(opt.objective).epsilon(1e-9));
    }
  }
  SUBCASE("smoothness proxy shrinks with the localization radius") {
    auto roughness = [&](double r) {
      LocalizationConfig cfg;
      cfg.r_loc_R = r;
      double acc = 0.0;
      const auto tr = letkf_analysis(s.forecast, s.obs, s.om, cfg, s.grid).transforms;
      for (Index j = 0; j < 40; ++j) acc = std::max(acc, (tr[static_cast<std::size_t>((j + 1) % 40)] - tr[static_cast<std::size_t>(j)]).norm());
      return acc;
    };
    CHECK(roughness(2.0) > roughness(6.0));
  }
}

TEST_CASE("Gaspari-Cohn support ends exactly at s = 2") {
  CHECK(gaspari_cohn_shape(2.0) == 0.0);
  CHECK(gaspari_cohn_shape(std::nextafter(2.0, 0.0)) >= 0.0);
  CHECK(gaspari_cohn_shape(std::nextafter(2.0, 0.0)) < 1e-12);
}
