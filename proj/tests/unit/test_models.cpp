#include "letf/models.hpp"
#include "letf/random.hpp"

#include <doctest.h>

#include <cmath>

using namespace letf;

namespace {

OdeModel linear_model(double a) {
  OdeModel m;
  m.name = "linear";
  m.dim = 1;
  m.rhs = [a](const Eigen::Ref<const Vector>& z, Eigen::Ref<Vector> dz) { dz = a * z; };
  return m;
}

// Index-by-index Lorenz-96 with explicit modular arithmetic.
Vector l96_loop(const Vector& u, double f, double dx) {
  const int n = static_cast<int>(u.size());
  Vector out(n);
  for (int j = 0; j < n; ++j) {
    const double um1 = u[(j - 1 + n) % n], up1 = u[(j + 1) % n], um2 = u[(j - 2 + n) % n];
    out[j] = -(um1 * up1 - um2 * um1) / (3.0 * dx) - u[j] + f;
  }
  return out;
}

}  // namespace

TEST_CASE("lorenz63_rhs") {
  CHECK(lorenz63_rhs(Vector::Zero(3)).isZero(0.0));
  const Vector f = lorenz63_rhs(Vector::Ones(3));
  CHECK(f[0] == doctest::Approx(0.0));
  CHECK(f[1] == doctest::Approx(26.0));
  CHECK(f[2] == doctest::Approx(1.0 - 8.0 / 3.0));
  Lorenz63Params p;
  p.sigma = 0.0;
  Vector z(3);
  z << 3.0, -1.0, 2.0;
  CHECK(lorenz63_rhs(z, p)[0] == 0.0);
  CHECK_THROWS_AS(lorenz63_rhs(Vector::Zero(4)), DimensionError);
}

TEST_CASE("lorenz96_rhs") {
  CHECK(lorenz96_rhs(Vector::Constant(40, 8.0)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(lorenz96_rhs(Vector::Zero(40)).isApprox(Vector::Constant(40, 8.0)));
  RngStream rng(3);
  const Vector u = 3.0 * rng.normal_vector(40);
  CHECK((lorenz96_rhs(u) - l96_loop(u, 8.0, 1.0 / 3.0)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(lorenz96_rhs(Vector::Zero(3)), DimensionError);

  SUBCASE("equivariant under cyclic shifts") {
    Vector shifted(40);
    for (int j = 0; j < 40; ++j) shifted[(j + 7) % 40] = u[j];
    const Vector f = lorenz96_rhs(u), fs = lorenz96_rhs(shifted);
    for (int j = 0; j < 40; ++j) CHECK(fs[(j + 7) % 40] == doctest::Approx(f[j]).epsilon(1e-14));
  }
}

TEST_CASE("implicit_midpoint_step") {
  SUBCASE("zero field is the identity") {
    OdeModel zero = linear_model(0.0);
    CHECK(implicit_midpoint_step(zero, Vector::Constant(1, 2.5), 0.1)[0] == 2.5);
  }
  SUBCASE("linear scalar field matches the closed form") {
    const double a = -1.3, dt = 0.05;
    const double z1 = implicit_midpoint_step(linear_model(a), Vector::Constant(1, 1.7), dt)[0];
    CHECK(std::abs(z1 - 1.7 * (1 + a * dt / 2) / (1 - a * dt / 2)) < 1e-12);
  }
  SUBCASE("lorenz63 residual below tolerance") {
    const OdeModel m = make_lorenz63();
    Vector z(3);
    z << 1.0, 2.0, 20.0;
    const Vector z1 = implicit_midpoint_step(m, z, 0.01);
    const Vector res = z1 - z - 0.01 * lorenz63_rhs(0.5 * (z + z1));
    CHECK(res.cwiseAbs().maxCoeff() < 1e-11);
  }
  SUBCASE("symmetric under time reversal") {
    const OdeModel m = make_lorenz63();
    Vector z(3);
    z << -4.0, 3.0, 25.0;
    const Vector back = implicit_midpoint_step(m, implicit_midpoint_step(m, z, 0.01), -0.01);
    CHECK((back - z).cwiseAbs().maxCoeff() < 1e-11);
  }
  SUBCASE("non-convergence raises with the residual") {
    const OdeModel m = make_lorenz63();
    Vector z(3);
    z << 10.0, 10.0, 10.0;
    CHECK_THROWS_AS(implicit_midpoint_step(m, z, 0.5, 1e-12, 3), IntegrationError);
    try {
      implicit_midpoint_step(m, z, 0.5, 1e-12, 3);
    } catch (const IntegrationError& e) {
      CHECK(e.residual() > 1e-12);
      CHECK(e.iterations() == 3);
    }
  }
}

TEST_CASE("flow_map") {
  const OdeModel m = make_lorenz63();
  Vector z(3);
  z << 1.0, 1.0, 1.0;
  FlowMapConfig cfg;
  cfg.steps_per_assimilation = 0;
  CHECK(flow_map(m, z, cfg) == z);
  cfg.steps_per_assimilation = 2;
  CHECK(flow_map(m, z, cfg) == implicit_midpoint_step(m, implicit_midpoint_step(m, z, cfg.dt), cfg.dt));

  SUBCASE("lorenz96 stays bounded") {
    const OdeModel l96 = make_lorenz96(40);
    Vector u = Vector::Constant(40, 8.0);
    u[20] += 0.01;
    const FlowMapConfig c{0.005, 22, 1e-12, 100};
    for (int n = 0; n < 300; ++n) {
      u = flow_map(l96, u, c);
      REQUIRE(u.cwiseAbs().maxCoeff() < 30.0);
    }
  }
  SUBCASE("propagate matches member-wise flow") {
    RngStream rng(2);
    Ensemble ens(rng.normal_matrix(3, 4));
    const Ensemble before = ens;
    propagate(m, ens, FlowMapConfig{});
    for (Index i = 0; i < 4; ++i) CHECK(ens.member(i) == flow_map(m, Vector(before.member(i)), FlowMapConfig{}));
  }
  FlowMapConfig bad;
  bad.dt = 0.0;
  CHECK_THROWS(flow_map(m, z, bad));
}
