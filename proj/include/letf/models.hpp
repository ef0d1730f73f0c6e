// Lorenz-63 / Lorenz-96 vector fields and the implicit-midpoint flow map.
#pragma once

#include "letf/core.hpp"

#include <map>
#include <string>

namespace letf {

/// Autonomous ODE dz/dt = f(z). The right-hand side writes into `dz`, which
/// never aliases `z`.
struct OdeModel {
  using Rhs = std::function<void(const Eigen::Ref<const Vector>& z, Eigen::Ref<Vector> dz)>;

  std::string name;
  Index dim = 0;
  Rhs rhs;
  std::map<std::string, double> params;

  Vector operator()(const Vector& z) const;
};

/// Raised when the implicit solve does not reach its tolerance.
class IntegrationError : public Error {
 public:
  IntegrationError(const std::string& what, double residual, int iterations)
      : Error(what), residual_(residual), iterations_(iterations) {}
  double residual() const { return residual_; }
  int iterations() const { return iterations_; }

 private:
  double residual_;
  int iterations_;
};

struct Lorenz63Params {
  double sigma = 10.0;
  double rho = 28.0;
  double beta = 8.0 / 3.0;
};

struct Lorenz96Params {
  double forcing = 8.0;
  double dx = 1.0 / 3.0;  ///< mesh size; the advection bracket is divided by 3*dx
};

Vector lorenz63_rhs(const Vector& z, const Lorenz63Params& p = {});
Vector lorenz96_rhs(const Vector& u, const Lorenz96Params& p = {});

OdeModel make_lorenz63(const Lorenz63Params& p = {});
OdeModel make_lorenz96(Index n = 40, const Lorenz96Params& p = {});

struct FlowMapConfig {
  double dt = 0.01;
  int steps_per_assimilation = 12;
  double solver_tol = 1e-12;
  int solver_max_iters = 100;
};

/// One implicit-midpoint step z' = z + dt f((z + z')/2), solved by fixed-point
/// iteration from an explicit Euler predictor until the max-norm residual is
/// below `tol`. A negative dt steps backwards in time.
Vector implicit_midpoint_step(const OdeModel& model, const Vector& z, double dt, double tol = 1e-12,
                              int max_iters = 100);

/// steps_per_assimilation implicit-midpoint steps.
Vector flow_map(const OdeModel& model, const Vector& z, const FlowMapConfig& cfg);

/// Applies flow_map to every member in place.
void propagate(const OdeModel& model, Ensemble& ens, const FlowMapConfig& cfg);

}  // namespace letf
