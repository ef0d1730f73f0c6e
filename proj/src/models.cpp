#include "letf/models.hpp"

#include <cmath>
#include <sstream>

namespace letf {

namespace {

void l63(const Eigen::Ref<const Vector>& z, Eigen::Ref<Vector> dz, const Lorenz63Params& p) {
  dz[0] = p.sigma * (z[1] - z[0]);
  dz[1] = z[0] * (p.rho - z[2]) - z[1];
  dz[2] = z[0] * z[1] - p.beta * z[2];
}

void l96(const Eigen::Ref<const Vector>& u, Eigen::Ref<Vector> du, const Lorenz96Params& p) {
  const Index n = u.size();
  const double scale = 1.0 / (3.0 * p.dx);
  for (Index j = 0; j < n; ++j) {
    const double um2 = u[(j + n - 2) % n];
    const double um1 = u[(j + n - 1) % n];
    const double up1 = u[(j + 1) % n];
    du[j] = -(um1 * up1 - um2 * um1) * scale - u[j] + p.forcing;
  }
}

// Fixed-point solve with caller-owned workspace so ensemble propagation does
// not allocate per step.
struct MidpointWorkspace {
  Vector next, trial, mid, f;
  explicit MidpointWorkspace(Index n) : next(n), trial(n), mid(n), f(n) {}
};

void midpoint_inplace(const OdeModel& model, Vector& z, double dt, double tol, int max_iters,
                      MidpointWorkspace& ws) {
  model.rhs(z, ws.f);
  ws.next = z + dt * ws.f;
  double residual = 0.0;
  for (int it = 1; it <= max_iters; ++it) {
    ws.mid = 0.5 * (z + ws.next);
    model.rhs(ws.mid, ws.f);
    ws.trial = z + dt * ws.f;
    // trial - next is the residual of the current iterate
    residual = (ws.trial - ws.next).lpNorm<Eigen::Infinity>();
    ws.next.swap(ws.trial);
    if (!std::isfinite(residual)) break;
    if (residual < tol) {
      z.swap(ws.next);
      return;
    }
  }
  std::ostringstream os;
  os << "implicit midpoint: fixed-point iteration did not converge for model '" << model.name
     << "' (residual " << residual << ", dt " << dt << ")";
  throw IntegrationError(os.str(), residual, max_iters);
}

void check_dim(const OdeModel& model, Index n) {
  if (n != model.dim) {
    std::ostringstream os;
    os << model.name << ": expected state dimension " << model.dim << ", got " << n;
    throw DimensionError(os.str());
  }
}

void check_flow_config(const FlowMapConfig& cfg) {
  if (!(cfg.dt > 0.0)) throw InvalidArgumentError("flow map: dt must be positive");
  if (cfg.steps_per_assimilation < 0) throw InvalidArgumentError("flow map: negative step count");
  if (!(cfg.solver_tol > 0.0)) throw InvalidArgumentError("flow map: tolerance must be positive");
  if (cfg.solver_max_iters < 1) throw InvalidArgumentError("flow map: max iterations must be >= 1");
}

}  // namespace

Vector OdeModel::operator()(const Vector& z) const {
  check_dim(*this, z.size());
  Vector dz(z.size());
  rhs(z, dz);
  return dz;
}

Vector lorenz63_rhs(const Vector& z, const Lorenz63Params& p) {
  if (z.size() != 3) throw DimensionError("lorenz63_rhs: state must have length 3");
  Vector dz(3);
  l63(z, dz, p);
  return dz;
}

Vector lorenz96_rhs(const Vector& u, const Lorenz96Params& p) {
  if (u.size() < 4) throw DimensionError("lorenz96_rhs: need at least 4 grid points");
  Vector du(u.size());
  l96(u, du, p);
  return du;
}

OdeModel make_lorenz63(const Lorenz63Params& p) {
  OdeModel m;
  m.name = "lorenz63";
  m.dim = 3;
  m.rhs = [p](const Eigen::Ref<const Vector>& z, Eigen::Ref<Vector> dz) { l63(z, dz, p); };
  m.params = {{"sigma", p.sigma}, {"rho", p.rho}, {"beta", p.beta}};
  return m;
}

OdeModel make_lorenz96(Index n, const Lorenz96Params& p) {
  if (n < 4) throw DimensionError("lorenz96: need at least 4 grid points");
  OdeModel m;
  m.name = "lorenz96";
  m.dim = n;
  m.rhs = [p](const Eigen::Ref<const Vector>& u, Eigen::Ref<Vector> du) { l96(u, du, p); };
  m.params = {{"forcing", p.forcing}, {"dx", p.dx}};
  return m;
}

Vector implicit_midpoint_step(const OdeModel& model, const Vector& z, double dt, double tol,
                              int max_iters) {
  check_dim(model, z.size());
  if (!std::isfinite(dt)) throw InvalidArgumentError("implicit midpoint: dt must be finite");
  if (!(tol > 0.0) || max_iters < 1) throw InvalidArgumentError("implicit midpoint: bad solver settings");
  Vector out = z;
  MidpointWorkspace ws(z.size());
  midpoint_inplace(model, out, dt, tol, max_iters, ws);
  return out;
}

Vector flow_map(const OdeModel& model, const Vector& z, const FlowMapConfig& cfg) {
  check_dim(model, z.size());
  check_flow_config(cfg);
  Vector out = z;
  MidpointWorkspace ws(z.size());
  for (int s = 0; s < cfg.steps_per_assimilation; ++s)
    midpoint_inplace(model, out, cfg.dt, cfg.solver_tol, cfg.solver_max_iters, ws);
  return out;
}

void propagate(const OdeModel& model, Ensemble& ens, const FlowMapConfig& cfg) {
  check_dim(model, ens.dim());
  check_flow_config(cfg);
  MidpointWorkspace ws(ens.dim());
  Vector z(ens.dim());
  for (Index i = 0; i < ens.size(); ++i) {
    z = ens.member(i);
    for (int s = 0; s < cfg.steps_per_assimilation; ++s)
      midpoint_inplace(model, z, cfg.dt, cfg.solver_tol, cfg.solver_max_iters, ws);
    ens.member(i) = z;
  }
}

}  // namespace letf
