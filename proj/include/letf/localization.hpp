// R-localization for spatially extended systems: distance kernels, localized
// observation weights, the LETKF and the localized ETPF.
#pragma once

#include "letf/core.hpp"
#include "letf/filters.hpp"
#include "letf/random.hpp"

#include <limits>
#include <vector>

namespace letf {

/// Periodic grid x_j = j * dx on [0, L) with dx = L / n_grid.
struct GridGeometry {
  double length = 40.0;
  Index n_grid = 40;

  double spacing() const { return length / static_cast<double>(n_grid); }
  double position(Index j) const { return static_cast<double>(j) * spacing(); }
  void validate() const;
};

enum class KernelType { Triangular, GaspariCohn };

enum class RadiusUnits {
  GridIndex,  ///< radii count grid spacings
  Physical    ///< radii are in the same units as positions
};

/// Radii may be +infinity, which turns the kernel into the constant 1.
struct LocalizationConfig {
  KernelType kernel = KernelType::GaspariCohn;
  double r_loc_R = 4.0;
  double r_loc_c = 0.0;
  RadiusUnits units = RadiusUnits::GridIndex;
};

double periodic_distance(double x, double x2, double length);

/// Kernel shapes as functions of s = distance / radius.
double triangular_shape(double s);
double gaspari_cohn_shape(double s);

/// Kernel weight between two positions for radius r (in the same units as the
/// positions). r = 0 gives 1 at zero distance and 0 elsewhere; r = inf gives 1.
double kernel_triangular(double x, double x2, double r, double length);
double kernel_gaspari_cohn(double x, double x2, double r, double length);
double kernel_value(KernelType kernel, double x, double x2, double r, double length);

/// Diagonal of the localized inverse observation covariance at position x:
/// K(x, x_k; r_loc_R) / r_kk.
Vector localized_R_inverse(double x, const ObservationModel& om, const LocalizationConfig& cfg,
                           const GridGeometry& grid);

/// Per-grid-point transforms S(x_j) alongside the assembled analysis.
struct LocalizedAnalysis {
  AnalysisResult result;
  std::vector<Matrix> transforms;
  /// Grid points where the local weights collapsed and S(x) = I was used.
  Index fallback_count = 0;
};

/// LETKF: component j of every analysis member comes from the square root
/// filter transform built with the localized R^-1(x_j).
LocalizedAnalysis letkf_analysis(const Ensemble& forecast, const Vector& obs, const ObservationModel& om,
                                 const LocalizationConfig& cfg, const GridGeometry& grid);

struct LocalizedEtpfOptions {
  double rejuvenation = 0.0;
  bool keep_transforms = true;
};

/// Localized ETPF: per grid point, local weights from R^-1(x), a kernel
/// weighted (Riemann sum) local cost, one LP and S(x) = M T*(x). With
/// r_loc_c = 0 only the local component enters the cost.
LocalizedAnalysis localized_etpf_analysis(const Ensemble& forecast, const Vector& obs, const ObservationModel& om,
                                          const LocalizationConfig& cfg, const GridGeometry& grid,
                                          const LocalizedEtpfOptions& opts, RngStream& rng);

}  // namespace letf
