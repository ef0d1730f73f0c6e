// Ensemble containers and the shared ensemble-statistics algebra.
#pragma once

#include <Eigen/Dense>

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace letf {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Default absolute tolerance used by invariant checks (column sums, marginals).
inline constexpr double kDefaultTolerance = 1e-10;

// -----------------------------------------------------------------------------
// Errors
// -----------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class InvalidArgumentError : public Error {
 public:
  using Error::Error;
};

/// Raised when an operation needs at least two members (deviations, covariances).
class DegenerateEnsembleError : public Error {
 public:
  using Error::Error;
};

class DecompositionError : public Error {
 public:
  using Error::Error;
};

/// Every likelihood underflowed, even after the log-sum-exp shift.
class WeightCollapseError : public Error {
 public:
  using Error::Error;
};

// -----------------------------------------------------------------------------
// Ensemble
// -----------------------------------------------------------------------------

/// M members of an N_z-dimensional state, stored as the columns of an
/// N_z x M matrix so every linear ensemble transform is a single product.
class Ensemble {
 public:
  Ensemble() = default;
  explicit Ensemble(Matrix states);

  static Ensemble from_members(const std::vector<Vector>& members);

  Index size() const { return states_.cols(); }
  Index dim() const { return states_.rows(); }

  auto member(Index i) const { return states_.col(i); }
  auto member(Index i) { return states_.col(i); }

  const Matrix& states() const { return states_; }
  Matrix& states() { return states_; }

 private:
  Matrix states_;
};

/// Normalized importance weights: w_i >= 0 and sum to one within 1e-12.
class WeightVector {
 public:
  WeightVector() = default;
  explicit WeightVector(Vector w, double tol = 1e-12);

  static WeightVector uniform(Index m);

  Index size() const { return w_.size(); }
  double operator[](Index i) const { return w_[i]; }
  const Vector& values() const { return w_; }

 private:
  Vector w_;
};

/// Matrix S with unit column sums; analysis member j is sum_i z_i s_ij.
/// Rows index forecast members, columns index analysis members.
class TransformMatrix {
 public:
  TransformMatrix() = default;
  explicit TransformMatrix(Matrix s, double tol = kDefaultTolerance);

  static TransformMatrix identity(Index m);

  Index rows() const { return s_.rows(); }
  Index cols() const { return s_.cols(); }
  const Matrix& matrix() const { return s_; }
  double operator()(Index i, Index j) const { return s_(i, j); }

  /// True when every entry lies in [0, 1] (up to tol), i.e. S is column-stochastic.
  bool is_stochastic(double tol = kDefaultTolerance) const;

  Ensemble apply(const Ensemble& forecast) const;

 private:
  Matrix s_;
};

// -----------------------------------------------------------------------------
// Observation model
// -----------------------------------------------------------------------------

/// Forward map h, diagonal error variances R and optional spatial locations.
///
/// When `obs_indices` is non-empty the forward map is component selection and
/// `h` may be left empty.
struct ObservationModel {
  std::function<Vector(const Vector&)> h;
  std::vector<Index> obs_indices;
  Vector r_diag;
  std::vector<double> obs_locations;

  static ObservationModel selection(std::vector<Index> indices, Vector r_diag,
                                    std::vector<double> locations = {});

  Index obs_dim() const { return r_diag.size(); }
  bool has_locations() const { return !obs_locations.empty(); }

  /// Throws InvalidArgumentError when R is not positive or the sizes disagree.
  void validate() const;

  Vector observe(const Vector& z) const;
  /// N_y x M matrix whose column i is h(z_i).
  Matrix observe(const Ensemble& ens) const;
};

// -----------------------------------------------------------------------------
// Ensemble statistics
// -----------------------------------------------------------------------------

Vector ensemble_mean(const Ensemble& ens);

/// Column i is z_i - mean. Requires M >= 2.
Matrix ensemble_deviations(const Ensemble& ens);

/// Column-wise deviations of an arbitrary sample matrix (columns are samples).
Matrix column_deviations(const Matrix& samples);

/// P = A A^T / (M - 1).
Matrix ensemble_covariance(const Ensemble& ens);

/// P_zy = A_z A_y^T / (M - 1) with obs_ens holding h(z_i) in its columns.
Matrix cross_covariance(const Ensemble& ens, const Matrix& obs_ens);

// -----------------------------------------------------------------------------
// Symmetric matrix functions
// -----------------------------------------------------------------------------

/// Principal square root of a symmetric positive semidefinite matrix through
/// its eigendecomposition; eigenvalues are floored at `floor`.
Matrix symmetric_sqrt(const Matrix& a, double floor = 1e-14);

/// Inverse principal square root of a symmetric positive definite matrix.
/// Throws DecompositionError if an eigenvalue is not above `floor`.
Matrix symmetric_inverse_sqrt(const Matrix& a, double floor = 1e-14);

}  // namespace letf
