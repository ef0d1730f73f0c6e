#include "letf/core.hpp"

#include <cmath>
#include <sstream>

namespace letf {

namespace {

void require_members(const Ensemble& ens, Index minimum, const char* what) {
  if (ens.size() < minimum) {
    std::ostringstream os;
    os << what << ": need at least " << minimum << " members, got " << ens.size();
    throw DegenerateEnsembleError(os.str());
  }
}

Eigen::SelfAdjointEigenSolver<Matrix> eigen_of(const Matrix& a) {
  if (a.rows() != a.cols()) throw DimensionError("symmetric matrix function: matrix is not square");
  if (!a.allFinite()) throw DecompositionError("symmetric matrix function: non-finite entries");
  Matrix sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
  if (eig.info() != Eigen::Success) throw DecompositionError("eigendecomposition failed");
  return eig;
}

}  // namespace

Ensemble::Ensemble(Matrix states) : states_(std::move(states)) {
  if (states_.cols() < 1) throw DegenerateEnsembleError("ensemble needs at least one member");
  if (states_.rows() < 1) throw DimensionError("ensemble state dimension must be positive");
}

Ensemble Ensemble::from_members(const std::vector<Vector>& members) {
  if (members.empty()) throw DegenerateEnsembleError("ensemble needs at least one member");
  Matrix states(members.front().size(), static_cast<Index>(members.size()));
  for (std::size_t i = 0; i < members.size(); ++i) {
    if (members[i].size() != states.rows()) throw DimensionError("ensemble members differ in dimension");
    states.col(static_cast<Index>(i)) = members[i];
  }
  return Ensemble(std::move(states));
}

WeightVector::WeightVector(Vector w, double tol) : w_(std::move(w)) {
  if (w_.size() < 1) throw InvalidArgumentError("weight vector is empty");
  if (!w_.allFinite() || (w_.array() < 0.0).any())
    throw InvalidArgumentError("weights must be finite and nonnegative");
  if (std::abs(w_.sum() - 1.0) > tol) {
    std::ostringstream os;
    os.precision(17);
    os << "weights must sum to one, got " << w_.sum();
    throw InvalidArgumentError(os.str());
  }
}

WeightVector WeightVector::uniform(Index m) {
  return WeightVector(Vector::Constant(m, 1.0 / static_cast<double>(m)));
}

TransformMatrix::TransformMatrix(Matrix s, double tol) : s_(std::move(s)) {
  if (s_.size() == 0) throw InvalidArgumentError("transform matrix is empty");
  if (!s_.allFinite()) throw InvalidArgumentError("transform matrix has non-finite entries");
  const Eigen::RowVectorXd sums = s_.colwise().sum();
  for (Index j = 0; j < sums.size(); ++j) {
    if (std::abs(sums[j] - 1.0) > tol) {
      std::ostringstream os;
      os.precision(17);
      os << "transform column " << j << " sums to " << sums[j] << ", expected 1";
      throw InvalidArgumentError(os.str());
    }
  }
}

TransformMatrix TransformMatrix::identity(Index m) { return TransformMatrix(Matrix::Identity(m, m)); }

bool TransformMatrix::is_stochastic(double tol) const {
  return (s_.array() >= -tol).all() && (s_.array() <= 1.0 + tol).all();
}

Ensemble TransformMatrix::apply(const Ensemble& forecast) const {
  if (forecast.size() != s_.rows()) throw DimensionError("transform rows must match forecast member count");
  return Ensemble(forecast.states() * s_);
}

ObservationModel ObservationModel::selection(std::vector<Index> indices, Vector r_diag,
                                             std::vector<double> locations) {
  ObservationModel om;
  om.obs_indices = std::move(indices);
  om.r_diag = std::move(r_diag);
  om.obs_locations = std::move(locations);
  om.validate();
  return om;
}

void ObservationModel::validate() const {
  if (r_diag.size() < 1) throw InvalidArgumentError("observation model has no observations");
  if (!r_diag.allFinite() || (r_diag.array() <= 0.0).any())
    throw InvalidArgumentError("observation error variances must be positive");
  if (obs_indices.empty() && !h) throw InvalidArgumentError("observation model needs h or obs_indices");
  if (!obs_indices.empty() && static_cast<Index>(obs_indices.size()) != r_diag.size())
    throw DimensionError("obs_indices and r_diag differ in length");
  if (!obs_locations.empty() && static_cast<Index>(obs_locations.size()) != r_diag.size())
    throw DimensionError("obs_locations and r_diag differ in length");
}

Vector ObservationModel::observe(const Vector& z) const {
  if (obs_indices.empty()) {
    Vector y = h(z);
    if (y.size() != r_diag.size()) throw DimensionError("h(z) length differs from r_diag");
    return y;
  }
  Vector y(static_cast<Index>(obs_indices.size()));
  for (std::size_t k = 0; k < obs_indices.size(); ++k) {
    const Index idx = obs_indices[k];
    if (idx < 0 || idx >= z.size()) throw DimensionError("observation index out of range");
    y[static_cast<Index>(k)] = z[idx];
  }
  return y;
}

Matrix ObservationModel::observe(const Ensemble& ens) const {
  Matrix y(obs_dim(), ens.size());
  for (Index i = 0; i < ens.size(); ++i) y.col(i) = observe(Vector(ens.member(i)));
  return y;
}

Vector ensemble_mean(const Ensemble& ens) {
  require_members(ens, 1, "ensemble_mean");
  return ens.states().rowwise().mean();
}

Matrix column_deviations(const Matrix& samples) {
  if (samples.cols() < 2) throw DegenerateEnsembleError("deviations need at least two samples");
  const Vector mean = samples.rowwise().mean();
  return samples.colwise() - mean;
}

Matrix ensemble_deviations(const Ensemble& ens) {
  require_members(ens, 2, "ensemble_deviations");
  return column_deviations(ens.states());
}

Matrix ensemble_covariance(const Ensemble& ens) {
  const Matrix a = ensemble_deviations(ens);
  return a * a.transpose() / static_cast<double>(ens.size() - 1);
}

Matrix cross_covariance(const Ensemble& ens, const Matrix& obs_ens) {
  require_members(ens, 2, "cross_covariance");
  if (obs_ens.cols() != ens.size()) throw DimensionError("cross_covariance: member counts differ");
  const Matrix az = ensemble_deviations(ens);
  const Matrix ay = column_deviations(obs_ens);
  return az * ay.transpose() / static_cast<double>(ens.size() - 1);
}

Matrix symmetric_sqrt(const Matrix& a, double floor) {
  const auto eig = eigen_of(a);
  const Vector root = eig.eigenvalues().cwiseMax(floor).cwiseSqrt();
  const Matrix& v = eig.eigenvectors();
  Matrix r = v * root.asDiagonal() * v.transpose();
  return 0.5 * (r + r.transpose());
}

Matrix symmetric_inverse_sqrt(const Matrix& a, double floor) {
  const auto eig = eigen_of(a);
  if (eig.eigenvalues().minCoeff() <= floor)
    throw DecompositionError("inverse square root of a matrix that is not positive definite");
  const Vector inv_root = eig.eigenvalues().cwiseSqrt().cwiseInverse();
  const Matrix& v = eig.eigenvectors();
  Matrix r = v * inv_root.asDiagonal() * v.transpose();
  return 0.5 * (r + r.transpose());
}

}  // namespace letf
