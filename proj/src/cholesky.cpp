#include "gprn/cholesky.hpp"

#include <cmath>

namespace gprn {

CholFactor::CholFactor(MatrixXd raw) : dim_(raw.rows()), raw_(std::move(raw)) {
  if (dim_ <= 0 || raw_.cols() != dim_) throw std::invalid_argument("CholFactor: raw matrix must be square");
  factor_ = raw_.triangularView<Eigen::StrictlyLower>();
  for (Index i = 0; i < dim_; ++i) factor_(i, i) = std::exp(raw_(i, i));
}

CholFactor CholFactor::scaled_identity(Index dim, double scale) {
  if (scale < 0.0) throw std::invalid_argument("CholFactor: negative scale");
  MatrixXd raw = MatrixXd::Zero(dim, dim);
  raw.diagonal().setConstant(std::log(scale));
  return CholFactor(std::move(raw));
}

CholFactor CholFactor::from_factor(const MatrixXd& lower) {
  if (lower.rows() != lower.cols()) throw std::invalid_argument("CholFactor: factor must be square");
  MatrixXd raw = lower.triangularView<Eigen::StrictlyLower>();
  for (Index i = 0; i < lower.rows(); ++i) {
    if (lower(i, i) < 0.0) throw std::invalid_argument("CholFactor: factor diagonal must be non-negative");
    raw(i, i) = std::log(lower(i, i));
  }
  return CholFactor(std::move(raw));
}

CholFactor CholFactor::from_covariance(const MatrixXd& cov) {
  Eigen::LLT<MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw NumericalError("CholFactor: covariance is not positive definite");
  return from_factor(llt.matrixL());
}

double CholFactor::logdet_cov() const { return 2.0 * raw_.diagonal().sum(); }

double CholFactor::trace_cov() const { return factor_.squaredNorm(); }

void CholFactor::pack(double* out) const {
  Index p = 0;
  for (Index i = 0; i < dim_; ++i)
    for (Index j = 0; j <= i; ++j) out[p++] = raw_(i, j);
}

CholFactor CholFactor::unpack(Index dim, const double* in) {
  MatrixXd raw = MatrixXd::Zero(dim, dim);
  Index p = 0;
  for (Index i = 0; i < dim; ++i)
    for (Index j = 0; j <= i; ++j) raw(i, j) = in[p++];
  return CholFactor(std::move(raw));
}

}  // namespace gprn
