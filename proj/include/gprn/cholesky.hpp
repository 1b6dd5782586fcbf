#pragma once

#include "gprn/common.hpp"

namespace gprn {

// Unconstrained parameterization of a positive-definite covariance through
// its Cholesky factor. The stored matrix `raw` keeps the strictly lower
// triangle as-is and the diagonal in log-space, so every entry is a free
// optimization variable and L = tril(raw, -1) + diag(exp(raw_ii)) always has
// a strictly positive diagonal. The covariance is L L^T.
//
// Immutable after construction.
class CholFactor {
 public:
  explicit CholFactor(MatrixXd raw);

  static CholFactor identity(Index dim) { return scaled_identity(dim, 1.0); }
  // L = scale * I (scale = 0 degenerates to a point mass; usable for
  // sampling but not for log-determinants).
  static CholFactor scaled_identity(Index dim, double scale);
  // From an explicit lower-triangular factor with non-negative diagonal.
  static CholFactor from_factor(const MatrixXd& lower);
  // Cholesky-factorize a symmetric positive-definite covariance.
  static CholFactor from_covariance(const MatrixXd& cov);

  Index dim() const { return dim_; }
  const MatrixXd& raw() const { return raw_; }

  // L with the diagonal exponentiated.
  const MatrixXd& factor() const { return factor_; }
  MatrixXd covariance() const { return factor_ * factor_.transpose(); }

  // log |L L^T| = 2 sum_i raw_ii; exact and O(dim) by construction.
  double logdet_cov() const;
  // tr(L L^T) = ||L||_F^2.
  double trace_cov() const;

  Index param_count() const { return dim_ * (dim_ + 1) / 2; }
  // Lower triangle packed row by row (diagonal entries are the raw
  // log-values); the layout used by ParamVector.
  void pack(double* out) const;
  static CholFactor unpack(Index dim, const double* in);

 private:
  Index dim_ = 0;
  MatrixXd raw_;
  MatrixXd factor_;
};

}  // namespace gprn
