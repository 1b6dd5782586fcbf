#pragma once

#include "gprn/common.hpp"

namespace gprn {

// RBF hyperparameters in log-space: k(x, x') = a^2 exp(-||x-x'||^2 / (2 l^2))
// with one lengthscale shared across input dimensions.
struct RbfHyper {
  double log_lengthscale = 0.0;
  double log_amplitude = 0.0;

  double lengthscale() const { return std::exp(log_lengthscale); }
  double amplitude() const { return std::exp(log_amplitude); }
};

double rbf(const VectorXd& xa, const VectorXd& xb, const RbfHyper& hyper);

// kappa_fhat(xa, xb) = rbf(xa, xb) + [same_point] * sigma_f^2. The delta is
// on the data-point index, not on coordinate equality.
double noisy_latent_kernel(const VectorXd& xa, const VectorXd& xb, const RbfHyper& hyper, double sigma_f,
                           bool same_point);

// Symmetric Gram matrix with a cached Cholesky factor of gram + jitter*I.
// Immutable after construction.
class KernelMatrix {
 public:
  KernelMatrix(MatrixXd gram, double jitter);

  Index dim() const { return gram_.rows(); }
  const MatrixXd& gram() const { return gram_; }
  double jitter() const { return jitter_; }
  // Lower Cholesky factor of gram + jitter*I.
  const MatrixXd& chol() const { return chol_; }
  double logdet() const { return logdet_; }

  // (gram + jitter*I)^{-1} * b via two triangular solves.
  MatrixXd solve(const MatrixXd& b) const;
  MatrixXd inverse() const;
  // L^{-1} * b (handy for trace terms tr(K^{-1} B B^T) = ||L^{-1} B||_F^2).
  MatrixXd half_solve(const MatrixXd& b) const;

 private:
  MatrixXd gram_;
  double jitter_;
  MatrixXd chol_;
  double logdet_;
};

double default_jitter(const RbfHyper& hyper);

// Builds the Gram matrix of X (rows are points) with extra_diag added to the
// diagonal (sigma_f^2 for the noisy-latent kernel, 0 otherwise). jitter < 0
// selects the default policy: start at 1e-8 a^2 and escalate x10 up to
// 1e-4 a^2 on Cholesky failure, then throw NumericalError.
KernelMatrix gram(const MatrixXd& x, const RbfHyper& hyper, double extra_diag, double jitter = -1.0);

// Cross-covariance [i, j] = rbf(x_train_i, x_test_j); no noise, no jitter
// (train and test points never share a data-point index).
MatrixXd cross_gram(const MatrixXd& x_train, const MatrixXd& x_test, const RbfHyper& hyper);

// Derivatives of the pure RBF Gram entries w.r.t. the log-hyperparameters.
struct GramGrad {
  MatrixXd d_log_lengthscale;
  MatrixXd d_log_amplitude;
};
GramGrad gram_grad(const MatrixXd& x, const RbfHyper& hyper);

}  // namespace gprn
