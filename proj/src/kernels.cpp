#include "gprn/kernels.hpp"

#include <cmath>
#include <string>

namespace gprn {

namespace {

void check_dims(const VectorXd& xa, const VectorXd& xb) {
  if (xa.size() != xb.size()) throw std::invalid_argument("kernel: input dimension mismatch");
}

// Squared distances between rows of a and rows of b.
MatrixXd sq_dist(const MatrixXd& a, const MatrixXd& b) {
  MatrixXd d(a.rows(), b.rows());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < b.rows(); ++j) d(i, j) = (a.row(i) - b.row(j)).squaredNorm();
  return d;
}

}  // namespace

double rbf(const VectorXd& xa, const VectorXd& xb, const RbfHyper& hyper) {
  check_dims(xa, xb);
  const double l = hyper.lengthscale();
  const double a = hyper.amplitude();
  return a * a * std::exp(-(xa - xb).squaredNorm() / (2.0 * l * l));
}

double noisy_latent_kernel(const VectorXd& xa, const VectorXd& xb, const RbfHyper& hyper, double sigma_f,
                           bool same_point) {
  if (sigma_f < 0.0) throw std::invalid_argument("noisy_latent_kernel: sigma_f must be non-negative");
  return rbf(xa, xb, hyper) + (same_point ? sigma_f * sigma_f : 0.0);
}

KernelMatrix::KernelMatrix(MatrixXd gram, double jitter) : gram_(std::move(gram)), jitter_(jitter) {
  if (gram_.rows() != gram_.cols()) throw std::invalid_argument("KernelMatrix: gram must be square");
  MatrixXd k = gram_;
  k.diagonal().array() += jitter_;
  Eigen::LLT<MatrixXd> llt(k);
  if (llt.info() != Eigen::Success) throw NumericalError("KernelMatrix: Cholesky factorization failed");
  chol_ = llt.matrixL();
  logdet_ = 2.0 * chol_.diagonal().array().log().sum();
}

MatrixXd KernelMatrix::solve(const MatrixXd& b) const {
  MatrixXd y = chol_.triangularView<Eigen::Lower>().solve(b);
  return chol_.triangularView<Eigen::Lower>().transpose().solve(y);
}

MatrixXd KernelMatrix::inverse() const { return solve(MatrixXd::Identity(dim(), dim())); }

MatrixXd KernelMatrix::half_solve(const MatrixXd& b) const {
  return chol_.triangularView<Eigen::Lower>().solve(b);
}

double default_jitter(const RbfHyper& hyper) {
  const double a = hyper.amplitude();
  return 1e-8 * a * a;
}

KernelMatrix gram(const MatrixXd& x, const RbfHyper& hyper, double extra_diag, double jitter) {
  if (x.rows() < 1) throw std::invalid_argument("gram: need at least one input row");
  const double a2 = hyper.amplitude() * hyper.amplitude();
  const double l2 = hyper.lengthscale() * hyper.lengthscale();
  MatrixXd g = (-sq_dist(x, x) / (2.0 * l2)).array().exp() * a2;
  g.diagonal().array() += extra_diag;

  // Jitter escalation: near-duplicate rows are common in real data, so try
  // increasingly larger diagonal boosts before giving up.
  double j = jitter >= 0.0 ? jitter : 1e-8 * a2;
  const double j_max = 1e-4 * a2;
  for (;;) {
    try {
      return KernelMatrix(g, j);
    } catch (const NumericalError&) {
      if (j <= 0.0) {
        j = 1e-8 * a2;
      } else {
        j *= 10.0;
        if (j > j_max)
          throw NumericalError("gram: Cholesky failed after jitter escalation to " + std::to_string(j / 10.0));
      }
    }
  }
}

MatrixXd cross_gram(const MatrixXd& x_train, const MatrixXd& x_test, const RbfHyper& hyper) {
  if (x_train.cols() != x_test.cols()) throw std::invalid_argument("cross_gram: input dimension mismatch");
  const double a2 = hyper.amplitude() * hyper.amplitude();
  const double l2 = hyper.lengthscale() * hyper.lengthscale();
  return ((-sq_dist(x_train, x_test) / (2.0 * l2)).array().exp() * a2).matrix();
}

GramGrad gram_grad(const MatrixXd& x, const RbfHyper& hyper) {
  const double a2 = hyper.amplitude() * hyper.amplitude();
  const double l2 = hyper.lengthscale() * hyper.lengthscale();
  const MatrixXd d2 = sq_dist(x, x);
  const MatrixXd k = ((-d2 / (2.0 * l2)).array().exp() * a2).matrix();
  GramGrad out;
  // d/dlog(l) [a^2 exp(-d2/(2 l^2))] = k * d2 / l^2; d/dlog(a) = 2k.
  out.d_log_lengthscale = (k.array() * d2.array() / l2).matrix();
  out.d_log_amplitude = 2.0 * k;
  return out;
}

}  // namespace gprn
