#pragma once

#include <string>
#include <vector>

#include "gprn/elbo.hpp"
#include "gprn/oracle.hpp"

namespace gprn {

struct ElboGradient {
  ElboBreakdown value;
  VectorXd grad;  // d(total)/d(params), aligned with the ParamLayout
};

// Analytic gradient of the ELBO with respect to every unconstrained
// coordinate: posterior means, Cholesky strict-lower entries, log-diagonals,
// and the six log-hyperparameters. Derived by the chain rule through the
// closed-form bound; kernel hyperparameters enter via gram_grad and the
// trace identities d tr(K^-1 B)/dK = -K^-1 B K^-1, d log|K|/dK = K^-1.
//
// `diagonal_only` zeroes the strict-lower factor gradients (the
// diagonal-covariance ablation keeps those entries frozen at 0).
ElboGradient elbo_gradient(const ParamLayout& layout, const VectorXd& params, const MatrixXd& x, const MatrixXd& y,
                           double jitter = -1.0, bool diagonal_only = false);

// Central-finite-difference verification, reported per parameter block.
// A coordinate counts as near-zero when max(|analytic|, |numeric|) < 1e-3;
// those must match to 1e-7 absolutely, the rest to the relative tolerance
// (denominator min(|analytic|, |numeric|), so a x2-corrupted block reports
// an error of about 1).
struct GradCheckBlock {
  std::string name;
  double worst_rel = 0.0;
  double worst_abs = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckBlock> blocks;
  double worst_rel = 0.0;
  double worst_abs = 0.0;

  bool passed(double rel_tol = 1e-4, double abs_tol = 1e-7) const {
    return worst_rel <= rel_tol && worst_abs <= abs_tol;
  }
};

GradCheckReport grad_check(const ParamLayout& layout, const VectorXd& params, const MatrixXd& x, const MatrixXd& y,
                           double h = 1e-5, double jitter = -1.0);

// Same report shape, but against a caller-supplied gradient (used by the
// sabotage-sensitivity test).
GradCheckReport grad_check_against(const ParamLayout& layout, const VectorXd& params, const VectorXd& grad,
                                   const MatrixXd& x, const MatrixXd& y, double h = 1e-5, double jitter = -1.0);

}  // namespace gprn
