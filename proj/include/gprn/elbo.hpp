#pragma once

#include "gprn/posterior.hpp"

namespace gprn {

// The three ELBO components, kept separately for diagnostics and oracle
// comparison. total = exp_loglik - kl_w - kl_f always holds by construction.
struct ElboBreakdown {
  double kl_w = 0.0;
  double kl_f = 0.0;
  double exp_loglik = 0.0;
  double total = 0.0;
};

// KL(q(W) || p(W)) with p(W) the per-fiber GP prior N(0, K_w) rewritten as
// N(0, K_w (x) I). Computed entirely from the per-mode factors:
//   1/2 [ tr(K_w^-1 G_1) prod_{m>=2} tr(G_m) + tr(K_w^-1 U_1 U_1^T)
//         + DK log|K_w| - sum_m (NDK/t_m) log|G_m| - NDK ]
// where U_1 is the mode-1 unfolding of the mean tensor. The trailing -NDK
// restores the constant so that KL(p||p) = 0.
double kl_weights(const TensorNormalPosterior& qw, const KernelMatrix& kw);

// KL(q(F) || p(F)) with prior N(0, K_fhat (x) I):
//   1/2 [ tr(K^-1 Sigma) tr(Omega) + tr(K^-1 M M^T) + K log|K|
//         - K log|Sigma| - N log|Omega| - NK ].
double kl_latent(const MatrixNormalPosterior& qf, const KernelMatrix& kf);

// E[W_n^T W_n] = G_1[n,n] G_2 prod_{m>=3} tr(G_m) + E[W_n]^T E[W_n].
MatrixXd moment_wtw(const TensorNormalPosterior& qw, Index n);

// E[h_n h_n^T] = Sigma[n,n] Omega + E[h_n] E[h_n]^T.
MatrixXd moment_hht(const MatrixNormalPosterior& qf, Index n);

// E_q[log p(Y | X, W, F)] =
//   -(ND/2) log(2 pi) - ND log sigma_y
//   - 1/(2 sigma_y^2) sum_n [ y_n^T y_n - 2 y_n^T E[W_n] E[h_n]
//                             + tr(E[W_n^T W_n] E[h_n h_n^T]) ].
// The 2-pi constant is kept so the value is comparable to exact
// log-densities. Never touches any array larger than N*D*K entries.
double expected_loglik(const MatrixNormalPosterior& qf, const TensorNormalPosterior& qw, const MatrixXd& y,
                       double sigma_y);

// Full bound; builds both kernel matrices from the state's hyperparameters
// (jitter < 0 selects the default escalation policy).
ElboBreakdown elbo(const InferenceState& state, const Dataset& data, double jitter = -1.0);

// Variant reusing caller-supplied kernel matrices (they must match the
// state's hyperparameters; the training loop builds them once per epoch).
ElboBreakdown elbo_with_kernels(const InferenceState& state, const MatrixXd& y, const KernelMatrix& kf,
                                const KernelMatrix& kw);

}  // namespace gprn
