#pragma once

#include "gprn/train.hpp"

namespace gprn {

// Variational posterior projected to test inputs. Weight means come from one
// shared solve K_w^-1 U_1 reused across all D*K fibers; the conditional
// variances are the scalar GP variances per test point (shared across
// fibers because all weights share K_w and all latents share K_fhat).
struct ProjectedPosterior {
  Index n_test = 0;
  Index d_out = 0;
  Index k_latent = 0;
  // Row s holds the K x D block of E[W(x*_s)] (same layout as mean slices).
  MatrixXd mean_w_star;  // M* x (K*D)
  MatrixXd mean_f_star;  // M* x K
  VectorXd var_w;        // kappa_w(x*,x*) - k*^T K_w^-1 k*
  VectorXd var_f;        // kappa_fhat(x*,x*) - k*^T K_fhat^-1 k*
  int clamped_variances = 0;  // negatives from cancellation clamped to 0

  MatrixXd weight_mean(Index s) const;  // E[W(x*_s)] as D x K
};

ProjectedPosterior project(const TrainedModel& model, const MatrixXd& x_star);

// E[y*_s] = E[W(x*_s)] E[fhat(x*_s)], one row per test point.
MatrixXd predict_mean(const ProjectedPosterior& proj);

// Empirical predictive log likelihood: (1/T) sum_t log N(Y* | W*_t F*_t,
// sigma_y^2 I), with each sample drawn by the conditional procedure (sample
// at the training inputs from q, then condition each GP forward).
// Deterministic given `seed`; per-sample seeds are derived so the result is
// invariant to evaluation order. `per_output` switches to the large-D mode
// that treats every output fiber independently (same estimand, avoids
// materializing full weight-tensor samples).
double predictive_loglik(const TrainedModel& model, const MatrixXd& x_star, const MatrixXd& y_star, int samples,
                         std::uint64_t seed, bool per_output = false);

// Per-sample terms of the estimator above; term t depends only on
// (seed, t), never on how many other samples are drawn.
VectorXd predictive_loglik_terms(const TrainedModel& model, const MatrixXd& x_star, const MatrixXd& y_star,
                                 int samples, std::uint64_t seed, bool per_output = false);

}  // namespace gprn
