#pragma once

#include <string>
#include <vector>

#include "gprn/elbo.hpp"
#include "gprn/kron.hpp"

namespace gprn {

// Verification-only dense Gaussian algebra. Everything here expands
// Kronecker structure into explicit matrices and is guarded against
// accidental use at scale (total dimension capped at 4096).

inline constexpr Index kDenseGuard = 4096;

struct DenseGaussian {
  VectorXd mean;
  MatrixXd cov;
};

MatrixXd kron_dense(const MatrixXd& a, const MatrixXd& b);

// Explicit G_1 (x) ... (x) G_P; throws beyond the size guard.
MatrixXd dense_expansion(const KronCov& cov);

DenseGaussian dense_gaussian(const TensorNormalPosterior& qw);
DenseGaussian dense_gaussian(const MatrixNormalPosterior& qf);

// Prior N(0, K (x) I_copies) for GP fibers stacked under the vec convention.
DenseGaussian dense_fiber_prior(const KernelMatrix& kernel, Index copies);

// KL(q || p) by the standard dense formula (Cholesky-based).
double dense_kl(const DenseGaussian& q, const DenseGaussian& p);

double dense_log_pdf(const DenseGaussian& g, const VectorXd& x);

VectorXd dense_sample(const DenseGaussian& g, Rng& rng);

// Brute-force ELBO: dense KL terms plus the likelihood expectation computed
// from explicit entries of the expanded covariances -- no Kronecker
// shortcuts anywhere. Guarded to N*K*D <= 4096.
ElboBreakdown dense_oracle_elbo(const InferenceState& state, const Dataset& data, double jitter = -1.0);

// The q-equals-prior point: Sigma and Gamma_1 carry the factored kernels,
// every other factor is the identity, all means are zero. Both KL terms
// vanish there once the dropped constants are restored.
InferenceState prior_matched_state(const Dataset& data, const GprnHyper& hyper, Index k,
                                   const TensorizationSpec& spec, double jitter = -1.0);

// Randomized structured-vs-dense equivalence suite (the `oracle` CLI command
// and acceptance criteria run this). Each case compares the structured ELBO
// against dense_oracle_elbo and checks the KL calibration point.
struct OracleCase {
  std::string name;
  double structured = 0.0;
  double dense = 0.0;
  double rel_error = 0.0;
  bool passed = false;
};

struct OracleReport {
  std::vector<OracleCase> cases;
  int failures = 0;
  double worst_rel_error = 0.0;
};

OracleReport run_oracle_suite(int instances, std::uint64_t seed, double rel_tol = 1e-9);

}  // namespace gprn
