#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gprn/adam.hpp"
#include "gprn/gradient.hpp"

namespace gprn {

struct TrainOptions {
  AdamConfig adam;
  std::uint64_t seed = 0;
  double jitter = -1.0;  // < 0: default policy
  double mean_scale = 0.1;
  double cov_scale = 0.1;
  // Paper protocol initializes the kernel parameters to 1 (log = 0); the
  // noise scales start at 0.1.
  GprnHyper init_hyper{{0.0, 0.0}, {0.0, 0.0}, std::log(0.1), std::log(0.1)};
  // Ablation: freeze all Cholesky strict-lower triangles at zero.
  bool diagonal_covariance = false;
};

struct EpochRecord {
  int epoch = 0;
  ElboBreakdown elbo;
  double grad_norm = 0.0;
  double seconds = 0.0;
};

struct TrainTrace {
  std::vector<EpochRecord> epochs;
  bool aborted = false;
  std::string abort_reason;
};

// Everything prediction needs, plus the kernel caches at the final
// hyperparameters.
struct TrainedModel {
  ParamLayout layout;
  VectorXd params;
  MatrixXd x_train;
  std::optional<NormalizationRecord> normalization;
  double jitter = -1.0;
  KernelMatrix kf;
  KernelMatrix kw;
  std::uint64_t seed = 0;
  int epochs_run = 0;
  ElboBreakdown final_elbo;

  InferenceState state() const { return unpack(layout, params); }
};

// Rebuilds the kernel caches for a (params, X) pair; used by train() and by
// checkpoint loading.
TrainedModel finalize_model(ParamLayout layout, VectorXd params, MatrixXd x_train,
                            std::optional<NormalizationRecord> normalization, double jitter, std::uint64_t seed,
                            int epochs_run);

// Full-batch joint gradient ascent on the ELBO over all variational
// parameters and hyperparameters. Deterministic given (seed, options, data).
std::pair<TrainedModel, TrainTrace> train(const Dataset& data, int k_latent, const TensorizationSpec& spec,
                                          const TrainOptions& options);

void write_trace_csv(const std::string& path, const TrainTrace& trace);

}  // namespace gprn
