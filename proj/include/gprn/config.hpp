#pragma once

#include <string>
#include <vector>

#include "gprn/train.hpp"

namespace gprn {

// Run configuration for the CLI. JSON file first, then flag overrides.
struct RunConfig {
  std::string dataset_path;
  int k = 2;
  // Tensorization: explicit dims win; otherwise `tensor_modes` equal modes
  // (1 keeps the original flat output space).
  int tensor_modes = 1;
  std::vector<Index> tensor_dims;
  AdamConfig adam;
  std::uint64_t seed = 0;
  double train_fraction = 0.8;
  double test_fraction = 0.2;
  double jitter = -1.0;
  std::string output_dir = ".";
  bool normalize_inputs = true;
  double mean_scale = 0.1;
  double cov_scale = 0.1;
  double init_lengthscale = 1.0;
  double init_amplitude = 1.0;
  double init_sigma_f = 0.1;
  double init_sigma_y = 0.1;
  bool diagonal_covariance = false;
  int predictive_samples = 0;  // evaluate: 0 skips the predictive log likelihood

  TrainOptions train_options() const;
  TensorizationSpec tensorization(Index d_total) const;
};

RunConfig load_run_config(const std::string& path);
void validate(const RunConfig& config);

}  // namespace gprn
