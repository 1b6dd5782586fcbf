#pragma once

#include <string>
#include <utility>
#include <vector>

#include "gprn/model.hpp"

namespace gprn {

// CSV format: header row `x0,...,x{p-1},y0,...,y{D-1}`, decimal floats,
// UTF-8. Missing or non-finite cells are rejected with the offending row and
// column named.
Dataset load_csv(const std::string& path);
// 17 significant digits, so save -> load round-trips exactly.
void save_csv(const std::string& path, const Dataset& data);

// Zero-mean unit-variance per input column (targets stay raw). Zero-variance
// columns keep std = 1 and are recorded in the returned dataset's record.
Dataset normalize(const Dataset& data);
// Transforms test inputs with the TRAIN record.
MatrixXd apply_normalization(const NormalizationRecord& record, const MatrixXd& x);
MatrixXd denormalize(const NormalizationRecord& record, const MatrixXd& x);

// Disjoint, seed-reproducible random split. Row counts are
// round(fraction * N); train_fraction = 1 leaves the test set empty.
std::pair<Dataset, Dataset> split(const Dataset& data, double train_fraction, double test_fraction,
                                  std::uint64_t seed);

struct MetricsReport {
  double mae = 0.0;
  double rmse = 0.0;
  double nrmse = 0.0;
  // NRMSE normalizer = range of the test targets; recorded because the
  // definition is not universal.
  double normalizer = 0.0;
  bool zero_range = false;  // NRMSE reported as plain RMSE
  VectorXd per_output_mae;
  bool has_predictive_loglik = false;
  double predictive_loglik = 0.0;
};

MetricsReport metrics(const MatrixXd& y_pred, const MatrixXd& y_test);

}  // namespace gprn
