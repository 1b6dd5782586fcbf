#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>

namespace gprn {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// Row-major views are used to reinterpret contiguous tensor blocks as
// matrices without copying.
using RowMajorMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMajorMap = Eigen::Map<RowMajorMatrix>;
using ConstRowMajorMap = Eigen::Map<const RowMajorMatrix>;

// Error taxonomy mirrored by the CLI exit codes.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Rng = std::mt19937_64;

// splitmix64 mix; derives independent stream seeds from one base seed so
// parallel or per-sample consumers never share a generator.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline VectorXd normal_vector(Rng& rng, Index n) {
  std::normal_distribution<double> dist(0.0, 1.0);
  VectorXd v(n);
  for (Index i = 0; i < n; ++i) v[i] = dist(rng);
  return v;
}

inline MatrixXd normal_matrix(Rng& rng, Index rows, Index cols) {
  std::normal_distribution<double> dist(0.0, 1.0);
  MatrixXd m(rows, cols);
  // Row-major fill order so the stream matches tensor (last-mode-fastest)
  // layouts.
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
  return m;
}

}  // namespace gprn
