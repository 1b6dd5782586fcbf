#pragma once

#include <vector>

#include "gprn/common.hpp"

namespace gprn {

// Dense multi-way array.
//
// Layout convention (used by every module in this repo): storage is
// row-major, i.e. vec(T) enumerates entries with the LAST mode varying
// fastest. All Kronecker-structured covariances list their factors in mode
// order under this same convention, so cov(vec(T)) = G_1 (x) ... (x) G_M
// when G_m is the covariance of mode m.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<Index> dims);
  Tensor(std::vector<Index> dims, std::vector<double> data);

  static Tensor zeros(std::vector<Index> dims) { return Tensor(std::move(dims)); }

  Index order() const { return static_cast<Index>(dims_.size()); }
  Index dim(Index mode) const;
  const std::vector<Index>& dims() const { return dims_; }
  Index size() const { return static_cast<Index>(data_.size()); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  Eigen::Map<VectorXd> vec() { return {data_.data(), size()}; }
  Eigen::Map<const VectorXd> vec() const { return {data_.data(), size()}; }

  double operator[](Index flat) const { return data_[static_cast<std::size_t>(flat)]; }
  double& operator[](Index flat) { return data_[static_cast<std::size_t>(flat)]; }

  double at(const std::vector<Index>& multi) const { return data_[static_cast<std::size_t>(flat_index(multi))]; }
  double& at(const std::vector<Index>& multi) { return data_[static_cast<std::size_t>(flat_index(multi))]; }

  Index flat_index(const std::vector<Index>& multi) const;
  std::vector<Index> multi_index(Index flat) const;

 private:
  std::vector<Index> dims_;
  std::vector<double> data_;
};

// Mode-m unfolding: rows index mode m; columns enumerate the remaining modes
// lexicographically in their original order (slowest-varying first, last
// remaining mode fastest).
MatrixXd mode_unfold(const Tensor& t, Index mode);

// Inverse of mode_unfold for the stated column convention.
Tensor mode_fold(const MatrixXd& unfolded, Index mode, const std::vector<Index>& dims);

// The n-th slice along mode 1 (one fewer mode in the result).
Tensor slice_mode1(const Tensor& t, Index n);

// Vector along `free_mode`; all other coordinates taken from `index`
// (index[free_mode] is ignored).
VectorXd fiber(const Tensor& t, std::vector<Index> index, Index free_mode);

// Tensor-times-matrix along `mode`: result dim at `mode` becomes a.rows(),
// with result = fold(a * unfold(t, mode)).
Tensor ttm(const Tensor& t, const MatrixXd& a, Index mode);

}  // namespace gprn
