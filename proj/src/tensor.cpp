#include "gprn/tensor.hpp"

#include <numeric>
#include <string>

namespace gprn {

namespace {

Index checked_size(const std::vector<Index>& dims) {
  if (dims.empty()) throw std::invalid_argument("Tensor: empty dimension list");
  Index total = 1;
  for (Index d : dims) {
    if (d <= 0) throw std::invalid_argument("Tensor: non-positive dimension");
    total *= d;
  }
  return total;
}

void check_mode(const Tensor& t, Index mode) {
  if (mode < 0 || mode >= t.order())
    throw std::out_of_range("tensor mode " + std::to_string(mode) + " out of range [0, " +
                            std::to_string(t.order()) + ")");
}

}  // namespace

Tensor::Tensor(std::vector<Index> dims) : dims_(std::move(dims)) {
  data_.assign(static_cast<std::size_t>(checked_size(dims_)), 0.0);
}

Tensor::Tensor(std::vector<Index> dims, std::vector<double> data) : dims_(std::move(dims)), data_(std::move(data)) {
  if (checked_size(dims_) != static_cast<Index>(data_.size()))
    throw std::invalid_argument("Tensor: data length does not match dimensions");
}

Index Tensor::dim(Index mode) const {
  if (mode < 0 || mode >= order()) throw std::out_of_range("tensor mode out of range");
  return dims_[static_cast<std::size_t>(mode)];
}

Index Tensor::flat_index(const std::vector<Index>& multi) const {
  if (static_cast<Index>(multi.size()) != order())
    throw std::invalid_argument("flat_index: wrong number of coordinates");
  Index flat = 0;
  for (std::size_t m = 0; m < dims_.size(); ++m) {
    if (multi[m] < 0 || multi[m] >= dims_[m]) throw std::out_of_range("flat_index: coordinate out of range");
    flat = flat * dims_[m] + multi[m];
  }
  return flat;
}

std::vector<Index> Tensor::multi_index(Index flat) const {
  if (flat < 0 || flat >= size()) throw std::out_of_range("multi_index: flat index out of range");
  std::vector<Index> multi(dims_.size());
  for (std::size_t m = dims_.size(); m-- > 0;) {
    multi[m] = flat % dims_[m];
    flat /= dims_[m];
  }
  return multi;
}

MatrixXd mode_unfold(const Tensor& t, Index mode) {
  check_mode(t, mode);
  const Index rows = t.dim(mode);
  const Index cols = t.size() / rows;
  // Split the flat index around `mode`: flat = (l*rows + i)*right + r.
  Index right = 1;
  for (Index m = mode + 1; m < t.order(); ++m) right *= t.dim(m);
  const Index left = t.size() / (rows * right);

  MatrixXd out(rows, cols);
  const double* src = t.data();
  for (Index l = 0; l < left; ++l)
    for (Index i = 0; i < rows; ++i) {
      const double* block = src + (l * rows + i) * right;
      for (Index r = 0; r < right; ++r) out(i, l * right + r) = block[r];
    }
  return out;
}

Tensor mode_fold(const MatrixXd& unfolded, Index mode, const std::vector<Index>& dims) {
  Tensor t(dims);
  check_mode(t, mode);
  const Index rows = t.dim(mode);
  if (unfolded.rows() != rows || unfolded.cols() != t.size() / rows)
    throw std::invalid_argument("mode_fold: matrix shape does not match target dimensions");
  Index right = 1;
  for (Index m = mode + 1; m < t.order(); ++m) right *= t.dim(m);
  const Index left = t.size() / (rows * right);

  double* dst = t.data();
  for (Index l = 0; l < left; ++l)
    for (Index i = 0; i < rows; ++i) {
      double* block = dst + (l * rows + i) * right;
      for (Index r = 0; r < right; ++r) block[r] = unfolded(i, l * right + r);
    }
  return t;
}

Tensor slice_mode1(const Tensor& t, Index n) {
  if (t.order() < 2) throw std::invalid_argument("slice_mode1: tensor needs at least two modes");
  if (n < 0 || n >= t.dim(0)) throw std::out_of_range("slice_mode1: index out of range");
  std::vector<Index> dims(t.dims().begin() + 1, t.dims().end());
  Tensor out(dims);
  const Index block = out.size();
  std::copy(t.data() + n * block, t.data() + (n + 1) * block, out.data());
  return out;
}

VectorXd fiber(const Tensor& t, std::vector<Index> index, Index free_mode) {
  check_mode(t, free_mode);
  if (static_cast<Index>(index.size()) != t.order())
    throw std::invalid_argument("fiber: wrong number of coordinates");
  const Index len = t.dim(free_mode);
  VectorXd out(len);
  for (Index i = 0; i < len; ++i) {
    index[static_cast<std::size_t>(free_mode)] = i;
    out[i] = t.at(index);
  }
  return out;
}

Tensor ttm(const Tensor& t, const MatrixXd& a, Index mode) {
  check_mode(t, mode);
  if (a.cols() != t.dim(mode)) throw std::invalid_argument("ttm: matrix columns must match mode dimension");
  std::vector<Index> out_dims = t.dims();
  out_dims[static_cast<std::size_t>(mode)] = a.rows();
  return mode_fold(a * mode_unfold(t, mode), mode, out_dims);
}

}  // namespace gprn
