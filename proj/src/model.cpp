#include "gprn/model.hpp"

#include <cmath>
#include <string>

namespace gprn {

TensorizationSpec::TensorizationSpec(std::vector<Index> dims) : dims_(std::move(dims)) {
  if (dims_.empty()) throw std::invalid_argument("TensorizationSpec: empty dimension list");
  total_ = 1;
  for (Index d : dims_) {
    if (d <= 0) throw std::invalid_argument("TensorizationSpec: non-positive mode dimension");
    total_ *= d;
  }
}

TensorizationSpec TensorizationSpec::equal_modes(Index d_total, int modes) {
  if (d_total <= 0 || modes <= 0) throw std::invalid_argument("TensorizationSpec: D and M must be positive");
  const double root = std::pow(static_cast<double>(d_total), 1.0 / modes);
  const Index d = static_cast<Index>(std::llround(root));
  Index check = 1;
  for (int m = 0; m < modes; ++m) check *= d;
  if (check != d_total)
    throw std::invalid_argument("TensorizationSpec: " + std::to_string(d_total) + " has no integer " +
                                std::to_string(modes) + "-th root; pass explicit dims");
  return TensorizationSpec(std::vector<Index>(static_cast<std::size_t>(modes), d));
}

TensorizationSpec TensorizationSpec::explicit_dims(std::vector<Index> dims) { return TensorizationSpec(std::move(dims)); }

std::vector<Index> TensorizationSpec::to_multi(Index flat) const {
  if (flat < 0 || flat >= total_) throw std::out_of_range("TensorizationSpec: flat index out of range");
  std::vector<Index> multi(dims_.size());
  for (std::size_t m = dims_.size(); m-- > 0;) {
    multi[m] = flat % dims_[m];
    flat /= dims_[m];
  }
  return multi;
}

Index TensorizationSpec::to_flat(const std::vector<Index>& multi) const {
  if (multi.size() != dims_.size()) throw std::invalid_argument("TensorizationSpec: wrong coordinate count");
  Index flat = 0;
  for (std::size_t m = 0; m < dims_.size(); ++m) {
    if (multi[m] < 0 || multi[m] >= dims_[m]) throw std::out_of_range("TensorizationSpec: coordinate out of range");
    flat = flat * dims_[m] + multi[m];
  }
  return flat;
}

void validate_dataset(const Dataset& data) {
  if (data.X.rows() != data.Y.rows()) throw DataError("dataset: X and Y row counts differ");
  if (data.X.rows() < 1) throw DataError("dataset: empty");
  if (!data.X.allFinite() || !data.Y.allFinite()) throw DataError("dataset: non-finite entries");
}

GprnSample sample_gprn(const MatrixXd& x, const GprnHyper& hyper, int k_latent, const TensorizationSpec& spec,
                       std::uint64_t seed) {
  if (x.rows() < 1 || k_latent < 1) throw std::invalid_argument("sample_gprn: need N >= 1 and K >= 1");
  const Index n = x.rows();
  const Index k = k_latent;
  const Index d_total = spec.D();
  const double sigma_f = hyper.sigma_f();
  const double sigma_y = hyper.sigma_y();

  const KernelMatrix kf = gram(x, hyper.theta_f, sigma_f * sigma_f);
  const KernelMatrix kw = gram(x, hyper.theta_w, 0.0);

  Rng rng(seed);

  // Latents column by column: fhat_k = L_fhat z.
  MatrixXd latents(n, k);
  for (Index j = 0; j < k; ++j) latents.col(j) = kf.chol().triangularView<Eigen::Lower>() * normal_vector(rng, n);

  // Weight fibers w_ik over the inputs, one GP draw per (k, flat output).
  std::vector<Index> wdims{n, k};
  wdims.insert(wdims.end(), spec.dims().begin(), spec.dims().end());
  Tensor weights(wdims);
  const Index kd = k * d_total;
  for (Index j = 0; j < k; ++j)
    for (Index i = 0; i < d_total; ++i) {
      const VectorXd w = kw.chol().triangularView<Eigen::Lower>() * normal_vector(rng, n);
      for (Index row = 0; row < n; ++row) weights[row * kd + j * d_total + i] = w[row];
    }

  // y_n = W_n h_n + sigma_y z_n.
  MatrixXd y(n, d_total);
  for (Index row = 0; row < n; ++row) {
    ConstRowMajorMap w_n(weights.data() + row * kd, k, d_total);
    y.row(row) = (w_n.transpose() * latents.row(row).transpose()).transpose();
  }
  for (Index row = 0; row < n; ++row) y.row(row) += sigma_y * normal_vector(rng, d_total).transpose();

  GprnSample out{Dataset{x, std::move(y), std::nullopt}, std::move(weights), std::move(latents)};
  validate_dataset(out.data);
  return out;
}

double output_cross_cov(Index i, Index j, const VectorXd& xa, const VectorXd& xb, bool same_point,
                        const MatrixXd& w_at_a, const MatrixXd& w_at_b, const GprnHyper& hyper) {
  if (w_at_a.rows() != w_at_b.rows() || w_at_a.cols() != w_at_b.cols())
    throw std::invalid_argument("output_cross_cov: weight matrices must agree in shape");
  const double kf = noisy_latent_kernel(xa, xb, hyper.theta_f, hyper.sigma_f(), same_point);
  double cov = 0.0;
  for (Index kk = 0; kk < w_at_a.cols(); ++kk) cov += w_at_a(i, kk) * kf * w_at_b(j, kk);
  if (same_point && i == j) cov += hyper.sigma_y() * hyper.sigma_y();
  return cov;
}

}  // namespace gprn
