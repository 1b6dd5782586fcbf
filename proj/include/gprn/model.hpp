#pragma once

#include <optional>
#include <vector>

#include "gprn/kernels.hpp"
#include "gprn/tensor.hpp"

namespace gprn {

// Model hyperparameters, all unconstrained via log-space.
struct GprnHyper {
  RbfHyper theta_f;
  RbfHyper theta_w;
  double log_sigma_f = 0.0;
  double log_sigma_y = 0.0;

  double sigma_f() const { return std::exp(log_sigma_f); }
  double sigma_y() const { return std::exp(log_sigma_y); }
};

// Maps the D flat outputs onto an M-mode grid d_1 x ... x d_M. The flat
// index uses the repo-wide row-major convention (last mode fastest), so
// flat = ((i_1*d_2 + i_2)*d_3 + ...) and both directions are bijections.
class TensorizationSpec {
 public:
  // Equal mode sizes d = D^(1/M); throws unless the root is exact.
  static TensorizationSpec equal_modes(Index d_total, int modes);
  static TensorizationSpec explicit_dims(std::vector<Index> dims);

  Index D() const { return total_; }
  int modes() const { return static_cast<int>(dims_.size()); }
  const std::vector<Index>& dims() const { return dims_; }
  Index dim(int m) const { return dims_[static_cast<std::size_t>(m)]; }

  std::vector<Index> to_multi(Index flat) const;
  Index to_flat(const std::vector<Index>& multi) const;

 private:
  explicit TensorizationSpec(std::vector<Index> dims);
  std::vector<Index> dims_;
  Index total_ = 0;
};

// Per-column standardization parameters for the inputs. Columns whose
// variance is zero are left untouched (std clamped to 1) and recorded.
struct NormalizationRecord {
  VectorXd mean;
  VectorXd std;
  std::vector<Index> clamped_columns;
};

struct Dataset {
  MatrixXd X;  // N x p inputs
  MatrixXd Y;  // N x D outputs
  std::optional<NormalizationRecord> normalization;

  Index n() const { return X.rows(); }
  Index input_dim() const { return X.cols(); }
  Index output_dim() const { return Y.cols(); }
};

void validate_dataset(const Dataset& data);

// Ground-truth draw from the generative model; the latents are returned so
// recovery tests can compare against them.
struct GprnSample {
  Dataset data;
  Tensor weights;   // N x K x d_1 x ... x d_M, entry (n, k, multi(i)) = w_ik(x_n)
  MatrixXd latents; // N x K noisy latent values fhat_k(x_n)
};

GprnSample sample_gprn(const MatrixXd& x, const GprnHyper& hyper, int k_latent, const TensorizationSpec& spec,
                       std::uint64_t seed);

// cov(y_i(x_a), y_j(x_b) | W) = sum_k w_ik(x_a) kappa_fhat(x_a, x_b) w_jk(x_b)
// + [same_point] sigma_y^2, with w values supplied as D x K matrices at the
// two inputs.
double output_cross_cov(Index i, Index j, const VectorXd& xa, const VectorXd& xb, bool same_point,
                        const MatrixXd& w_at_a, const MatrixXd& w_at_b, const GprnHyper& hyper);

}  // namespace gprn
