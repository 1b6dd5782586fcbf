#pragma once

#include <string>
#include <utility>
#include <vector>

#include "gprn/cholesky.hpp"
#include "gprn/model.hpp"
#include "gprn/tensor.hpp"

namespace gprn {

// q(F) with F the N x K latent values: vec-covariance Sigma (x) Omega under
// the row-major vec convention, Sigma = row_chol row_chol^T (N x N),
// Omega = col_chol col_chol^T (K x K).
struct MatrixNormalPosterior {
  MatrixXd mean;
  CholFactor row_chol;
  CholFactor col_chol;

  Index n() const { return mean.rows(); }
  Index k() const { return mean.cols(); }
  Index param_count() const { return mean.size() + row_chol.param_count() + col_chol.param_count(); }
};

// q(W) over the N x K x d_1 x ... x d_M weight tensor: vec-covariance
// G_1 (x) ... (x) G_{M+2} with G_1 N x N, G_2 K x K, G_{2+m} d_m x d_m.
struct TensorNormalPosterior {
  Tensor mean;
  std::vector<CholFactor> mode_chols;

  Index n() const { return mean.dim(0); }
  Index k() const { return mean.dim(1); }
  Index d_total() const { return mean.size() / (n() * k()); }
  Index cov_param_count() const;
};

// The n-th mode-1 marginal of q(W), reorganized as a D x K matrix normal:
// column covariance G_2, row covariance row_scale * (G_3 (x) ... (x) G_{M+2})
// with row_scale = G_1[n, n].
struct MarginalWeightSlice {
  MatrixXd mean;  // D x K
  double row_scale;
};
MarginalWeightSlice marginal_weight_slice(const TensorNormalPosterior& qw, Index n);

// Contiguous K x D view of the n-th mode-1 slice of the mean tensor;
// E[W_n] (D x K, rows = flat outputs) is its transpose.
ConstRowMajorMap weight_slice_kd(const Tensor& mean, Index n);

// Flat-vector layout of every unconstrained parameter. Pure arithmetic over
// the dimensions -- constructing a layout never allocates parameter storage,
// so it is valid for sizes whose mean tensor could not be materialized.
//
// Segment order: q(F) mean (row-major), q(F) row/col Cholesky factors,
// q(W) mean (tensor vec), q(W) per-mode factors, then the six
// log-hyperparameters (l_f, a_f, l_w, a_w, sigma_f, sigma_y).
class ParamLayout {
 public:
  struct Segment {
    std::string name;
    Index offset = 0;
    Index length = 0;
  };

  ParamLayout(Index n, Index k, const TensorizationSpec& spec);

  Index n() const { return n_; }
  Index k() const { return k_; }
  const TensorizationSpec& spec() const { return spec_; }
  // Mode dimensions of the weight tensor: (N, K, d_1, ..., d_M).
  const std::vector<Index>& weight_dims() const { return weight_dims_; }

  const Segment& qf_mean() const { return segments_[0]; }
  const Segment& qf_row_chol() const { return segments_[1]; }
  const Segment& qf_col_chol() const { return segments_[2]; }
  const Segment& qw_mean() const { return segments_[3]; }
  const Segment& qw_chol(int m) const { return segments_[4 + static_cast<std::size_t>(m)]; }
  const Segment& hyper() const { return segments_.back(); }
  const std::vector<Segment>& segments() const { return segments_; }

  Index total() const { return total_; }
  // Covariance parameters only: N(N+1)/2 + K(K+1)/2 + sum_m d_m(d_m+1)/2.
  Index covariance_param_count() const;

 private:
  Index n_ = 0;
  Index k_ = 0;
  TensorizationSpec spec_;
  std::vector<Index> weight_dims_;
  std::vector<Segment> segments_;
  Index total_ = 0;
};

struct InferenceState {
  MatrixNormalPosterior qf;
  TensorNormalPosterior qw;
  GprnHyper hyper;
};

VectorXd pack(const ParamLayout& layout, const InferenceState& state);
InferenceState unpack(const ParamLayout& layout, const VectorXd& params);

// Mean entries ~ N(0, mean_scale^2); every Cholesky factor = cov_scale * I.
std::pair<MatrixNormalPosterior, TensorNormalPosterior> init_posteriors(Index n, Index k,
                                                                        const TensorizationSpec& spec,
                                                                        std::uint64_t seed, double mean_scale = 0.1,
                                                                        double cov_scale = 0.1);

}  // namespace gprn
