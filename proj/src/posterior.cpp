#include "gprn/posterior.hpp"

namespace gprn {

Index TensorNormalPosterior::cov_param_count() const {
  Index count = 0;
  for (const auto& f : mode_chols) count += f.param_count();
  return count;
}

ConstRowMajorMap weight_slice_kd(const Tensor& mean, Index n) {
  if (mean.order() < 2) throw std::invalid_argument("weight_slice_kd: tensor needs at least two modes");
  if (n < 0 || n >= mean.dim(0)) throw std::out_of_range("weight_slice_kd: slice index out of range");
  const Index k = mean.dim(1);
  const Index d = mean.size() / (mean.dim(0) * k);
  // Mode 1 is slowest-varying, so the slice is one contiguous block laid out
  // as [k][flat output].
  return ConstRowMajorMap(mean.data() + n * k * d, k, d);
}

MarginalWeightSlice marginal_weight_slice(const TensorNormalPosterior& qw, Index n) {
  if (n < 0 || n >= qw.n()) throw std::out_of_range("marginal_weight_slice: index out of range");
  const MatrixXd gamma1 = qw.mode_chols[0].covariance();
  return MarginalWeightSlice{weight_slice_kd(qw.mean, n).transpose(), gamma1(n, n)};
}

ParamLayout::ParamLayout(Index n, Index k, const TensorizationSpec& spec) : n_(n), k_(k), spec_(spec) {
  if (n < 1 || k < 1) throw std::invalid_argument("ParamLayout: N and K must be positive");
  weight_dims_ = {n, k};
  weight_dims_.insert(weight_dims_.end(), spec.dims().begin(), spec.dims().end());

  Index offset = 0;
  auto push = [&](const std::string& name, Index length) {
    segments_.push_back({name, offset, length});
    offset += length;
  };
  push("qf_mean", n * k);
  push("qf_row_chol", n * (n + 1) / 2);
  push("qf_col_chol", k * (k + 1) / 2);
  Index mean_len = 1;
  for (Index d : weight_dims_) mean_len *= d;
  push("qw_mean", mean_len);
  for (std::size_t m = 0; m < weight_dims_.size(); ++m) {
    const Index d = weight_dims_[m];
    push("qw_chol" + std::to_string(m + 1), d * (d + 1) / 2);
  }
  push("hyper", 6);
  total_ = offset;
}

Index ParamLayout::covariance_param_count() const {
  Index count = 0;
  for (Index d : weight_dims_) count += d * (d + 1) / 2;
  return count;
}

VectorXd pack(const ParamLayout& layout, const InferenceState& state) {
  if (state.qf.n() != layout.n() || state.qf.k() != layout.k() || state.qw.mean.dims() != layout.weight_dims())
    throw std::invalid_argument("pack: state dimensions do not match layout");
  VectorXd v(layout.total());

  const auto& qf_mean = layout.qf_mean();
  // Row-major mean packing to match the tensor vec convention.
  RowMajorMap(v.data() + qf_mean.offset, state.qf.mean.rows(), state.qf.mean.cols()) = state.qf.mean;
  state.qf.row_chol.pack(v.data() + layout.qf_row_chol().offset);
  state.qf.col_chol.pack(v.data() + layout.qf_col_chol().offset);

  Eigen::Map<VectorXd>(v.data() + layout.qw_mean().offset, state.qw.mean.size()) = state.qw.mean.vec();
  const int n_modes = static_cast<int>(layout.weight_dims().size());
  if (static_cast<int>(state.qw.mode_chols.size()) != n_modes)
    throw std::invalid_argument("pack: wrong number of weight-mode factors");
  for (int m = 0; m < n_modes; ++m) state.qw.mode_chols[static_cast<std::size_t>(m)].pack(v.data() + layout.qw_chol(m).offset);

  double* h = v.data() + layout.hyper().offset;
  h[0] = state.hyper.theta_f.log_lengthscale;
  h[1] = state.hyper.theta_f.log_amplitude;
  h[2] = state.hyper.theta_w.log_lengthscale;
  h[3] = state.hyper.theta_w.log_amplitude;
  h[4] = state.hyper.log_sigma_f;
  h[5] = state.hyper.log_sigma_y;
  return v;
}

InferenceState unpack(const ParamLayout& layout, const VectorXd& params) {
  if (params.size() != layout.total()) throw std::invalid_argument("unpack: parameter vector length mismatch");
  const Index n = layout.n();
  const Index k = layout.k();

  MatrixXd qf_mean = ConstRowMajorMap(params.data() + layout.qf_mean().offset, n, k);
  CholFactor row = CholFactor::unpack(n, params.data() + layout.qf_row_chol().offset);
  CholFactor col = CholFactor::unpack(k, params.data() + layout.qf_col_chol().offset);

  Tensor qw_mean(layout.weight_dims());
  qw_mean.vec() = Eigen::Map<const VectorXd>(params.data() + layout.qw_mean().offset, qw_mean.size());
  std::vector<CholFactor> chols;
  const int n_modes = static_cast<int>(layout.weight_dims().size());
  chols.reserve(static_cast<std::size_t>(n_modes));
  for (int m = 0; m < n_modes; ++m)
    chols.push_back(CholFactor::unpack(layout.weight_dims()[static_cast<std::size_t>(m)],
                                       params.data() + layout.qw_chol(m).offset));

  const double* h = params.data() + layout.hyper().offset;
  GprnHyper hyper;
  hyper.theta_f = {h[0], h[1]};
  hyper.theta_w = {h[2], h[3]};
  hyper.log_sigma_f = h[4];
  hyper.log_sigma_y = h[5];

  return InferenceState{MatrixNormalPosterior{std::move(qf_mean), std::move(row), std::move(col)},
                        TensorNormalPosterior{std::move(qw_mean), std::move(chols)}, hyper};
}

std::pair<MatrixNormalPosterior, TensorNormalPosterior> init_posteriors(Index n, Index k,
                                                                        const TensorizationSpec& spec,
                                                                        std::uint64_t seed, double mean_scale,
                                                                        double cov_scale) {
  if (n < 1 || k < 1) throw std::invalid_argument("init_posteriors: N and K must be positive");
  Rng rng(seed);
  MatrixXd f_mean = mean_scale * normal_matrix(rng, n, k);

  std::vector<Index> wdims{n, k};
  wdims.insert(wdims.end(), spec.dims().begin(), spec.dims().end());
  Tensor w_mean(wdims);
  {
    std::normal_distribution<double> dist(0.0, 1.0);
    for (Index i = 0; i < w_mean.size(); ++i) w_mean[i] = mean_scale * dist(rng);
  }

  std::vector<CholFactor> chols;
  chols.reserve(wdims.size());
  for (Index d : wdims) chols.push_back(CholFactor::scaled_identity(d, cov_scale));

  MatrixNormalPosterior qf{std::move(f_mean), CholFactor::scaled_identity(n, cov_scale),
                           CholFactor::scaled_identity(k, cov_scale)};
  TensorNormalPosterior qw{std::move(w_mean), std::move(chols)};
  return {std::move(qf), std::move(qw)};
}

}  // namespace gprn
