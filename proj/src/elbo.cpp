#include "gprn/elbo.hpp"

#include <cmath>
#include <numbers>

namespace gprn {

namespace {

// Product of tr(G_m) over the weight-tensor modes >= `from` (0-based).
double trace_product_from(const TensorNormalPosterior& qw, std::size_t from) {
  double prod = 1.0;
  for (std::size_t m = from; m < qw.mode_chols.size(); ++m) prod *= qw.mode_chols[m].trace_cov();
  return prod;
}

void check_qw_kernel(const TensorNormalPosterior& qw, const KernelMatrix& kw) {
  if (qw.mode_chols.empty() || qw.mode_chols[0].dim() != kw.dim() || qw.n() != kw.dim())
    throw std::invalid_argument("kl_weights: G_1 and K_w dimensions disagree");
}

}  // namespace

double kl_weights(const TensorNormalPosterior& qw, const KernelMatrix& kw) {
  check_qw_kernel(qw, kw);
  const Index n = qw.n();
  const Index kd = qw.mean.size() / n;
  const double dk = static_cast<double>(kd);
  const double nkd = static_cast<double>(qw.mean.size());

  // tr(K_w^-1 G_1) = ||L_K^-1 L_1||_F^2.
  const double tr_kinv_g1 = kw.half_solve(qw.mode_chols[0].factor()).squaredNorm();
  const double trace_rest = trace_product_from(qw, 1);

  // Mode-1 unfolding is a contiguous N x (KD) view of the mean tensor.
  ConstRowMajorMap u1(qw.mean.data(), n, kd);
  const double quad = kw.half_solve(MatrixXd(u1)).squaredNorm();

  double logdet_q = 0.0;
  for (const auto& f : qw.mode_chols) logdet_q += (nkd / static_cast<double>(f.dim())) * f.logdet_cov();

  return 0.5 * (tr_kinv_g1 * trace_rest + quad + dk * kw.logdet() - logdet_q - nkd);
}

double kl_latent(const MatrixNormalPosterior& qf, const KernelMatrix& kf) {
  if (qf.n() != kf.dim()) throw std::invalid_argument("kl_latent: Sigma and K_fhat dimensions disagree");
  const double n = static_cast<double>(qf.n());
  const double k = static_cast<double>(qf.k());

  const double tr_kinv_sigma = kf.half_solve(qf.row_chol.factor()).squaredNorm();
  const double tr_omega = qf.col_chol.trace_cov();
  const double quad = kf.half_solve(qf.mean).squaredNorm();

  return 0.5 * (tr_kinv_sigma * tr_omega + quad + k * kf.logdet() - k * qf.row_chol.logdet_cov() -
                n * qf.col_chol.logdet_cov() - n * k);
}

MatrixXd moment_wtw(const TensorNormalPosterior& qw, Index n) {
  if (n < 0 || n >= qw.n()) throw std::out_of_range("moment_wtw: slice index out of range");
  const MatrixXd gamma1 = qw.mode_chols[0].covariance();
  const MatrixXd gamma2 = qw.mode_chols[1].covariance();
  const double trace_rest = trace_product_from(qw, 2);
  ConstRowMajorMap b = weight_slice_kd(qw.mean, n);  // K x D
  return gamma1(n, n) * trace_rest * gamma2 + b * b.transpose();
}

MatrixXd moment_hht(const MatrixNormalPosterior& qf, Index n) {
  if (n < 0 || n >= qf.n()) throw std::out_of_range("moment_hht: row index out of range");
  const MatrixXd sigma = qf.row_chol.covariance();
  const VectorXd m_n = qf.mean.row(n).transpose();
  return sigma(n, n) * qf.col_chol.covariance() + m_n * m_n.transpose();
}

double expected_loglik(const MatrixNormalPosterior& qf, const TensorNormalPosterior& qw, const MatrixXd& y,
                       double sigma_y) {
  if (sigma_y <= 0.0) throw std::invalid_argument("expected_loglik: sigma_y must be positive");
  const Index n = y.rows();
  const Index d = y.cols();
  const Index k = qf.k();
  if (qw.n() != n || qf.n() != n || qw.d_total() != d || qw.k() != k)
    throw std::invalid_argument("expected_loglik: shape mismatch");

  const MatrixXd sigma = qf.row_chol.covariance();
  const MatrixXd omega = qf.col_chol.covariance();
  const MatrixXd gamma1 = qw.mode_chols[0].covariance();
  const MatrixXd gamma2 = qw.mode_chols[1].covariance();
  const MatrixXd& l_omega = qf.col_chol.factor();
  const double trace_rest = trace_product_from(qw, 2);
  const double tr_g2_omega = (gamma2 * omega).trace();

  double quad_sum = 0.0;
  for (Index row = 0; row < n; ++row) {
    ConstRowMajorMap b = weight_slice_kd(qw.mean, row);  // K x D, E[W_n] = b^T
    const VectorXd m_n = qf.mean.row(row).transpose();
    const VectorXd wm = b.transpose() * m_n;  // E[W_n] E[h_n]
    const double c_n = gamma1(row, row);
    const double s_nn = sigma(row, row);

    // tr(E[W_n^T W_n] E[h_n h_n^T]) expanded so no D x D object appears:
    //   c_n tr_rest (s_nn tr(G_2 Omega) + m_n^T G_2 m_n)
    //   + s_nn ||E[W_n] L_Omega||_F^2 + ||E[W_n] m_n||^2.
    const double trace_term = c_n * trace_rest * (s_nn * tr_g2_omega + m_n.dot(gamma2 * m_n)) +
                              s_nn * (b.transpose() * l_omega).squaredNorm() + wm.squaredNorm();
    quad_sum += y.row(row).squaredNorm() - 2.0 * y.row(row).dot(wm) + trace_term;
  }

  const double nd = static_cast<double>(n * d);
  return -0.5 * nd * std::log(2.0 * std::numbers::pi) - nd * std::log(sigma_y) -
         quad_sum / (2.0 * sigma_y * sigma_y);
}

ElboBreakdown elbo_with_kernels(const InferenceState& state, const MatrixXd& y, const KernelMatrix& kf,
                                const KernelMatrix& kw) {
  ElboBreakdown b;
  b.kl_w = kl_weights(state.qw, kw);
  b.kl_f = kl_latent(state.qf, kf);
  b.exp_loglik = expected_loglik(state.qf, state.qw, y, state.hyper.sigma_y());
  b.total = b.exp_loglik - b.kl_w - b.kl_f;
  return b;
}

ElboBreakdown elbo(const InferenceState& state, const Dataset& data, double jitter) {
  const double sf = state.hyper.sigma_f();
  const KernelMatrix kf = gram(data.X, state.hyper.theta_f, sf * sf, jitter);
  const KernelMatrix kw = gram(data.X, state.hyper.theta_w, 0.0, jitter);
  return elbo_with_kernels(state, data.Y, kf, kw);
}

}  // namespace gprn
