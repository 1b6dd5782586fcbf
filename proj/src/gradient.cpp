#include "gprn/gradient.hpp"

#include <cmath>
#include <numbers>

namespace gprn {

namespace {

// Gradient w.r.t. the raw factor parameters given d(f)/d(Gamma) for
// Gamma = L L^T: dL = (G + G^T) L, strict-lower entries pass through, the
// diagonal picks up the log-reparameterization factor L_ii.
void chain_to_raw(const MatrixXd& g_cov, const CholFactor& factor, bool diagonal_only, double* out) {
  const MatrixXd& l = factor.factor();
  const MatrixXd gl = (g_cov + g_cov.transpose()) * l;
  const Index dim = factor.dim();
  Index p = 0;
  for (Index i = 0; i < dim; ++i) {
    for (Index j = 0; j < i; ++j) out[p++] = diagonal_only ? 0.0 : gl(i, j);
    out[p++] = gl(i, i) * l(i, i);
  }
}

MatrixXd lower_inverse_cov(const CholFactor& factor) {
  // (L L^T)^{-1} via two triangular solves.
  const MatrixXd& l = factor.factor();
  MatrixXd inv = l.triangularView<Eigen::Lower>().solve(MatrixXd::Identity(factor.dim(), factor.dim()));
  return l.triangularView<Eigen::Lower>().transpose().solve(inv);
}

}  // namespace

ElboGradient elbo_gradient(const ParamLayout& layout, const VectorXd& params, const MatrixXd& x, const MatrixXd& y,
                           double jitter, bool diagonal_only) {
  const InferenceState state = unpack(layout, params);
  const Index n = layout.n();
  const Index k = layout.k();
  const Index d = layout.spec().D();
  const Index kd = k * d;
  const double nd = static_cast<double>(n * d);
  const double nkd = static_cast<double>(n * kd);
  if (x.rows() != n || y.rows() != n || y.cols() != d)
    throw std::invalid_argument("elbo_gradient: data shape does not match layout");

  const double sigma_f = state.hyper.sigma_f();
  const double sigma_y = state.hyper.sigma_y();
  const double inv_var = 1.0 / (sigma_y * sigma_y);

  const KernelMatrix kf = gram(x, state.hyper.theta_f, sigma_f * sigma_f, jitter);
  const KernelMatrix kw = gram(x, state.hyper.theta_w, 0.0, jitter);

  const auto& qf = state.qf;
  const auto& qw = state.qw;
  const MatrixXd sigma = qf.row_chol.covariance();
  const MatrixXd omega = qf.col_chol.covariance();
  const MatrixXd& l_omega = qf.col_chol.factor();
  const MatrixXd gamma1 = qw.mode_chols[0].covariance();
  const MatrixXd gamma2 = qw.mode_chols[1].covariance();

  // Mode traces and their running products.
  const std::size_t n_modes = qw.mode_chols.size();
  std::vector<double> mode_trace(n_modes);
  for (std::size_t m = 0; m < n_modes; ++m) mode_trace[m] = qw.mode_chols[m].trace_cov();
  double trace_rest = 1.0;  // prod_{m>=3} tr(G_m)
  for (std::size_t m = 2; m < n_modes; ++m) trace_rest *= mode_trace[m];
  const double t2 = mode_trace[1];

  const MatrixXd kw_inv = kw.inverse();
  const MatrixXd kf_inv = kf.inverse();

  // Shared solves.
  ConstRowMajorMap u1(qw.mean.data(), n, kd);
  const MatrixXd u1_dense = u1;
  const MatrixXd p_solve = kw.solve(u1_dense);            // K_w^-1 U_1
  const MatrixXd fm = kf.solve(qf.mean);                  // K_fhat^-1 M
  const MatrixXd q1 = kw.solve(qw.mode_chols[0].factor());  // K_w^-1 L_1
  const MatrixXd qs = kf.solve(qf.row_chol.factor());       // K_fhat^-1 L_Sigma

  const double tr_kwinv_g1 = (q1.transpose() * qw.mode_chols[0].factor()).trace();
  const double tr_kfinv_sigma = (qs.transpose() * qf.row_chol.factor()).trace();
  const double tr_omega = qf.col_chol.trace_cov();
  const double tr_g2_omega = (gamma2 * omega).trace();
  const double quad_w = u1_dense.cwiseProduct(p_solve).sum();  // tr(K_w^-1 U_1 U_1^T)
  const double quad_f = qf.mean.cwiseProduct(fm).sum();

  // Per-slice accumulation over the likelihood expectation.
  VectorXd g_sigma_diag_ell = VectorXd::Zero(n);  // dELL/dSigma_nn
  VectorXd g_gamma1_diag_ell = VectorXd::Zero(n); // dELL/dGamma1_nn
  MatrixXd g_mean_f = MatrixXd::Zero(n, k);
  MatrixXd sum_c_mmt = MatrixXd::Zero(k, k);
  MatrixXd w2_sum = MatrixXd::Zero(k, k);
  double sum_cs = 0.0;
  double sum_c_trg2en = 0.0;
  double quad_sum = 0.0;

  VectorXd grad = VectorXd::Zero(layout.total());

  for (Index row = 0; row < n; ++row) {
    ConstRowMajorMap b = weight_slice_kd(qw.mean, row);  // K x D; E[W_n] = b^T
    const VectorXd m_n = qf.mean.row(row).transpose();
    const VectorXd y_n = y.row(row).transpose();
    const VectorXd wm = b.transpose() * m_n;
    const VectorXd r_n = y_n - wm;
    const double c_n = gamma1(row, row);
    const double s_nn = sigma(row, row);

    const VectorXd g2m = gamma2 * m_n;
    const double tr_g2_en = s_nn * tr_g2_omega + m_n.dot(g2m);
    const double tr_aa_omega = (b.transpose() * l_omega).squaredNorm();

    quad_sum += y_n.squaredNorm() - 2.0 * y_n.dot(wm) + c_n * trace_rest * tr_g2_en + s_nn * tr_aa_omega +
                wm.squaredNorm();

    g_mean_f.row(row) = inv_var * (b * r_n - c_n * trace_rest * g2m).transpose();
    g_sigma_diag_ell[row] = -0.5 * inv_var * (c_n * trace_rest * tr_g2_omega + tr_aa_omega);
    g_gamma1_diag_ell[row] = -0.5 * inv_var * trace_rest * tr_g2_en;

    const MatrixXd e_n = s_nn * omega + m_n * m_n.transpose();
    // d(total)/d(slice) in the K x D layout of the mean tensor; row `row` of
    // P = K_w^-1 U_1 is the matching K x D block of the KL part.
    const VectorXd p_row = p_solve.row(row).transpose();
    ConstRowMajorMap p_kd(p_row.data(), k, d);
    RowMajorMap g_slice(grad.data() + layout.qw_mean().offset + row * kd, k, d);
    g_slice = inv_var * (m_n * y_n.transpose() - e_n * b) - p_kd;

    sum_cs += c_n * s_nn;
    sum_c_trg2en += c_n * tr_g2_en;
    sum_c_mmt += c_n * (m_n * m_n.transpose());
    w2_sum += s_nn * (b * b.transpose());
  }

  // q(F) mean: likelihood part minus KL quadratic.
  Eigen::Map<RowMajorMatrix>(grad.data() + layout.qf_mean().offset, n, k) = g_mean_f - fm;

  // Sigma and Omega.
  {
    MatrixXd g_sigma = -0.5 * tr_omega * kf_inv + 0.5 * static_cast<double>(k) * lower_inverse_cov(qf.row_chol);
    g_sigma += g_sigma_diag_ell.asDiagonal();
    chain_to_raw(g_sigma, qf.row_chol, diagonal_only, grad.data() + layout.qf_row_chol().offset);

    MatrixXd g_omega = -0.5 * tr_kfinv_sigma * MatrixXd::Identity(k, k) +
                       0.5 * static_cast<double>(n) * lower_inverse_cov(qf.col_chol) -
                       0.5 * inv_var * (sum_cs * trace_rest * gamma2 + w2_sum);
    chain_to_raw(g_omega, qf.col_chol, diagonal_only, grad.data() + layout.qf_col_chol().offset);
  }

  // Weight-mode factors.
  {
    const double r1 = nkd / static_cast<double>(n);
    MatrixXd g_gamma1 = -0.5 * t2 * trace_rest * kw_inv + 0.5 * r1 * lower_inverse_cov(qw.mode_chols[0]);
    g_gamma1 += g_gamma1_diag_ell.asDiagonal();
    chain_to_raw(g_gamma1, qw.mode_chols[0], diagonal_only, grad.data() + layout.qw_chol(0).offset);

    const double r2 = nkd / static_cast<double>(k);
    MatrixXd g_gamma2 = -0.5 * tr_kwinv_g1 * trace_rest * MatrixXd::Identity(k, k) +
                        0.5 * r2 * lower_inverse_cov(qw.mode_chols[1]) -
                        0.5 * inv_var * trace_rest * (sum_cs * omega + sum_c_mmt);
    chain_to_raw(g_gamma2, qw.mode_chols[1], diagonal_only, grad.data() + layout.qw_chol(1).offset);

    for (std::size_t m = 2; m < n_modes; ++m) {
      const double t_m = mode_trace[m];
      const double r_m = nkd / static_cast<double>(qw.mode_chols[m].dim());
      const double alpha =
          (trace_rest / t_m) * (-0.5 * tr_kwinv_g1 * t2 - 0.5 * inv_var * sum_c_trg2en);
      MatrixXd g_gamma = alpha * MatrixXd::Identity(qw.mode_chols[m].dim(), qw.mode_chols[m].dim()) +
                         0.5 * r_m * lower_inverse_cov(qw.mode_chols[m]);
      chain_to_raw(g_gamma, qw.mode_chols[m], diagonal_only,
                   grad.data() + layout.qw_chol(static_cast<int>(m)).offset);
    }
  }

  // Hyperparameters via the kernel matrices.
  {
    const double dk = static_cast<double>(kd);
    const MatrixXd d_kw = 0.5 * (t2 * trace_rest * (q1 * q1.transpose()) + p_solve * p_solve.transpose() -
                                 dk * kw_inv);
    const MatrixXd d_kf =
        0.5 * (tr_omega * (qs * qs.transpose()) + fm * fm.transpose() - static_cast<double>(k) * kf_inv);

    const GramGrad gw = gram_grad(x, state.hyper.theta_w);
    const GramGrad gf = gram_grad(x, state.hyper.theta_f);

    double* h = grad.data() + layout.hyper().offset;
    h[0] = d_kf.cwiseProduct(gf.d_log_lengthscale).sum();
    h[1] = d_kf.cwiseProduct(gf.d_log_amplitude).sum();
    h[2] = d_kw.cwiseProduct(gw.d_log_lengthscale).sum();
    h[3] = d_kw.cwiseProduct(gw.d_log_amplitude).sum();
    // K_fhat = rbf + sigma_f^2 I, d/dlog(sigma_f) = 2 sigma_f^2 I.
    h[4] = 2.0 * sigma_f * sigma_f * d_kf.trace();
    h[5] = -nd + inv_var * quad_sum;
  }

  // Assemble the value from the same primitives.
  double logdet_q_w = 0.0;
  for (const auto& f : qw.mode_chols) logdet_q_w += (nkd / static_cast<double>(f.dim())) * f.logdet_cov();
  ElboBreakdown value;
  value.kl_w = 0.5 * (tr_kwinv_g1 * t2 * trace_rest + quad_w + static_cast<double>(kd) * kw.logdet() -
                      logdet_q_w - nkd);
  value.kl_f = 0.5 * (tr_kfinv_sigma * tr_omega + quad_f + static_cast<double>(k) * kf.logdet() -
                      static_cast<double>(k) * qf.row_chol.logdet_cov() -
                      static_cast<double>(n) * qf.col_chol.logdet_cov() - static_cast<double>(n * k));
  value.exp_loglik =
      -0.5 * nd * std::log(2.0 * std::numbers::pi) - nd * std::log(sigma_y) - 0.5 * inv_var * quad_sum;
  value.total = value.exp_loglik - value.kl_w - value.kl_f;

  return ElboGradient{value, std::move(grad)};
}

GradCheckReport grad_check_against(const ParamLayout& layout, const VectorXd& params, const VectorXd& grad,
                                   const MatrixXd& x, const MatrixXd& y, double h, double jitter) {
  if (grad.size() != layout.total()) throw std::invalid_argument("grad_check: gradient length mismatch");
  auto value_at = [&](const VectorXd& p) {
    const InferenceState s = unpack(layout, p);
    const double sf = s.hyper.sigma_f();
    const KernelMatrix kf = gram(x, s.hyper.theta_f, sf * sf, jitter);
    const KernelMatrix kw = gram(x, s.hyper.theta_w, 0.0, jitter);
    return elbo_with_kernels(s, y, kf, kw).total;
  };

  GradCheckReport report;
  VectorXd p = params;
  for (const auto& seg : layout.segments()) {
    GradCheckBlock block{seg.name, 0.0, 0.0};
    for (Index i = seg.offset; i < seg.offset + seg.length; ++i) {
      const double saved = p[i];
      p[i] = saved + h;
      const double up = value_at(p);
      p[i] = saved - h;
      const double down = value_at(p);
      p[i] = saved;
      const double fd = (up - down) / (2.0 * h);
      const double ga = grad[i];
      const double diff = std::abs(ga - fd);
      if (std::max(std::abs(ga), std::abs(fd)) < 1e-3) {
        block.worst_abs = std::max(block.worst_abs, diff);
      } else {
        block.worst_rel = std::max(block.worst_rel, diff / std::min(std::abs(ga), std::abs(fd)));
      }
    }
    report.worst_rel = std::max(report.worst_rel, block.worst_rel);
    report.worst_abs = std::max(report.worst_abs, block.worst_abs);
    report.blocks.push_back(std::move(block));
  }
  return report;
}

GradCheckReport grad_check(const ParamLayout& layout, const VectorXd& params, const MatrixXd& x, const MatrixXd& y,
                           double h, double jitter) {
  const ElboGradient eg = elbo_gradient(layout, params, x, y, jitter);
  return grad_check_against(layout, params, eg.grad, x, y, h, jitter);
}

}  // namespace gprn
