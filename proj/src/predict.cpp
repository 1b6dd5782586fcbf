#include "gprn/predict.hpp"

#include <cmath>
#include <numbers>

namespace gprn {

MatrixXd ProjectedPosterior::weight_mean(Index s) const {
  if (s < 0 || s >= n_test) throw std::out_of_range("weight_mean: test index out of range");
  MatrixXd out(d_out, k_latent);
  for (Index j = 0; j < k_latent; ++j)
    for (Index i = 0; i < d_out; ++i) out(i, j) = mean_w_star(s, j * d_out + i);
  return out;
}

ProjectedPosterior project(const TrainedModel& model, const MatrixXd& x_star) {
  if (x_star.cols() != model.x_train.cols()) throw DataError("project: test input dimension mismatch");
  const InferenceState state = model.state();
  const Index m_star = x_star.rows();
  const Index n = model.layout.n();
  const Index k = model.layout.k();
  const Index d = model.layout.spec().D();

  const MatrixXd cw = cross_gram(model.x_train, x_star, state.hyper.theta_w);  // N x M*
  const MatrixXd cf = cross_gram(model.x_train, x_star, state.hyper.theta_f);

  // One solve against the mode-1 unfolding covers every (i, j) fiber.
  ConstRowMajorMap u1(state.qw.mean.data(), n, k * d);
  const MatrixXd p = model.kw.solve(MatrixXd(u1));  // N x KD
  const MatrixXd fm = model.kf.solve(state.qf.mean);

  ProjectedPosterior proj;
  proj.n_test = m_star;
  proj.d_out = d;
  proj.k_latent = k;
  proj.mean_w_star = cw.transpose() * p;
  proj.mean_f_star = cf.transpose() * fm;

  const double aw = state.hyper.theta_w.amplitude();
  const double af = state.hyper.theta_f.amplitude();
  const double sf = state.hyper.sigma_f();
  const MatrixXd hw = model.kw.half_solve(cw);
  const MatrixXd hf = model.kf.half_solve(cf);
  proj.var_w = VectorXd(m_star);
  proj.var_f = VectorXd(m_star);
  for (Index s = 0; s < m_star; ++s) {
    double vw = aw * aw - hw.col(s).squaredNorm();
    double vf = af * af + sf * sf - hf.col(s).squaredNorm();
    if (vw < 0.0) {
      ++proj.clamped_variances;
      vw = 0.0;
    }
    if (vf < 0.0) {
      ++proj.clamped_variances;
      vf = 0.0;
    }
    proj.var_w[s] = vw;
    proj.var_f[s] = vf;
  }
  return proj;
}

MatrixXd predict_mean(const ProjectedPosterior& proj) {
  MatrixXd y(proj.n_test, proj.d_out);
  for (Index s = 0; s < proj.n_test; ++s) {
    VectorXd row = proj.mean_w_star.row(s).transpose();  // rows are not contiguous; copy then map
    ConstRowMajorMap block(row.data(), proj.k_latent, proj.d_out);
    y.row(s) = (block.transpose() * proj.mean_f_star.row(s).transpose()).transpose();
  }
  return y;
}

namespace {

double gaussian_quad_loglik(const MatrixXd& y, const MatrixXd& mean, double sigma_y) {
  const double nd = static_cast<double>(y.size());
  return -0.5 * nd * std::log(2.0 * std::numbers::pi * sigma_y * sigma_y) -
         (y - mean).squaredNorm() / (2.0 * sigma_y * sigma_y);
}

}  // namespace

VectorXd predictive_loglik_terms(const TrainedModel& model, const MatrixXd& x_star, const MatrixXd& y_star,
                                 int samples, std::uint64_t seed, bool per_output) {
  if (samples < 1) throw ConfigError("predictive_loglik: need at least one sample");
  if (x_star.rows() != y_star.rows()) throw DataError("predictive_loglik: X* and Y* row counts differ");
  const InferenceState state = model.state();
  const Index m_star = x_star.rows();
  const Index n = model.layout.n();
  const Index k = model.layout.k();
  const Index d = model.layout.spec().D();
  if (y_star.cols() != d) throw DataError("predictive_loglik: Y* column count != D");
  const double sigma_y = state.hyper.sigma_y();

  const ProjectedPosterior proj = project(model, x_star);
  const MatrixXd cw = cross_gram(model.x_train, x_star, state.hyper.theta_w);
  const MatrixXd cf = cross_gram(model.x_train, x_star, state.hyper.theta_f);
  const VectorXd sd_w = proj.var_w.array().sqrt();
  const VectorXd sd_f = proj.var_f.array().sqrt();
  const MatrixXd& l_sigma = state.qf.row_chol.factor();
  const MatrixXd& l_omega = state.qf.col_chol.factor();

  VectorXd terms(samples);
  if (!per_output) {
    const KronCov qw_cov(state.qw.mode_chols);
    for (int t = 0; t < samples; ++t) {
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
      // Sample latents at the training inputs from q, then condition each GP
      // forward to the test inputs.
      const Tensor w_sample = sample_kron_normal_one(state.qw.mean, qw_cov, rng);
      const MatrixXd f_sample = state.qf.mean + l_sigma * normal_matrix(rng, n, k) * l_omega.transpose();

      ConstRowMajorMap w1(w_sample.data(), n, k * d);
      MatrixXd w_star = cw.transpose() * model.kw.solve(MatrixXd(w1));  // M* x KD
      MatrixXd f_star = cf.transpose() * model.kf.solve(f_sample);      // M* x K
      for (Index s = 0; s < m_star; ++s) {
        w_star.row(s) += sd_w[s] * normal_vector(rng, k * d).transpose();
        f_star.row(s) += sd_f[s] * normal_vector(rng, k).transpose();
      }

      MatrixXd y_mean(m_star, d);
      for (Index s = 0; s < m_star; ++s) {
        VectorXd row = w_star.row(s).transpose();
        ConstRowMajorMap block(row.data(), k, d);
        y_mean.row(s) = (block.transpose() * f_star.row(s).transpose()).transpose();
      }
      terms[t] = gaussian_quad_loglik(y_star, y_mean, sigma_y);
    }
    return terms;
  }

  // Per-output mode: each output fiber w_.j is a matrix normal with
  // covariance s_j * Gamma_1 (x) Gamma_2, s_j = prod_m Gamma_{2+m}[j_m, j_m];
  // no full weight-tensor sample is ever materialized.
  const MatrixXd& l1 = state.qw.mode_chols[0].factor();
  const MatrixXd& l2 = state.qw.mode_chols[1].factor();
  const auto& spec = model.layout.spec();
  VectorXd mode_scale(d);
  for (Index j = 0; j < d; ++j) {
    const auto multi = spec.to_multi(j);
    double s_j = 1.0;
    for (std::size_t m = 0; m < multi.size(); ++m) {
      const MatrixXd& lm = state.qw.mode_chols[m + 2].factor();
      s_j *= lm.row(multi[m]).squaredNorm();  // Gamma[j_m, j_m]
    }
    mode_scale[j] = std::sqrt(s_j);
  }

  for (int t = 0; t < samples; ++t) {
    Rng rng_f(derive_seed(seed, 2 * static_cast<std::uint64_t>(t)));
    const MatrixXd f_sample = state.qf.mean + l_sigma * normal_matrix(rng_f, n, k) * l_omega.transpose();
    MatrixXd f_star = cf.transpose() * model.kf.solve(f_sample);
    for (Index s = 0; s < m_star; ++s) f_star.row(s) += sd_f[s] * normal_vector(rng_f, k).transpose();

    const std::uint64_t w_stream = derive_seed(seed, 2 * static_cast<std::uint64_t>(t) + 1);
    double term = 0.0;
    for (Index j = 0; j < d; ++j) {
      Rng rng_j(derive_seed(w_stream, static_cast<std::uint64_t>(j)));
      MatrixXd fiber_mean(n, k);
      for (Index row = 0; row < n; ++row)
        for (Index kk = 0; kk < k; ++kk) fiber_mean(row, kk) = state.qw.mean[(row * k + kk) * d + j];
      const MatrixXd w_j =
          fiber_mean + mode_scale[j] * (l1 * normal_matrix(rng_j, n, k) * l2.transpose());
      MatrixXd w_star_j = cw.transpose() * model.kw.solve(w_j);  // M* x K
      for (Index s = 0; s < m_star; ++s) w_star_j.row(s) += sd_w[s] * normal_vector(rng_j, k).transpose();
      const VectorXd y_mean_j = (w_star_j.array() * f_star.array()).rowwise().sum();
      term += gaussian_quad_loglik(y_star.col(j), y_mean_j, sigma_y);
    }
    terms[t] = term;
  }
  return terms;
}

double predictive_loglik(const TrainedModel& model, const MatrixXd& x_star, const MatrixXd& y_star, int samples,
                         std::uint64_t seed, bool per_output) {
  return predictive_loglik_terms(model, x_star, y_star, samples, seed, per_output).mean();
}

}  // namespace gprn
