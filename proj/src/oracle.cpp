#include "gprn/oracle.hpp"

#include <cmath>
#include <numbers>

namespace gprn {

namespace {

void guard_dim(Index dim, const char* where) {
  if (dim > kDenseGuard)
    throw std::invalid_argument(std::string(where) + ": dense expansion refused for dimension " +
                                std::to_string(dim) + " > " + std::to_string(kDenseGuard));
}

double rel_error(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-9}); }

}  // namespace

MatrixXd kron_dense(const MatrixXd& a, const MatrixXd& b) {
  MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

MatrixXd dense_expansion(const KronCov& cov) {
  guard_dim(cov.total_dim(), "dense_expansion");
  MatrixXd out = cov.factors[0].covariance();
  for (std::size_t m = 1; m < cov.factors.size(); ++m) out = kron_dense(out, cov.factors[m].covariance());
  return out;
}

DenseGaussian dense_gaussian(const TensorNormalPosterior& qw) {
  guard_dim(qw.mean.size(), "dense_gaussian");
  return DenseGaussian{qw.mean.vec(), dense_expansion(KronCov(qw.mode_chols))};
}

DenseGaussian dense_gaussian(const MatrixNormalPosterior& qf) {
  guard_dim(qf.mean.size(), "dense_gaussian");
  // Row-major vec of the (column-major) Eigen mean.
  RowMajorMatrix rm = qf.mean;
  VectorXd mean = Eigen::Map<const VectorXd>(rm.data(), rm.size());
  return DenseGaussian{std::move(mean), kron_dense(qf.row_chol.covariance(), qf.col_chol.covariance())};
}

DenseGaussian dense_fiber_prior(const KernelMatrix& kernel, Index copies) {
  guard_dim(kernel.dim() * copies, "dense_fiber_prior");
  MatrixXd k = kernel.gram();
  k.diagonal().array() += kernel.jitter();
  return DenseGaussian{VectorXd::Zero(kernel.dim() * copies), kron_dense(k, MatrixXd::Identity(copies, copies))};
}

double dense_kl(const DenseGaussian& q, const DenseGaussian& p) {
  const Index n = q.mean.size();
  if (p.mean.size() != n) throw std::invalid_argument("dense_kl: dimension mismatch");
  Eigen::LLT<MatrixXd> llt_p(p.cov);
  Eigen::LLT<MatrixXd> llt_q(q.cov);
  if (llt_p.info() != Eigen::Success || llt_q.info() != Eigen::Success)
    throw NumericalError("dense_kl: covariance not positive definite");
  const MatrixXd lp = llt_p.matrixL();
  const MatrixXd lq = llt_q.matrixL();
  const double logdet_p = 2.0 * lp.diagonal().array().log().sum();
  const double logdet_q = 2.0 * lq.diagonal().array().log().sum();
  const double trace = lp.triangularView<Eigen::Lower>().solve(lq).squaredNorm();
  const VectorXd diff = q.mean - p.mean;
  const double quad = lp.triangularView<Eigen::Lower>().solve(diff).squaredNorm();
  return 0.5 * (trace + quad - static_cast<double>(n) + logdet_p - logdet_q);
}

double dense_log_pdf(const DenseGaussian& g, const VectorXd& x) {
  const Index n = g.mean.size();
  Eigen::LLT<MatrixXd> llt(g.cov);
  if (llt.info() != Eigen::Success) throw NumericalError("dense_log_pdf: covariance not positive definite");
  const MatrixXd l = llt.matrixL();
  const double logdet = 2.0 * l.diagonal().array().log().sum();
  const double quad = l.triangularView<Eigen::Lower>().solve(x - g.mean).squaredNorm();
  return -0.5 * (static_cast<double>(n) * std::log(2.0 * std::numbers::pi) + logdet + quad);
}

VectorXd dense_sample(const DenseGaussian& g, Rng& rng) {
  Eigen::LLT<MatrixXd> llt(g.cov);
  if (llt.info() != Eigen::Success) throw NumericalError("dense_sample: covariance not positive definite");
  return g.mean + MatrixXd(llt.matrixL()) * normal_vector(rng, g.mean.size());
}

ElboBreakdown dense_oracle_elbo(const InferenceState& state, const Dataset& data, double jitter) {
  const Index n = data.n();
  const Index d = data.output_dim();
  const Index k = state.qf.k();
  guard_dim(n * d * k, "dense_oracle_elbo");

  const double sf = state.hyper.sigma_f();
  const double sigma_y = state.hyper.sigma_y();
  const KernelMatrix kf = gram(data.X, state.hyper.theta_f, sf * sf, jitter);
  const KernelMatrix kw = gram(data.X, state.hyper.theta_w, 0.0, jitter);

  const DenseGaussian qw = dense_gaussian(state.qw);
  const DenseGaussian qf = dense_gaussian(state.qf);
  const DenseGaussian pw = dense_fiber_prior(kw, k * d);
  const DenseGaussian pf = dense_fiber_prior(kf, k);

  ElboBreakdown b;
  b.kl_w = dense_kl(qw, pw);
  b.kl_f = dense_kl(qf, pf);

  // Likelihood expectation from explicit entries of the expanded
  // covariances. vec index of W entry (n, k, i) is (n*K + k)*D + i; of F
  // entry (n, k) is n*K + k.
  double quad_sum = 0.0;
  for (Index row = 0; row < n; ++row) {
    MatrixXd w_mean(d, k);
    for (Index i = 0; i < d; ++i)
      for (Index j = 0; j < k; ++j) w_mean(i, j) = qw.mean[(row * k + j) * d + i];
    VectorXd h_mean(k);
    for (Index j = 0; j < k; ++j) h_mean[j] = qf.mean[row * k + j];

    MatrixXd wtw = MatrixXd::Zero(k, k);
    for (Index j = 0; j < k; ++j)
      for (Index j2 = 0; j2 < k; ++j2) {
        double s = 0.0;
        for (Index i = 0; i < d; ++i) {
          const Index a = (row * k + j) * d + i;
          const Index c = (row * k + j2) * d + i;
          s += qw.cov(a, c) + qw.mean[a] * qw.mean[c];
        }
        wtw(j, j2) = s;
      }

    MatrixXd hht(k, k);
    for (Index j = 0; j < k; ++j)
      for (Index j2 = 0; j2 < k; ++j2) hht(j, j2) = qf.cov(row * k + j, row * k + j2) + h_mean[j] * h_mean[j2];

    const VectorXd y_n = data.Y.row(row).transpose();
    quad_sum += y_n.squaredNorm() - 2.0 * y_n.dot(w_mean * h_mean) + (wtw * hht).trace();
  }
  const double nd = static_cast<double>(n * d);
  b.exp_loglik = -0.5 * nd * std::log(2.0 * std::numbers::pi) - nd * std::log(sigma_y) -
                 quad_sum / (2.0 * sigma_y * sigma_y);
  b.total = b.exp_loglik - b.kl_w - b.kl_f;
  return b;
}

namespace {

CholFactor random_factor(Rng& rng, Index dim) {
  std::normal_distribution<double> off(0.0, 0.3);
  std::uniform_real_distribution<double> diag(-0.5, 0.3);
  MatrixXd raw = MatrixXd::Zero(dim, dim);
  for (Index i = 0; i < dim; ++i) {
    for (Index j = 0; j < i; ++j) raw(i, j) = off(rng);
    raw(i, i) = diag(rng);
  }
  return CholFactor(std::move(raw));
}

struct SuiteInstance {
  InferenceState state;
  Dataset data;
};

SuiteInstance random_suite_instance(Rng& rng, Index n, Index k, const TensorizationSpec& spec) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const Index p = 1 + static_cast<Index>(rng() % 2);
  MatrixXd x = 2.0 * normal_matrix(rng, n, p);
  MatrixXd y = normal_matrix(rng, n, spec.D());

  GprnHyper hyper;
  hyper.theta_f = {0.4 * u(rng), 0.5 * u(rng)};
  hyper.theta_w = {0.4 * u(rng), 0.5 * u(rng)};
  hyper.log_sigma_f = -1.5 + u(rng);
  hyper.log_sigma_y = -1.0 + 0.5 * u(rng);

  MatrixXd f_mean = normal_matrix(rng, n, k);
  std::vector<Index> wdims{n, k};
  wdims.insert(wdims.end(), spec.dims().begin(), spec.dims().end());
  Tensor w_mean(wdims);
  {
    std::normal_distribution<double> dist(0.0, 1.0);
    for (Index i = 0; i < w_mean.size(); ++i) w_mean[i] = dist(rng);
  }
  std::vector<CholFactor> chols;
  for (Index dim : wdims) chols.push_back(random_factor(rng, dim));

  InferenceState state{MatrixNormalPosterior{std::move(f_mean), random_factor(rng, n), random_factor(rng, k)},
                       TensorNormalPosterior{std::move(w_mean), std::move(chols)}, hyper};
  return SuiteInstance{std::move(state), Dataset{std::move(x), std::move(y), std::nullopt}};
}

}  // namespace

InferenceState prior_matched_state(const Dataset& data, const GprnHyper& hyper, Index k,
                                   const TensorizationSpec& spec, double jitter) {
  const double sf = hyper.sigma_f();
  const KernelMatrix kf = gram(data.X, hyper.theta_f, sf * sf, jitter);
  const KernelMatrix kw = gram(data.X, hyper.theta_w, 0.0, jitter);
  const Index n = data.n();

  std::vector<Index> wdims{n, k};
  wdims.insert(wdims.end(), spec.dims().begin(), spec.dims().end());
  std::vector<CholFactor> chols;
  chols.push_back(CholFactor::from_factor(kw.chol()));
  for (std::size_t m = 1; m < wdims.size(); ++m) chols.push_back(CholFactor::identity(wdims[m]));

  return InferenceState{
      MatrixNormalPosterior{MatrixXd::Zero(n, k), CholFactor::from_factor(kf.chol()), CholFactor::identity(k)},
      TensorNormalPosterior{Tensor(wdims), std::move(chols)}, hyper};
}

OracleReport run_oracle_suite(int instances, std::uint64_t seed, double rel_tol) {
  OracleReport report;
  Rng rng(seed);

  auto add_case = [&report](const std::string& name, double structured, double dense, bool ok, double err) {
    report.cases.push_back(OracleCase{name, structured, dense, err, ok});
    if (!ok) ++report.failures;
    report.worst_rel_error = std::max(report.worst_rel_error, err);
  };

  const std::vector<std::vector<Index>> mode_options = {{2, 2}, {3, 2}, {2, 4}, {2, 3}};

  // Canonical instance from the documented desk-scale setup.
  {
    Rng canonical_rng(derive_seed(seed, 9000));
    const TensorizationSpec spec = TensorizationSpec::explicit_dims({2, 2});
    SuiteInstance inst = random_suite_instance(canonical_rng, 3, 2, spec);
    const ElboBreakdown s = elbo(inst.state, inst.data);
    const ElboBreakdown o = dense_oracle_elbo(inst.state, inst.data);
    const double err = std::max({rel_error(s.total, o.total), rel_error(s.kl_w, o.kl_w), rel_error(s.kl_f, o.kl_f),
                                 rel_error(s.exp_loglik, o.exp_loglik)});
    add_case("canonical N=3 K=2 D=4", s.total, o.total, err <= rel_tol, err);
  }

  // KL calibration at the constructed q-equals-prior point.
  {
    Rng cal_rng(derive_seed(seed, 9001));
    const TensorizationSpec spec = TensorizationSpec::explicit_dims({2, 2});
    SuiteInstance base = random_suite_instance(cal_rng, 3, 2, spec);
    const InferenceState state = prior_matched_state(base.data, base.state.hyper, 2, spec);
    const double sf = state.hyper.sigma_f();
    const KernelMatrix kf = gram(base.data.X, state.hyper.theta_f, sf * sf);
    const KernelMatrix kw = gram(base.data.X, state.hyper.theta_w, 0.0);
    const double klw = kl_weights(state.qw, kw);
    const double klf = kl_latent(state.qf, kf);
    add_case("kl calibration q=prior", klw, 0.0, std::abs(klw) <= 1e-9, std::abs(klw));
    add_case("kl calibration q=prior (F)", klf, 0.0, std::abs(klf) <= 1e-9, std::abs(klf));
  }

  for (int i = 0; i < instances; ++i) {
    const Index n = 2 + static_cast<Index>(rng() % 3);
    const Index k = 1 + static_cast<Index>(rng() % 2);
    const TensorizationSpec spec =
        TensorizationSpec::explicit_dims(mode_options[static_cast<std::size_t>(rng() % mode_options.size())]);
    SuiteInstance inst = random_suite_instance(rng, n, k, spec);
    const ElboBreakdown s = elbo(inst.state, inst.data);
    const ElboBreakdown o = dense_oracle_elbo(inst.state, inst.data);
    const double err = std::max({rel_error(s.total, o.total), rel_error(s.kl_w, o.kl_w), rel_error(s.kl_f, o.kl_f),
                                 rel_error(s.exp_loglik, o.exp_loglik)});
    const bool nonneg = s.kl_w >= -1e-9 && s.kl_f >= -1e-9;
    add_case("random " + std::to_string(i) + " N=" + std::to_string(n) + " K=" + std::to_string(k) +
                 " D=" + std::to_string(spec.D()),
             s.total, o.total, err <= rel_tol && nonneg, err);
  }
  return report;
}

}  // namespace gprn
