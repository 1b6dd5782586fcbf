#include <numbers>

#include "test_helpers.hpp"

using namespace gprn;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

KernelMatrix identity_kernel(Index n) { return KernelMatrix(MatrixXd::Identity(n, n), 0.0); }

}  // namespace

TEST_CASE("kl_weights", "[elbo]") {
  SECTION("vanishes when q equals the prior") {
    Rng rng(50);
    auto inst = gprn_test::random_instance(rng, 3, 2, {2, 2});
    const InferenceState state = prior_matched_state(inst.data, inst.state.hyper, 2, inst.spec);
    const KernelMatrix kw = gram(inst.data.X, state.hyper.theta_w, 0.0);
    REQUIRE_THAT(kl_weights(state.qw, kw), WithinAbs(0.0, 1e-9));
  }
  SECTION("vanishes for identical identity Gaussians") {
    const TensorizationSpec spec = TensorizationSpec::explicit_dims({2, 2});
    auto [qf, qw] = init_posteriors(3, 2, spec, 1, 0.0, 1.0);
    REQUIRE_THAT(kl_weights(qw, identity_kernel(3)), WithinAbs(0.0, 1e-12));
  }
  SECTION("matches the dense Gaussian KL oracle") {
    Rng rng(51);
    auto inst = gprn_test::random_instance(rng, 3, 2, {2, 2});
    const KernelMatrix kw = gram(inst.data.X, inst.state.hyper.theta_w, 0.0);
    const double structured = kl_weights(inst.state.qw, kw);
    const double dense = dense_kl(dense_gaussian(inst.state.qw), dense_fiber_prior(kw, 2 * 4));
    REQUIRE_THAT(structured, WithinRel(dense, 1e-9));
  }
  SECTION("dimension mismatch throws") {
    const TensorizationSpec spec = TensorizationSpec::explicit_dims({2});
    auto [qf, qw] = init_posteriors(3, 2, spec, 1);
    REQUIRE_THROWS_AS(kl_weights(qw, identity_kernel(4)), std::invalid_argument);
  }
}

TEST_CASE("kl_latent", "[elbo]") {
  SECTION("vanishes when q equals the prior") {
    Rng rng(52);
    auto inst = gprn_test::random_instance(rng, 4, 3, {2});
    const InferenceState state = prior_matched_state(inst.data, inst.state.hyper, 3, inst.spec);
    const double sf = state.hyper.sigma_f();
    const KernelMatrix kf = gram(inst.data.X, state.hyper.theta_f, sf * sf);
    REQUIRE_THAT(kl_latent(state.qf, kf), WithinAbs(0.0, 1e-9));
  }
  SECTION("single mean entry against the scalar Gaussian KL") {
    const Index n = 3, k = 2;
    MatrixXd mean = MatrixXd::Zero(n, k);
    mean(1, 0) = 0.8;
    MatrixNormalPosterior qf{mean, CholFactor::identity(n), CholFactor::identity(k)};
    REQUIRE_THAT(kl_latent(qf, identity_kernel(n)), WithinRel(0.5 * 0.8 * 0.8, 1e-12));
  }
  SECTION("matches the dense Gaussian KL oracle") {
    Rng rng(53);
    auto inst = gprn_test::random_instance(rng, 4, 3, {2});
    const double sf = inst.state.hyper.sigma_f();
    const KernelMatrix kf = gram(inst.data.X, inst.state.hyper.theta_f, sf * sf);
    const double structured = kl_latent(inst.state.qf, kf);
    const double dense = dense_kl(dense_gaussian(inst.state.qf), dense_fiber_prior(kf, 3));
    REQUIRE_THAT(structured, WithinRel(dense, 1e-9));
  }
}

TEST_CASE("moment_wtw closed forms", "[elbo]") {
  SECTION("identity factors reduce to d * I") {
    const TensorizationSpec spec = TensorizationSpec::explicit_dims({3});
    auto [qf, qw] = init_posteriors(2, 2, spec, 1, 0.0, 1.0);
    const MatrixXd m = moment_wtw(qw, 0);
    REQUIRE((m - 3.0 * MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
  }
  SECTION("doubling Gamma_1 doubles the covariance part") {
    const TensorizationSpec spec = TensorizationSpec::explicit_dims({3});
    auto [qf, qw1] = init_posteriors(2, 2, spec, 2, 0.3, 1.0);
    TensorNormalPosterior qw2 = qw1;
    qw2.mode_chols[0] = CholFactor::scaled_identity(2, std::sqrt(2.0));
    ConstRowMajorMap b = weight_slice_kd(qw1.mean, 1);
    const MatrixXd mean_part = b * b.transpose();
    const MatrixXd cov1 = moment_wtw(qw1, 1) - mean_part;
    const MatrixXd cov2 = moment_wtw(qw2, 1) - mean_part;
    REQUIRE((cov2 - 2.0 * cov1).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("moment_hht closed forms", "[elbo]") {
  SECTION("standard normal rows give the identity") {
    const TensorizationSpec spec = TensorizationSpec::explicit_dims({2});
    auto [qf, qw] = init_posteriors(3, 2, spec, 1, 0.0, 1.0);
    REQUIRE((moment_hht(qf, 1) - MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
  }
  SECTION("zero row variance leaves the rank-1 mean term") {
    MatrixXd mean = MatrixXd::Zero(2, 3);
    mean(0, 0) = 1.0;
    MatrixNormalPosterior qf{mean, CholFactor::scaled_identity(2, 0.0), CholFactor::identity(3)};
    MatrixXd expected = MatrixXd::Zero(3, 3);
    expected(0, 0) = 1.0;
    REQUIRE((moment_hht(qf, 0) - expected).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("weight second moment needs the Gamma_1 diagonal", "[elbo][montecarlo]") {
  // Non-identity Gamma_1 (diag 2 at n) on an N=2, K=2, D=4 instance. The
  // Monte-Carlo moment matches the implementation and rejects the variant
  // that drops the Gamma_1[n, n] factor.
  Rng rng(54);
  auto inst = gprn_test::random_instance(rng, 2, 2, {2, 2});
  auto& qw = inst.state.qw;
  qw.mode_chols[0] = CholFactor::scaled_identity(2, std::sqrt(2.0));  // Gamma_1 = 2I

  const Index n = 1;
  const Index k = 2, d = 4;
  const MatrixXd expected = moment_wtw(qw, n);
  ConstRowMajorMap b = weight_slice_kd(qw.mean, n);
  const MatrixXd mean_part = b * b.transpose();                       // E[W_n]^T E[W_n]
  const MatrixXd dropped = (expected - mean_part) / 2.0 + mean_part;  // without Gamma_1[n,n] = 2

  const int t_samples = 100000;
  const KronCov cov(qw.mode_chols);
  Rng sample_rng(55);
  MatrixXd mc = MatrixXd::Zero(k, k);
  MatrixXd mc_sq = MatrixXd::Zero(k, k);
  for (int t = 0; t < t_samples; ++t) {
    const Tensor w = sample_kron_normal_one(qw.mean, cov, sample_rng);
    ConstRowMajorMap bw = weight_slice_kd(w, n);
    const MatrixXd wtw = bw * bw.transpose();
    mc += wtw;
    mc_sq += wtw.cwiseProduct(wtw);
  }
  mc /= t_samples;
  mc_sq /= t_samples;

  int correct_within = 0;
  int dropped_outside = 0;
  for (Index i = 0; i < k; ++i)
    for (Index j = 0; j < k; ++j) {
      const double se = std::sqrt(std::max(0.0, mc_sq(i, j) - mc(i, j) * mc(i, j))) /
                        std::sqrt(static_cast<double>(t_samples));
      if (std::abs(mc(i, j) - expected(i, j)) <= 3.0 * se + 1e-12) ++correct_within;
      if (std::abs(mc(i, j) - dropped(i, j)) > 3.0 * se + 1e-12) ++dropped_outside;
    }
  REQUIRE(correct_within == k * k);
  REQUIRE(dropped_outside > 0);  // the test fails if the factor is dropped
}

TEST_CASE("latent second moment matches Monte-Carlo", "[elbo][montecarlo]") {
  Rng rng(56);
  auto inst = gprn_test::random_instance(rng, 2, 2, {2});
  const auto& qf = inst.state.qf;
  const Index n = 0, k = 2;
  const MatrixXd expected = moment_hht(qf, n);

  const int t_samples = 100000;
  Rng sample_rng(57);
  const MatrixXd& ls = qf.row_chol.factor();
  const MatrixXd& lo = qf.col_chol.factor();
  MatrixXd mc = MatrixXd::Zero(k, k);
  MatrixXd mc_sq = MatrixXd::Zero(k, k);
  for (int t = 0; t < t_samples; ++t) {
    const MatrixXd f = qf.mean + ls * normal_matrix(sample_rng, 2, k) * lo.transpose();
    const VectorXd h = f.row(n).transpose();
    const MatrixXd hht = h * h.transpose();
    mc += hht;
    mc_sq += hht.cwiseProduct(hht);
  }
  mc /= t_samples;
  mc_sq /= t_samples;
  for (Index i = 0; i < k; ++i)
    for (Index j = 0; j < k; ++j) {
      const double se = std::sqrt(std::max(0.0, mc_sq(i, j) - mc(i, j) * mc(i, j))) /
                        std::sqrt(static_cast<double>(t_samples));
      REQUIRE_THAT(mc(i, j), WithinAbs(expected(i, j), 3.0 * se + 1e-12));
    }
}

TEST_CASE("moment matrices are symmetric with PSD covariance parts", "[elbo][property]") {
  Rng rng(58);
  for (int trial = 0; trial < 10; ++trial) {
    auto inst = gprn_test::random_instance(rng, 3, 2, {2, 2});
    for (Index n = 0; n < 3; ++n) {
      const MatrixXd wtw = moment_wtw(inst.state.qw, n);
      const MatrixXd hht = moment_hht(inst.state.qf, n);
      REQUIRE((wtw - wtw.transpose()).cwiseAbs().maxCoeff() < 1e-12);
      REQUIRE((hht - hht.transpose()).cwiseAbs().maxCoeff() < 1e-12);
      ConstRowMajorMap b = weight_slice_kd(inst.state.qw.mean, n);
      const MatrixXd wtw_cov = wtw - MatrixXd(b * b.transpose());
      const VectorXd m_n = inst.state.qf.mean.row(n).transpose();
      const MatrixXd hht_cov = hht - MatrixXd(m_n * m_n.transpose());
      REQUIRE(Eigen::SelfAdjointEigenSolver<MatrixXd>(wtw_cov).eigenvalues().minCoeff() > -1e-10);
      REQUIRE(Eigen::SelfAdjointEigenSolver<MatrixXd>(hht_cov).eigenvalues().minCoeff() > -1e-10);
    }
  }
}

TEST_CASE("expected_loglik closed forms", "[elbo]") {
  SECTION("zero residual and collapsed covariances") {
    const Index n = 3, k = 2, d = 4;
    Rng rng(59);
    const TensorizationSpec spec = TensorizationSpec::explicit_dims({2, 2});
    auto [qf, qw] = init_posteriors(n, k, spec, 60, 0.4, 0.0);  // point-mass posteriors
    qf.row_chol = CholFactor::scaled_identity(n, 0.0);
    qf.col_chol = CholFactor::scaled_identity(k, 0.0);

    MatrixXd y(n, d);
    for (Index row = 0; row < n; ++row) {
      ConstRowMajorMap b = weight_slice_kd(qw.mean, row);
      y.row(row) = (b.transpose() * qf.mean.row(row).transpose()).transpose();
    }
    const double sigma_y = 0.37;
    const double expected = -0.5 * n * d * std::log(2.0 * std::numbers::pi * sigma_y * sigma_y);
    REQUIRE_THAT(expected_loglik(qf, qw, y, sigma_y), WithinRel(expected, 1e-12));
  }
  SECTION("scalar instance matches the hand-expanded formula") {
    // N = D = K = 1 with one tensor mode of size 1; every object is scalar.
    const TensorizationSpec spec = TensorizationSpec::explicit_dims({1});
    const double mu_w = 0.7, mu_h = -1.1;
    const double l1 = 0.8, l2 = 1.3, l3 = 0.6;  // weight mode factors
    const double ls = 0.9, lo = 1.2;            // latent factors
    const double y = 0.4, sigma_y = 0.5;

    Tensor w_mean({1, 1, 1});
    w_mean[0] = mu_w;
    std::vector<CholFactor> chols{CholFactor::scaled_identity(1, l1), CholFactor::scaled_identity(1, l2),
                                  CholFactor::scaled_identity(1, l3)};
    TensorNormalPosterior qw{std::move(w_mean), std::move(chols)};
    MatrixNormalPosterior qf{MatrixXd::Constant(1, 1, mu_h), CholFactor::scaled_identity(1, ls),
                             CholFactor::scaled_identity(1, lo)};

    const double e_w2 = l1 * l1 * l2 * l2 * l3 * l3 + mu_w * mu_w;
    const double e_h2 = ls * ls * lo * lo + mu_h * mu_h;
    const double quad = y * y - 2.0 * y * mu_w * mu_h + e_w2 * e_h2;
    const double expected =
        -0.5 * std::log(2.0 * std::numbers::pi) - std::log(sigma_y) - quad / (2.0 * sigma_y * sigma_y);
    REQUIRE_THAT(expected_loglik(qf, qw, MatrixXd::Constant(1, 1, y), sigma_y), WithinRel(expected, 1e-13));
  }
}

TEST_CASE("expected_loglik equals the Monte-Carlo average of exact log-densities", "[elbo][montecarlo]") {
  Rng rng(61);
  auto inst = gprn_test::random_instance(rng, 2, 2, {2});
  const auto& state = inst.state;
  const double sigma_y = state.hyper.sigma_y();
  const double analytic = expected_loglik(state.qf, state.qw, inst.data.Y, sigma_y);

  const int t_samples = 100000;
  Rng sample_rng(62);
  const KronCov w_cov(state.qw.mode_chols);
  const MatrixXd& ls = state.qf.row_chol.factor();
  const MatrixXd& lo = state.qf.col_chol.factor();
  const Index n = 2, d = 2;
  const double norm_const = -0.5 * n * d * std::log(2.0 * std::numbers::pi * sigma_y * sigma_y);

  double mean = 0.0, sq = 0.0;
  for (int t = 0; t < t_samples; ++t) {
    const Tensor w = sample_kron_normal_one(state.qw.mean, w_cov, sample_rng);
    const MatrixXd f = state.qf.mean + ls * normal_matrix(sample_rng, n, 2) * lo.transpose();
    double quad = 0.0;
    for (Index row = 0; row < n; ++row) {
      ConstRowMajorMap b = weight_slice_kd(w, row);
      quad += (inst.data.Y.row(row).transpose() - b.transpose() * f.row(row).transpose()).squaredNorm();
    }
    const double term = norm_const - quad / (2.0 * sigma_y * sigma_y);
    mean += term;
    sq += term * term;
  }
  mean /= t_samples;
  sq /= t_samples;
  const double se = std::sqrt(std::max(0.0, sq - mean * mean)) / std::sqrt(static_cast<double>(t_samples));
  REQUIRE_THAT(analytic, WithinAbs(mean, 3.0 * se));
}

TEST_CASE("elbo assembles its parts", "[elbo]") {
  Rng rng(63);
  auto inst = gprn_test::random_instance(rng, 3, 2, {2, 2});
  const ElboBreakdown b = elbo(inst.state, inst.data);
  REQUIRE(b.total == b.exp_loglik - b.kl_w - b.kl_f);

  const double sf = inst.state.hyper.sigma_f();
  const KernelMatrix kf = gram(inst.data.X, inst.state.hyper.theta_f, sf * sf);
  const KernelMatrix kw = gram(inst.data.X, inst.state.hyper.theta_w, 0.0);
  REQUIRE(b.kl_w == kl_weights(inst.state.qw, kw));
  REQUIRE(b.kl_f == kl_latent(inst.state.qf, kf));
}

TEST_CASE("structured elbo equals the dense oracle on the canonical instance", "[elbo][oracle]") {
  Rng rng(64);
  auto inst = gprn_test::random_instance(rng, 3, 2, {2, 2});
  const ElboBreakdown s = elbo(inst.state, inst.data);
  const ElboBreakdown o = dense_oracle_elbo(inst.state, inst.data);
  REQUIRE_THAT(s.kl_w, WithinRel(o.kl_w, 1e-9));
  REQUIRE_THAT(s.kl_f, WithinRel(o.kl_f, 1e-9));
  REQUIRE_THAT(s.exp_loglik, WithinRel(o.exp_loglik, 1e-9));
  REQUIRE_THAT(s.total, WithinRel(o.total, 1e-9));
}

TEST_CASE("randomized structured-vs-dense equivalence suite", "[elbo][oracle][property]") {
  const OracleReport report = run_oracle_suite(100, 12345);
  CAPTURE(report.worst_rel_error);
  REQUIRE(report.failures == 0);
}

TEST_CASE("elbo lower-bounds the sampled evidence", "[elbo][montecarlo]") {
  // Importance sampling with q as proposal: log p(Y) >= ELBO, and the
  // empirical logsumexp estimate always dominates the empirical ELBO
  // average. N = 2, D = 2, K = 1.
  Rng rng(65);
  auto inst = gprn_test::random_instance(rng, 2, 1, {2});
  const auto& state = inst.state;
  const ElboBreakdown structured = elbo(state, inst.data);

  const double sf = state.hyper.sigma_f();
  const double sigma_y = state.hyper.sigma_y();
  const KernelMatrix kf = gram(inst.data.X, state.hyper.theta_f, sf * sf);
  const KernelMatrix kw = gram(inst.data.X, state.hyper.theta_w, 0.0);
  const DenseGaussian qw_dense = dense_gaussian(state.qw);
  const DenseGaussian qf_dense = dense_gaussian(state.qf);
  const DenseGaussian pw = dense_fiber_prior(kw, 1 * 2);
  const DenseGaussian pf = dense_fiber_prior(kf, 1);

  const int t_samples = 20000;
  Rng sample_rng(66);
  std::vector<double> log_weights(t_samples);
  double mean_lw = 0.0;
  const Index n = 2, d = 2, k = 1;
  for (int t = 0; t < t_samples; ++t) {
    const VectorXd w_vec = dense_sample(qw_dense, sample_rng);
    const VectorXd f_vec = dense_sample(qf_dense, sample_rng);
    double loglik = -0.5 * n * d * std::log(2.0 * std::numbers::pi * sigma_y * sigma_y);
    for (Index row = 0; row < n; ++row)
      for (Index i = 0; i < d; ++i) {
        const double y_mean = w_vec[(row * k) * d + i] * f_vec[row * k];
        const double r = inst.data.Y(row, i) - y_mean;
        loglik -= r * r / (2.0 * sigma_y * sigma_y);
      }
    log_weights[static_cast<std::size_t>(t)] = loglik + dense_log_pdf(pw, w_vec) + dense_log_pdf(pf, f_vec) -
                                               dense_log_pdf(qw_dense, w_vec) - dense_log_pdf(qf_dense, f_vec);
    mean_lw += log_weights[static_cast<std::size_t>(t)];
  }
  mean_lw /= t_samples;
  double var_lw = 0.0;
  for (double lw : log_weights) var_lw += (lw - mean_lw) * (lw - mean_lw);
  const double se = std::sqrt(var_lw / (t_samples - 1.0)) / std::sqrt(static_cast<double>(t_samples));

  // The sampled ELBO recovers the structured value...
  REQUIRE_THAT(structured.total, WithinAbs(mean_lw, 3.0 * se));
  // ...and the evidence estimate sits above it.
  const double max_lw = *std::max_element(log_weights.begin(), log_weights.end());
  double sum_exp = 0.0;
  for (double lw : log_weights) sum_exp += std::exp(lw - max_lw);
  const double log_evidence = max_lw + std::log(sum_exp / t_samples);
  REQUIRE(structured.total <= log_evidence + 3.0 * se);
}

TEST_CASE("dense oracle edge cases", "[elbo][oracle]") {
  SECTION("q = prior with zero targets leaves only the likelihood term") {
    Rng rng(67);
    auto inst = gprn_test::random_instance(rng, 3, 2, {2});
    inst.data.Y.setZero();
    const InferenceState state = prior_matched_state(inst.data, inst.state.hyper, 2, inst.spec);
    const ElboBreakdown o = dense_oracle_elbo(state, inst.data);
    REQUIRE_THAT(o.kl_w, WithinAbs(0.0, 1e-9));
    REQUIRE_THAT(o.kl_f, WithinAbs(0.0, 1e-9));
    REQUIRE_THAT(o.total, WithinAbs(o.exp_loglik, 1e-9));
  }
  SECTION("monotone in sigma_y under large residuals") {
    Rng rng(68);
    auto inst = gprn_test::random_instance(rng, 2, 1, {2});
    inst.data.Y.setConstant(50.0);  // residuals dominate
    double previous = -std::numeric_limits<double>::infinity();
    for (double log_sy : {-1.0, -0.5, 0.0, 0.5, 1.0}) {
      InferenceState state = inst.state;
      state.hyper.log_sigma_y = log_sy;
      const double value = dense_oracle_elbo(state, inst.data).total;
      REQUIRE(value > previous);
      previous = value;
    }
  }
  SECTION("size guard") {
    const TensorizationSpec spec = TensorizationSpec::explicit_dims({64, 64});
    auto [qf, qw] = init_posteriors(2, 1, spec, 1);
    Dataset data{MatrixXd::Zero(2, 1), MatrixXd::Zero(2, 4096), std::nullopt};
    REQUIRE_THROWS_AS(dense_oracle_elbo(InferenceState{qf, qw, GprnHyper{}}, data), std::invalid_argument);
  }
}
