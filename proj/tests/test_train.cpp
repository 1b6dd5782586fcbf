#include "gprn/train.hpp"

#include <filesystem>
#include <fstream>

#include "gprn/data_io.hpp"
#include "gprn/predict.hpp"
#include "test_helpers.hpp"

using namespace gprn;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("adam steps", "[train]") {
  AdamConfig config;
  SECTION("zero gradient leaves parameters unchanged") {
    AdamState state = AdamState::init(VectorXd::Constant(4, 1.5));
    const AdamState next = adam_step(state, VectorXd::Zero(4), config);
    REQUIRE(next.params == state.params);
  }
  SECTION("first unit-gradient step moves by almost the learning rate") {
    AdamState state = AdamState::init(VectorXd::Zero(3));
    const AdamState next = adam_step(state, VectorXd::Ones(3), config);
    for (Index i = 0; i < 3; ++i)
      REQUIRE_THAT(next.params[i], WithinRel(config.learning_rate / (1.0 + config.epsilon), 1e-12));
  }
  SECTION("ascent direction follows the gradient sign") {
    AdamState state = AdamState::init(VectorXd::Zero(2));
    VectorXd grad(2);
    grad << 3.0, -0.2;
    const AdamState next = adam_step(state, grad, config);
    REQUIRE(next.params[0] > 0.0);
    REQUIRE(next.params[1] < 0.0);
  }
  SECTION("config validation") {
    AdamConfig bad;
    bad.beta1 = 1.0;
    REQUIRE_THROWS_AS(validate(bad), ConfigError);
  }
}

namespace {

Dataset small_synthetic(std::uint64_t seed, Index n, const TensorizationSpec& spec, int k) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  MatrixXd x(n, 1);
  for (Index i = 0; i < n; ++i) x(i, 0) = u(rng);
  GprnHyper hyper;
  hyper.log_sigma_f = std::log(0.05);
  hyper.log_sigma_y = std::log(0.01);
  return sample_gprn(x, hyper, k, spec, derive_seed(seed, 2)).data;
}

}  // namespace

TEST_CASE("training is deterministic and improves the bound", "[train][slow]") {
  const TensorizationSpec spec = TensorizationSpec::explicit_dims({2, 2});
  const Dataset data = small_synthetic(11, 40, spec, 1);

  TrainOptions options;
  options.adam.epochs = 400;
  options.seed = 5;

  auto [model_a, trace_a] = train(data, 1, spec, options);
  auto [model_b, trace_b] = train(data, 1, spec, options);
  REQUIRE(model_a.params == model_b.params);
  REQUIRE_FALSE(trace_a.aborted);
  REQUIRE(trace_a.epochs.size() == 400);
  REQUIRE(model_a.final_elbo.total > trace_a.epochs.front().elbo.total);

  SECTION("training-set reconstruction is accurate on noiseless-ish data") {
    const MatrixXd pred = predict_mean(project(model_a, data.X));
    const double err = (pred - data.Y).cwiseAbs().maxCoeff();
    REQUIRE(err < 1e-1);
  }

  SECTION("smoothed ELBO is non-decreasing over the final half") {
    const int window = 50;
    std::vector<double> totals;
    for (const auto& e : trace_a.epochs) totals.push_back(e.elbo.total);
    std::vector<double> smoothed;
    for (std::size_t i = window; i <= totals.size(); ++i) {
      double s = 0.0;
      for (std::size_t j = i - window; j < i; ++j) s += totals[j];
      smoothed.push_back(s / window);
    }
    for (std::size_t i = smoothed.size() / 2; i + 1 < smoothed.size(); ++i)
      REQUIRE(smoothed[i + 1] >= smoothed[i] - 1e-6 * (1.0 + std::abs(smoothed[i])));
  }
}

TEST_CASE("zero epochs returns the initial state", "[train]") {
  const TensorizationSpec spec = TensorizationSpec::explicit_dims({2});
  const Dataset data = small_synthetic(13, 10, spec, 1);
  TrainOptions options;
  options.adam.epochs = 0;
  options.seed = 9;
  auto [model, trace] = train(data, 1, spec, options);
  REQUIRE(trace.epochs.empty());

  auto [qf, qw] = init_posteriors(10, 1, spec, options.seed, options.mean_scale, options.cov_scale);
  const VectorXd expected = pack(model.layout, InferenceState{std::move(qf), std::move(qw), options.init_hyper});
  REQUIRE(model.params == expected);
}

TEST_CASE("non-finite objectives abort onto the last good state", "[train]") {
  const TensorizationSpec spec = TensorizationSpec::explicit_dims({2});
  Dataset data = small_synthetic(17, 6, spec, 1);
  data.Y.setConstant(1e200);  // quadratic term overflows immediately
  TrainOptions options;
  options.adam.epochs = 10;
  auto [model, trace] = train(data, 1, spec, options);
  REQUIRE(trace.aborted);
  REQUIRE_FALSE(trace.abort_reason.empty());
}

TEST_CASE("trace CSV has the documented columns", "[train]") {
  const TensorizationSpec spec = TensorizationSpec::explicit_dims({2});
  const Dataset data = small_synthetic(19, 8, spec, 1);
  TrainOptions options;
  options.adam.epochs = 3;
  auto [model, trace] = train(data, 1, spec, options);

  const std::string path = (std::filesystem::temp_directory_path() / "gprn_trace_test.csv").string();
  write_trace_csv(path, trace);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  REQUIRE(header == "epoch,kl_w,kl_f,exp_loglik,total,grad_norm,seconds");
  int rows = 0;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  REQUIRE(rows == 3);
  std::filesystem::remove(path);
}
