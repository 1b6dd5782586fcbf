#include "gprn/gradient.hpp"

#include "test_helpers.hpp"

using namespace gprn;
using Catch::Matchers::WithinAbs;

namespace {

VectorXd packed(const gprn_test::TestInstance& inst) { return pack(inst.layout, inst.state); }

}  // namespace

TEST_CASE("mean gradients vanish at the symmetric stationary point", "[gradient]") {
  // Zero means, q = prior, Y = 0: every mean-block coordinate is exactly 0.
  Rng rng(70);
  auto inst = gprn_test::random_instance(rng, 3, 2, {2, 2});
  inst.data.Y.setZero();
  const InferenceState state = prior_matched_state(inst.data, inst.state.hyper, 2, inst.spec);
  const VectorXd params = pack(inst.layout, state);
  const ElboGradient eg = elbo_gradient(inst.layout, params, inst.data.X, inst.data.Y);

  const auto& qf_mean = inst.layout.qf_mean();
  const auto& qw_mean = inst.layout.qw_mean();
  REQUIRE(eg.grad.segment(qf_mean.offset, qf_mean.length).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(eg.grad.segment(qw_mean.offset, qw_mean.length).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("analytic gradient matches central differences on random instances", "[gradient][oracle]") {
  Rng rng(71);
  const std::vector<std::vector<Index>> mode_options = {{2, 2}, {3}, {2, 3}};
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = 2 + static_cast<Index>(rng() % 2);
    const Index k = 1 + static_cast<Index>(rng() % 2);
    auto inst =
        gprn_test::random_instance(rng, n, k, mode_options[static_cast<std::size_t>(rng() % mode_options.size())]);
    const GradCheckReport report = grad_check(inst.layout, packed(inst), inst.data.X, inst.data.Y, 1e-5);
    CAPTURE(trial, n, k, report.worst_rel, report.worst_abs);
    REQUIRE(report.passed());
  }
}

TEST_CASE("gradient decomposes linearly over the three terms", "[gradient]") {
  Rng rng(72);
  auto inst = gprn_test::random_instance(rng, 3, 2, {2});
  const VectorXd params = packed(inst);
  const ElboGradient eg = elbo_gradient(inst.layout, params, inst.data.X, inst.data.Y);

  // Central differences of each breakdown component.
  const double h = 1e-5;
  VectorXd p = params;
  for (Index i = 0; i < params.size(); ++i) {
    const double saved = p[i];
    p[i] = saved + h;
    const ElboBreakdown up = elbo(unpack(inst.layout, p), inst.data);
    p[i] = saved - h;
    const ElboBreakdown down = elbo(unpack(inst.layout, p), inst.data);
    p[i] = saved;
    const double fd_total = (up.total - down.total) / (2.0 * h);
    const double fd_parts = ((up.exp_loglik - down.exp_loglik) - (up.kl_w - down.kl_w) - (up.kl_f - down.kl_f)) /
                            (2.0 * h);
    REQUIRE_THAT(fd_total, WithinAbs(fd_parts, 1e-9 * std::max(1.0, std::abs(fd_total))));
    REQUIRE_THAT(eg.grad[i], WithinAbs(fd_total, 1e-4 * std::max(1.0, std::abs(fd_total))));
  }
}

TEST_CASE("grad_check flags a corrupted block", "[gradient]") {
  Rng rng(73);
  auto inst = gprn_test::random_instance(rng, 3, 2, {2});
  const VectorXd params = packed(inst);
  const ElboGradient eg = elbo_gradient(inst.layout, params, inst.data.X, inst.data.Y);

  VectorXd corrupted = eg.grad;
  const auto& seg = inst.layout.qf_mean();
  corrupted.segment(seg.offset, seg.length) *= 2.0;
  const GradCheckReport report =
      grad_check_against(inst.layout, params, corrupted, inst.data.X, inst.data.Y, 1e-5);
  REQUIRE_FALSE(report.passed());
  for (const auto& block : report.blocks) {
    if (block.name == "qf_mean") {
      // x2 corruption reports a relative error of about 1.
      REQUIRE(block.worst_rel > 0.5);
      REQUIRE(block.worst_rel < 2.0);
    }
  }
}

TEST_CASE("finite-difference error is U-shaped in the step size", "[gradient]") {
  Rng rng(74);
  auto inst = gprn_test::random_instance(rng, 3, 2, {2});
  const VectorXd params = packed(inst);
  const double coarse = grad_check(inst.layout, params, inst.data.X, inst.data.Y, 1e-2).worst_rel;
  const double middle = grad_check(inst.layout, params, inst.data.X, inst.data.Y, 1e-5).worst_rel;
  const double fine = grad_check(inst.layout, params, inst.data.X, inst.data.Y, 1e-9).worst_rel;
  CAPTURE(coarse, middle, fine);
  REQUIRE(middle < coarse);  // truncation dominates the coarse step
  REQUIRE(middle < fine);    // roundoff dominates the fine step
}

TEST_CASE("diagonal-only mode masks strict-lower factor gradients", "[gradient]") {
  Rng rng(75);
  auto inst = gprn_test::random_instance(rng, 3, 2, {2, 2});
  const VectorXd params = packed(inst);
  const ElboGradient full = elbo_gradient(inst.layout, params, inst.data.X, inst.data.Y, -1.0, false);
  const ElboGradient diag = elbo_gradient(inst.layout, params, inst.data.X, inst.data.Y, -1.0, true);

  REQUIRE(full.value.total == diag.value.total);
  for (const auto& seg : inst.layout.segments()) {
    const bool is_chol = seg.name.find("chol") != std::string::npos;
    for (Index i = seg.offset; i < seg.offset + seg.length; ++i) {
      if (!is_chol) {
        REQUIRE(full.grad[i] == diag.grad[i]);
      }
    }
  }
  // Per-factor: diagonal entries keep their gradient, strict-lower zeroed.
  const auto check_factor = [&](const ParamLayout::Segment& seg, Index dim) {
    Index p = seg.offset;
    for (Index i = 0; i < dim; ++i) {
      for (Index j = 0; j < i; ++j) {
        REQUIRE(diag.grad[p] == 0.0);
        ++p;
      }
      REQUIRE(diag.grad[p] == full.grad[p]);
      ++p;
    }
  };
  check_factor(inst.layout.qf_row_chol(), 3);
  check_factor(inst.layout.qf_col_chol(), 2);
  check_factor(inst.layout.qw_chol(0), 3);
  check_factor(inst.layout.qw_chol(2), 2);
}
