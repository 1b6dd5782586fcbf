// Allocation audit: one ELBO + gradient evaluation at D = 10^4 must never
// allocate a single block larger than max(N^2, K^2, d_m^2, N*D*K) doubles
// (in particular nothing of size D x D). Separate binary because it
// interposes malloc.

#include <cstdio>
#include <vector>

#include "alloc_audit.hpp"
#include "gprn/gradient.hpp"

using namespace gprn;

namespace {

int failures = 0;

void expect(bool ok, const char* what) {
  std::printf("%s %s\n", ok ? "[pass]" : "[FAIL]", what);
  if (!ok) ++failures;
}

}  // namespace

int main() {
  // First prove the interposition sees large allocations at all; a silent
  // no-op tracker would make the audit below meaningless.
  gprn_test::audit_begin();
  {
    std::vector<double> canary(1 << 20);
    canary[123] = 1.0;
    if (canary[123] != 1.0) return 1;
  }
  const std::size_t canary_peak = gprn_test::audit_end();
  expect(canary_peak >= (std::size_t{1} << 20) * sizeof(double), "audit hook records a 8 MiB canary allocation");

  const Index n = 8, k = 2;
  const TensorizationSpec spec = TensorizationSpec::equal_modes(10000, 2);  // 100 x 100
  const ParamLayout layout(n, k, spec);
  auto [qf, qw] = init_posteriors(n, k, spec, 1, 0.1, 0.1);
  GprnHyper hyper;
  hyper.log_sigma_f = std::log(0.1);
  hyper.log_sigma_y = std::log(0.1);
  const VectorXd params = pack(layout, InferenceState{std::move(qf), std::move(qw), hyper});

  Rng rng(2);
  const MatrixXd x = normal_matrix(rng, n, 2);
  const MatrixXd y = normal_matrix(rng, n, spec.D());

  // Warm-up outside the audit so lazy one-time allocations don't pollute it.
  (void)elbo_gradient(layout, params, x, y);

  gprn_test::audit_begin();
  const ElboGradient eg = elbo_gradient(layout, params, x, y);
  const std::size_t peak = gprn_test::audit_end();

  const std::size_t max_entries = static_cast<std::size_t>(
      std::max<Index>({n * n, k * k, 100 * 100, n * k * spec.D()}));
  const std::size_t limit = max_entries * sizeof(double) * 3 / 2 + 4096;
  const std::size_t dxd = static_cast<std::size_t>(spec.D()) * static_cast<std::size_t>(spec.D()) * sizeof(double);

  std::printf("peak single allocation: %zu bytes (limit %zu, DxD would be %zu)\n", peak, limit, dxd);
  expect(std::isfinite(eg.value.total), "gradient evaluation is finite");
  expect(peak <= limit, "no allocation above max(N^2, K^2, d_m^2, NDK) entries");
  expect(peak < dxd, "no D x D allocation");

  return failures == 0 ? 0 : 1;
}
