#include "gprn/kron.hpp"

namespace gprn {

KronCov::KronCov(std::vector<CholFactor> f) : factors(std::move(f)) {
  if (factors.empty()) throw std::invalid_argument("KronCov: needs at least one factor");
}

Index KronCov::total_dim() const {
  Index total = 1;
  for (const auto& f : factors) total *= f.dim();
  return total;
}

std::vector<Index> KronCov::dims() const {
  std::vector<Index> d;
  d.reserve(factors.size());
  for (const auto& f : factors) d.push_back(f.dim());
  return d;
}

double kron_logdet(const KronCov& cov) {
  const Index total = cov.total_dim();
  double logdet = 0.0;
  for (const auto& f : cov.factors) logdet += static_cast<double>(total / f.dim()) * f.logdet_cov();
  return logdet;
}

double kron_trace(const KronCov& cov) {
  double trace = 1.0;
  for (const auto& f : cov.factors) trace *= f.trace_cov();
  return trace;
}

Tensor sample_kron_normal_one(const Tensor& mean, const KronCov& cov, Rng& rng) {
  if (mean.dims() != cov.dims()) throw std::invalid_argument("sample_kron_normal: mean shape does not match factors");
  std::normal_distribution<double> dist(0.0, 1.0);
  Tensor z(mean.dims());
  for (Index i = 0; i < z.size(); ++i) z[i] = dist(rng);
  for (Index m = 0; m < static_cast<Index>(cov.factors.size()); ++m)
    z = ttm(z, cov.factors[static_cast<std::size_t>(m)].factor(), m);
  z.vec() += mean.vec();
  return z;
}

std::vector<Tensor> sample_kron_normal(const Tensor& mean, const KronCov& cov, std::uint64_t seed, int count) {
  std::vector<Tensor> samples;
  samples.reserve(static_cast<std::size_t>(count));
  Rng rng(seed);
  for (int s = 0; s < count; ++s) samples.push_back(sample_kron_normal_one(mean, cov, rng));
  return samples;
}

}  // namespace gprn
