#pragma once

#include <vector>

#include "gprn/cholesky.hpp"
#include "gprn/tensor.hpp"

namespace gprn {

// Kronecker-structured covariance G_1 (x) G_2 (x) ... (x) G_P where
// G_m = L_m L_m^T and the factor order matches the tensor mode order (see
// the vec convention in tensor.hpp).
struct KronCov {
  std::vector<CholFactor> factors;

  explicit KronCov(std::vector<CholFactor> f);

  Index total_dim() const;
  std::vector<Index> dims() const;
};

// log|G_1 (x) ... (x) G_P| = sum_m (total/dim_m) logdet(G_m); O(sum_m dim_m).
double kron_logdet(const KronCov& cov);

// tr(G_1 (x) ... (x) G_P) = prod_m tr(G_m).
double kron_trace(const KronCov& cov);

// Draws `count` tensors X = mean + Z x_1 L_1 x_2 L_2 ... with Z iid standard
// normal, so vec(X) ~ N(vec(mean), G_1 (x) ... (x) G_P). Deterministic for a
// given seed.
std::vector<Tensor> sample_kron_normal(const Tensor& mean, const KronCov& cov, std::uint64_t seed, int count);

// Single draw from a caller-owned generator (parallel callers derive their
// own seeds; see derive_seed).
Tensor sample_kron_normal_one(const Tensor& mean, const KronCov& cov, Rng& rng);

}  // namespace gprn
