// Copyright 2026 The M2N Authors
// SPDX-License-Identifier: Apache-2.0

#include "m2n/modulation.hpp"

#include <algorithm>

namespace m2n {

Tensor channel_normalize(const Tensor& x, float eps) {
  if (x.rank() != 2 || x.dim(1) < 2) {
    throw DimensionError("channel_normalize expects [n, d>=2], got " + shape_str(x.shape()));
  }
  return normalize_rows(x, eps);
}

ModulatingNorm ModulatingNorm::init(std::size_t width, std::size_t num_heads, Rng& rng, float eps) {
  ModulatingNorm m;
  m.mha = MultiHeadAttention::init(width, num_heads, rng);
  m.gamma = Linear::init(width, width, rng);
  // Scale starts near tanh(1) rather than 0 so stacked modulations keep
  // activations at unit scale.
  std::fill(m.gamma.bias.mutable_data().begin(), m.gamma.bias.mutable_data().end(), kGammaBiasInit);
  m.beta = Linear::init(width, width, rng);
  m.eps = eps;
  return m;
}

Tensor ModulatingNorm::cmn(const Tensor& target, const Tensor& source) const {
  if (target.shape() != source.shape()) {
    throw DimensionError("modulating norm shape mismatch: " + shape_str(target.shape()) + " vs " +
                         shape_str(source.shape()));
  }
  const Tensor m = mha.attend(target, source, source);
  const Tensor g = tanh(gamma(m));
  const Tensor b = tanh(beta(m));
  return add(mul(g, channel_normalize(target, eps)), b);
}

void ModulatingNorm::collect(const std::string& prefix, ParameterList& out) const {
  mha.collect(prefix + ".mha", out);
  gamma.collect(prefix + ".gamma", out);
  beta.collect(prefix + ".beta", out);
}

}  // namespace m2n
