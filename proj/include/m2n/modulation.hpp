// Copyright 2026 The M2N Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "m2n/attention.hpp"

namespace m2n {

inline constexpr float kNormEps = 1e-5f;
inline constexpr float kGammaBiasInit = 1.0f;

// Per segment: (x - mean) / (population std + eps) over the d channels.
Tensor channel_normalize(const Tensor& x, float eps = kNormEps);

// Normalization whose scale and shift are computed by attention over a
// conditioning sequence:
//   m = MHA(target, source, source)
//   gamma = tanh(Linear(m)), beta = tanh(Linear(m))
//   out = gamma * channel_normalize(target) + beta
// Cross-modal use conditions on the other modality; intra-modal use passes
// the sequence as its own source.
struct ModulatingNorm {
  MultiHeadAttention mha;
  Linear gamma;
  Linear beta;
  float eps = kNormEps;

  static ModulatingNorm init(std::size_t width, std::size_t num_heads, Rng& rng, float eps = kNormEps);

  Tensor cmn(const Tensor& target, const Tensor& source) const;
  Tensor imn(const Tensor& x) const { return cmn(x, x); }

  void collect(const std::string& prefix, ParameterList& out) const;
};

}  // namespace m2n
