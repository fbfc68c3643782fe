// Copyright 2026 The M2N Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "m2n/layers.hpp"

namespace m2n {

// Multi-head scaled dot-product attention. Each head projects queries, keys
// and values from width d to d/h, attends with scale 1/sqrt(d/h), and the
// concatenated heads are projected back to d. No positional encoding, no
// masking, no residual.
struct MultiHeadAttention {
  struct Head {
    Linear query;
    Linear key;
    Linear value;
  };

  std::vector<Head> heads;
  Linear output;

  static MultiHeadAttention init(std::size_t width, std::size_t num_heads, Rng& rng);

  std::size_t width() const { return output.out_features(); }
  std::size_t head_width() const { return heads.front().query.out_features(); }

  // q: [n_q, d], k and v: [n_k, d]  ->  [n_q, d]
  Tensor attend(const Tensor& q, const Tensor& k, const Tensor& v) const;

  void collect(const std::string& prefix, ParameterList& out) const;
};

}  // namespace m2n
