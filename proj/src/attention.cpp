// Copyright 2026 The M2N Authors
// SPDX-License-Identifier: Apache-2.0

#include "m2n/attention.hpp"

#include <cmath>

namespace m2n {

MultiHeadAttention MultiHeadAttention::init(std::size_t width, std::size_t num_heads, Rng& rng) {
  if (num_heads == 0 || width % num_heads != 0) {
    throw DimensionError("attention width " + std::to_string(width) + " not divisible by " +
                         std::to_string(num_heads) + " heads");
  }
  const std::size_t head_width = width / num_heads;
  MultiHeadAttention mha;
  for (std::size_t i = 0; i < num_heads; ++i) {
    Head h;
    h.query = Linear::init(width, head_width, rng);
    h.key = Linear::init(width, head_width, rng);
    h.value = Linear::init(width, head_width, rng);
    mha.heads.push_back(std::move(h));
  }
  mha.output = Linear::init(head_width * num_heads, width, rng);
  return mha;
}

Tensor MultiHeadAttention::attend(const Tensor& q, const Tensor& k, const Tensor& v) const {
  const std::size_t d = width();
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || q.dim(1) != d || k.dim(1) != d || v.dim(1) != d) {
    throw DimensionError("attention expects [n, " + std::to_string(d) + "] inputs, got q" + shape_str(q.shape()) +
                         " k" + shape_str(k.shape()) + " v" + shape_str(v.shape()));
  }
  if (k.dim(0) != v.dim(0)) throw DimensionError("attention key/value length mismatch");
  const float inv_scale = 1.0f / std::sqrt(static_cast<float>(head_width()));
  std::vector<Tensor> outs;
  outs.reserve(heads.size());
  for (const auto& h : heads) {
    const Tensor qh = h.query(q);
    const Tensor kh = h.key(k);
    const Tensor vh = h.value(v);
    const Tensor scores = scale(matmul(qh, transpose(kh)), inv_scale);
    outs.push_back(matmul(softmax(scores, 1), vh));
  }
  return output(concat_cols(outs));
}

void MultiHeadAttention::collect(const std::string& prefix, ParameterList& out) const {
  for (std::size_t i = 0; i < heads.size(); ++i) {
    const std::string p = prefix + ".head" + std::to_string(i);
    heads[i].query.collect(p + ".query", out);
    heads[i].key.collect(p + ".key", out);
    heads[i].value.collect(p + ".value", out);
  }
  output.collect(prefix + ".output", out);
}

}  // namespace m2n
