// Copyright 2026 The M2N Authors
// SPDX-License-Identifier: Apache-2.0

#include "m2n/fusion.hpp"

#include <cmath>

namespace m2n {

namespace {

void require_same(const Tensor& a, const Tensor& b, const char* what) {
  if (a.rank() != 2 || a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + " expects equal [N, d] inputs, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
}

}  // namespace

Tensor fuse(const Tensor& f_v, const Tensor& f_a) {
  require_same(f_v, f_a, "fuse");
  return mul(f_v, f_a);
}

Tensor fuse_final(const Tensor& proposal_branch, const Tensor& alignment_branch) {
  require_same(proposal_branch, alignment_branch, "fuse_final");
  return add(proposal_branch, alignment_branch);
}

std::vector<bool> upper_triangle_mask(std::size_t n) {
  std::vector<bool> mask(n * n, false);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) mask[i * n + j] = true;
  return mask;
}

Tensor proposal_pooling_matrix(std::size_t n) {
  std::vector<float> p(n * n * n, 0.0f);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const float w = 1.0f / static_cast<float>(j - i + 1);
      for (std::size_t k = i; k <= j; ++k) p[(i * n + j) * n + k] = w;
    }
  }
  return Tensor({n * n, n}, std::move(p));
}

ProposalMap build_proposal_map(const Tensor& f_ms) {
  if (f_ms.rank() != 2 || f_ms.dim(0) == 0) {
    throw DimensionError("build_proposal_map expects [N>=1, d], got " + shape_str(f_ms.shape()));
  }
  const std::size_t n = f_ms.dim(0), d = f_ms.dim(1);
  const Tensor flat = matmul(proposal_pooling_matrix(n), f_ms);
  return ProposalMap{reshape(flat, {n, n, d}), upper_triangle_mask(n)};
}

Tensor build_alignment_map(const Tensor& f_v, const Tensor& f_a) {
  require_same(f_v, f_a, "build_alignment_map");
  const std::size_t n = f_v.dim(0);
  std::vector<std::size_t> visual_rows(n * n), audio_rows(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      visual_rows[i * n + j] = i;
      audio_rows[i * n + j] = j;
    }
  }
  return mul(gather_rows(f_v, visual_rows), gather_rows(f_a, audio_rows));
}

std::vector<std::size_t> diagonal_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  for (std::size_t t = 0; t < n; ++t) rows[t] = t * n + t;
  return rows;
}

MspmParams MspmParams::init(std::size_t width, std::size_t num_heads, Rng& rng, float eps) {
  MspmParams p;
  p.imn_fused = ModulatingNorm::init(width, num_heads, rng, eps);
  const float conv_bound = 1.0f / std::sqrt(static_cast<float>(9 * width));
  p.conv_weight = uniform_parameter({3, 3, width, width}, conv_bound, rng);
  p.conv_bias = Tensor::zeros({1, width}, true);
  p.w_ms = uniform_parameter({width, width}, 1.0f / std::sqrt(static_cast<float>(width)), rng);
  p.mha_out = MultiHeadAttention::init(width, num_heads, rng);
  return p;
}

void MspmParams::collect(const std::string& prefix, ParameterList& out) const {
  imn_fused.collect(prefix + ".imn_fused", out);
  out.push_back({prefix + ".conv.weight", conv_weight});
  out.push_back({prefix + ".conv.bias", conv_bias});
  out.push_back({prefix + ".w_ms", w_ms});
  mha_out.collect(prefix + ".mha_out", out);
}

Tensor mspm(const Tensor& f, const MspmParams& p, MspmTrace* trace) {
  if (f.rank() != 2 || f.dim(0) == 0) throw DimensionError("mspm expects [N>=1, d], got " + shape_str(f.shape()));
  const std::size_t n = f.dim(0);

  const Tensor f_ms = p.imn_fused.imn(f);
  ProposalMap proposals = build_proposal_map(f_ms);

  // Relation-aware map with residual; spans with i > j stay zero.
  std::vector<float> tri(n * n, 0.0f);
  for (std::size_t k = 0; k < n * n; ++k) tri[k] = proposals.valid[k] ? 1.0f : 0.0f;
  const Tensor tri_mask({n, n, 1}, std::move(tri));
  const Tensor conv = conv2d_same(proposals.features, p.conv_weight, p.conv_bias);
  const Tensor relation = mul(add(conv, proposals.features), tri_mask);

  // Proposal relation scores, softmax over end index j >= i for each start i.
  const Tensor proj = matmul(f_ms, p.w_ms);
  const Tensor scores = matmul(proj, transpose(proj));
  const Tensor weights = softmax(scores, 1, &proposals.valid);

  const Tensor weighted = mul(reshape(weights, {n, n, 1}), relation);
  const Tensor aggregated = add(sum(weighted, 1), f_ms);
  Tensor out = p.mha_out.attend(aggregated, aggregated, aggregated);

  if (trace) {
    trace->f_ms = f_ms;
    trace->proposals = std::move(proposals);
    trace->relation_map = relation;
    trace->weights = weights;
    trace->aggregated = aggregated;
    trace->output = out;
  }
  return out;
}

MasmParams MasmParams::init(std::size_t width, std::size_t num_heads, Rng& rng, float eps) {
  return MasmParams{ModulatingNorm::init(width, num_heads, rng, eps)};
}

void MasmParams::collect(const std::string& prefix, ParameterList& out) const {
  imn_pairs.collect(prefix + ".imn_pairs", out);
}

Tensor masm(const Tensor& f_v, const Tensor& f_a, const MasmParams& p, MasmTrace* trace) {
  require_same(f_v, f_a, "masm");
  const std::size_t n = f_v.dim(0);
  const Tensor alignment = build_alignment_map(f_v, f_a);
  const Tensor modulated = p.imn_pairs.imn(alignment);
  Tensor out = gather_rows(modulated, diagonal_rows(n));
  if (trace) {
    trace->alignment = alignment;
    trace->modulated = modulated;
    trace->output = out;
  }
  return out;
}

}  // namespace m2n
