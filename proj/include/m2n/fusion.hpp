// Copyright 2026 The M2N Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "m2n/modulation.hpp"

namespace m2n {

// Temporally aligned fusion: elementwise product of the two modalities.
Tensor fuse(const Tensor& f_v, const Tensor& f_a);

// Final fused feature: sum of the proposal and alignment branches.
Tensor fuse_final(const Tensor& proposal_branch, const Tensor& alignment_branch);

// Start/end grid of candidate spans. features[i][j] (i <= j) is the mean of
// segments i..j; entries with i > j are zero and invalid.
struct ProposalMap {
  Tensor features;          // [N, N, d]
  std::vector<bool> valid;  // N*N, row-major, valid iff i <= j

  std::size_t segments() const { return features.dim(0); }
};

// Mask of N*N entries that are true where i <= j.
std::vector<bool> upper_triangle_mask(std::size_t n);

// Constant [N*N, N] matrix P with P[i*N+j][k] = 1/(j-i+1) for i <= k <= j.
Tensor proposal_pooling_matrix(std::size_t n);

ProposalMap build_proposal_map(const Tensor& f_ms);

// Dense visual x audio product grid, flattened visual-major to [N*N, d]:
// row i*N+j holds f_v[i] * f_a[j].
Tensor build_alignment_map(const Tensor& f_v, const Tensor& f_a);

struct MspmParams {
  ModulatingNorm imn_fused;
  Tensor conv_weight;  // [3, 3, d, d]
  Tensor conv_bias;    // [1, d]
  Tensor w_ms;         // [d, d]
  MultiHeadAttention mha_out;

  static MspmParams init(std::size_t width, std::size_t num_heads, Rng& rng, float eps = kNormEps);
  void collect(const std::string& prefix, ParameterList& out) const;
};

struct MspmTrace {
  Tensor f_ms;           // [N, d] fused sequence after intra-modal normalization
  ProposalMap proposals;
  Tensor relation_map;   // [N, N, d] conv(F) + F, zeroed where i > j
  Tensor weights;        // [N, N] masked softmax over end index
  Tensor aggregated;     // [N, d] weighted proposal sum plus f_ms
  Tensor output;         // [N, d]
};

// Multi-scale proposal modulation of the fused sequence f.
Tensor mspm(const Tensor& f, const MspmParams& p, MspmTrace* trace = nullptr);

struct MasmParams {
  ModulatingNorm imn_pairs;

  static MasmParams init(std::size_t width, std::size_t num_heads, Rng& rng, float eps = kNormEps);
  void collect(const std::string& prefix, ParameterList& out) const;
};

struct MasmTrace {
  Tensor alignment;    // [N*N, d]
  Tensor modulated;    // [N*N, d]
  Tensor output;       // [N, d]
};

// Multi-alignment modulation: intra-modal normalization over all N*N
// cross-modal pairs, then the aligned (diagonal) pairs.
Tensor masm(const Tensor& f_v, const Tensor& f_a, const MasmParams& p, MasmTrace* trace = nullptr);

// Flat row indices t*N+t of the diagonal of an N x N grid.
std::vector<std::size_t> diagonal_rows(std::size_t n);

}  // namespace m2n
