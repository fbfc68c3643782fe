// Copyright 2026 The M2N Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "m2n/data.hpp"
#include "m2n/fusion.hpp"

namespace m2n {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class QueryError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct M2NConfig {
  std::size_t segments = 10;
  std::size_t visual_width = 32;
  std::size_t audio_width = 16;
  std::size_t width = 256;
  std::size_t heads = 4;
  std::size_t classes = 28;
  float eps = kNormEps;

  void validate() const;
};

// Module switches for ablation runs. A disabled stage is replaced by a
// shape-preserving stand-in: CMN/IMN by plain channel normalization, MSPM and
// MASM by the aligned fused sequence.
struct Ablation {
  bool cmn = true;
  bool imn = true;
  bool mspm = true;
  bool masm = true;
};

struct ModelParams {
  Linear proj_v;
  Linear proj_a;
  ModulatingNorm cmn_v;
  ModulatingNorm cmn_a;
  ModulatingNorm imn_v;
  ModulatingNorm imn_a;
  MspmParams mspm;
  MasmParams masm;
  Linear classifier;
  Linear relevance;

  static ModelParams init(const M2NConfig& cfg, std::uint64_t seed);
  ParameterList named() const;
};

struct ForwardTrace {
  Tensor f_v, f_a;        // projected inputs
  Tensor f_c_v, f_c_a;    // after cross-modal normalization
  Tensor f_i_v, f_i_a;    // after intra-modal normalization
  Tensor fused;           // f_i_v * f_i_a
  MspmTrace mspm;
  MasmTrace masm;
  Tensor proposal_branch;
  Tensor alignment_branch;
  Tensor f_av;
};

struct SelOutput {
  Tensor p_c;  // [C]
  Tensor p_r;  // [N]
  ForwardTrace trace;
};

// A2V: audio query, visual context. V2A: visual query, audio context.
enum class Direction { A2V, V2A };

class M2N {
 public:
  M2N(M2NConfig cfg, std::uint64_t seed, Ablation ablation = {});
  M2N(M2NConfig cfg, ModelParams params, Ablation ablation = {});

  const M2NConfig& config() const { return cfg_; }
  const Ablation& ablation() const { return ablation_; }
  ModelParams& params() { return params_; }
  const ModelParams& params() const { return params_; }
  ParameterList parameters() const { return params_.named(); }

  SelOutput forward_sel(const Tensor& visual, const Tensor& audio) const;
  SelOutput forward_sel(const SegmentFeatures& sample) const { return forward_sel(sample.visual, sample.audio); }

  // query: [l, width of query modality], 1 <= l <= N; context: [N, width of
  // the other modality]. Returns per-segment relevance [N] for the context.
  Tensor forward_cml(const Tensor& query, const Tensor& context, Direction dir, ForwardTrace* trace = nullptr) const;

 private:
  Tensor encode_fuse(const Tensor& visual, const Tensor& audio, bool skip_imn_v, bool skip_imn_a,
                     ForwardTrace& trace) const;
  Tensor relevance_head(const Tensor& f_av) const;

  M2NConfig cfg_;
  ModelParams params_;
  Ablation ablation_;
};

// Video-level cross-entropy plus mean per-segment binary cross-entropy.
Tensor loss_sel(const SelOutput& out, std::size_t video_class, std::span<const float> relevance);
// Mean per-segment binary cross-entropy.
Tensor loss_cml(const Tensor& p_r, std::span<const float> relevance);

inline constexpr float kRelevanceThreshold = 0.5f;

// Segment t gets argmax(p_c) when p_r[t] >= 0.5, otherwise kBackground.
std::vector<int> decode_sel(std::span<const float> p_c, std::span<const float> p_r);
inline std::vector<int> decode_sel(const SelOutput& out) { return decode_sel(out.p_c.data(), out.p_r.data()); }

// Start of the length-l window with the largest sum; ties go to the smallest start.
std::size_t decode_cml(std::span<const float> p_r, std::size_t length);

// Averages the l query rows and repeats the mean n times.
Tensor repeat_mean_rows(const Tensor& query, std::size_t n);

}  // namespace m2n
