// Copyright 2026 The M2N Authors
// SPDX-License-Identifier: Apache-2.0

#include "m2n/network.hpp"

#include <algorithm>

namespace m2n {

void M2NConfig::validate() const {
  if (segments < 1) throw ConfigError("segments must be >= 1");
  if (visual_width < 1 || audio_width < 1) throw ConfigError("input widths must be >= 1");
  if (width < 2) throw ConfigError("model width must be >= 2");
  if (heads < 1 || width % heads != 0) {
    throw ConfigError("model width " + std::to_string(width) + " not divisible by " + std::to_string(heads) + " heads");
  }
  if (classes < 1) throw ConfigError("classes must be >= 1");
  if (!(eps > 0.0f)) throw ConfigError("eps must be positive");
}

ModelParams ModelParams::init(const M2NConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(mix_seed(seed, 0x6d326e696e6974ULL));
  const std::size_t d = cfg.width, h = cfg.heads;
  ModelParams p;
  p.proj_v = Linear::init(cfg.visual_width, d, rng);
  p.proj_a = Linear::init(cfg.audio_width, d, rng);
  p.cmn_v = ModulatingNorm::init(d, h, rng, cfg.eps);
  p.cmn_a = ModulatingNorm::init(d, h, rng, cfg.eps);
  p.imn_v = ModulatingNorm::init(d, h, rng, cfg.eps);
  p.imn_a = ModulatingNorm::init(d, h, rng, cfg.eps);
  p.mspm = MspmParams::init(d, h, rng, cfg.eps);
  p.masm = MasmParams::init(d, h, rng, cfg.eps);
  p.classifier = Linear::init(d, cfg.classes, rng);
  p.relevance = Linear::init(d, 1, rng);
  return p;
}

ParameterList ModelParams::named() const {
  ParameterList out;
  proj_v.collect("proj_v", out);
  proj_a.collect("proj_a", out);
  cmn_v.collect("cmn_v", out);
  cmn_a.collect("cmn_a", out);
  imn_v.collect("imn_v", out);
  imn_a.collect("imn_a", out);
  mspm.collect("mspm", out);
  masm.collect("masm", out);
  classifier.collect("classifier", out);
  relevance.collect("relevance", out);
  return out;
}

M2N::M2N(M2NConfig cfg, std::uint64_t seed, Ablation ablation)
    : cfg_(cfg), params_(ModelParams::init(cfg, seed)), ablation_(ablation) {}

M2N::M2N(M2NConfig cfg, ModelParams params, Ablation ablation)
    : cfg_(cfg), params_(std::move(params)), ablation_(ablation) {
  cfg_.validate();
}

Tensor M2N::encode_fuse(const Tensor& visual, const Tensor& audio, bool skip_imn_v, bool skip_imn_a,
                        ForwardTrace& tr) const {
  const auto& p = params_;
  tr.f_v = p.proj_v(visual);
  tr.f_a = p.proj_a(audio);

  if (ablation_.cmn) {
    tr.f_c_v = p.cmn_v.cmn(tr.f_v, tr.f_a);
    tr.f_c_a = p.cmn_a.cmn(tr.f_a, tr.f_v);
  } else {
    tr.f_c_v = channel_normalize(tr.f_v, cfg_.eps);
    tr.f_c_a = channel_normalize(tr.f_a, cfg_.eps);
  }

  auto intra = [&](const ModulatingNorm& norm, const Tensor& x, bool skip) {
    if (skip) return x;
    return ablation_.imn ? norm.imn(x) : channel_normalize(x, cfg_.eps);
  };
  tr.f_i_v = intra(p.imn_v, tr.f_c_v, skip_imn_v);
  tr.f_i_a = intra(p.imn_a, tr.f_c_a, skip_imn_a);

  tr.fused = fuse(tr.f_i_v, tr.f_i_a);
  tr.proposal_branch = ablation_.mspm ? mspm(tr.fused, p.mspm, &tr.mspm) : tr.fused;
  tr.alignment_branch = ablation_.masm ? masm(tr.f_i_v, tr.f_i_a, p.masm, &tr.masm) : tr.fused;
  tr.f_av = fuse_final(tr.proposal_branch, tr.alignment_branch);
  return tr.f_av;
}

Tensor M2N::relevance_head(const Tensor& f_av) const {
  return reshape(sigmoid(params_.relevance(f_av)), {f_av.dim(0)});
}

namespace {

void check_input(const Tensor& x, std::size_t rows, std::size_t cols, const char* what) {
  if (x.rank() != 2 || x.dim(0) != rows || x.dim(1) != cols) {
    throw ConfigError(std::string(what) + " features " + shape_str(x.shape()) + " do not match configured [" +
                      std::to_string(rows) + "x" + std::to_string(cols) + "]");
  }
}

}  // namespace

SelOutput M2N::forward_sel(const Tensor& visual, const Tensor& audio) const {
  check_input(visual, cfg_.segments, cfg_.visual_width, "visual");
  check_input(audio, cfg_.segments, cfg_.audio_width, "audio");
  SelOutput out;
  const Tensor f_av = encode_fuse(visual, audio, false, false, out.trace);
  const Tensor pooled = reshape(max(f_av, 0), {1, cfg_.width});
  out.p_c = reshape(softmax(params_.classifier(pooled), 1), {cfg_.classes});
  out.p_r = relevance_head(f_av);
  return out;
}

Tensor repeat_mean_rows(const Tensor& query, std::size_t n) {
  if (query.rank() != 2 || query.dim(0) == 0) throw QueryError("query must be [l>=1, d]");
  const std::size_t l = query.dim(0), d = query.dim(1);
  std::vector<double> acc(d, 0.0);
  const auto src = query.data();
  for (std::size_t i = 0; i < l; ++i)
    for (std::size_t c = 0; c < d; ++c) acc[c] += src[i * d + c];
  std::vector<float> out(n * d);
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t c = 0; c < d; ++c) out[t * d + c] = static_cast<float>(acc[c] / static_cast<double>(l));
  return Tensor({n, d}, std::move(out));
}

Tensor M2N::forward_cml(const Tensor& query, const Tensor& context, Direction dir, ForwardTrace* trace) const {
  const bool audio_query = dir == Direction::A2V;
  const std::size_t n = cfg_.segments;
  const std::size_t q_width = audio_query ? cfg_.audio_width : cfg_.visual_width;
  const std::size_t c_width = audio_query ? cfg_.visual_width : cfg_.audio_width;
  if (query.rank() != 2 || query.dim(0) < 1 || query.dim(0) > n) {
    throw QueryError("query length must be in [1, " + std::to_string(n) + "], got shape " + shape_str(query.shape()));
  }
  check_input(query, query.dim(0), q_width, "query");
  check_input(context, n, c_width, "context");

  const Tensor repeated = repeat_mean_rows(query, n);
  ForwardTrace local;
  ForwardTrace& tr = trace ? *trace : local;
  const Tensor f_av = audio_query ? encode_fuse(context, repeated, false, true, tr)
                                  : encode_fuse(repeated, context, true, false, tr);
  return relevance_head(f_av);
}

Tensor loss_sel(const SelOutput& out, std::size_t video_class, std::span<const float> relevance) {
  if (video_class >= out.p_c.numel()) {
    throw std::out_of_range("video class " + std::to_string(video_class) + " out of range");
  }
  if (relevance.size() != out.p_r.numel()) throw std::out_of_range("relevance label count mismatch");
  for (float r : relevance) {
    if (r != 0.0f && r != 1.0f) throw std::out_of_range("relevance labels must be 0 or 1");
  }
  return add(negative_log_likelihood(out.p_c, video_class), binary_cross_entropy(out.p_r, relevance));
}

Tensor loss_cml(const Tensor& p_r, std::span<const float> relevance) { return binary_cross_entropy(p_r, relevance); }

std::vector<int> decode_sel(std::span<const float> p_c, std::span<const float> p_r) {
  const auto best = std::max_element(p_c.begin(), p_c.end()) - p_c.begin();
  std::vector<int> labels(p_r.size());
  for (std::size_t t = 0; t < p_r.size(); ++t) {
    labels[t] = p_r[t] >= kRelevanceThreshold ? static_cast<int>(best) : kBackground;
  }
  return labels;
}

std::size_t decode_cml(std::span<const float> p_r, std::size_t length) {
  const std::size_t n = p_r.size();
  if (length < 1 || length > n) {
    throw QueryError("window length " + std::to_string(length) + " outside [1, " + std::to_string(n) + "]");
  }
  // Each window is summed afresh, left to right, in double.
  std::size_t best = 0;
  double best_sum = -1.0;
  for (std::size_t s = 0; s + length <= n; ++s) {
    double window = 0.0;
    for (std::size_t t = s; t < s + length; ++t) window += p_r[t];
    if (s == 0 || window > best_sum) {
      best_sum = window;
      best = s;
    }
  }
  return best;
}

}  // namespace m2n
