// Copyright 2026 The M2N Authors
// SPDX-License-Identifier: Apache-2.0

#include "m2n/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace m2n {

double gradient_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-2});
  return std::abs(analytic - numeric) / scale;
}

std::vector<GradCheckEntry> gradient_check(const GradCheckConfig& cfg) {
  M2NConfig mc;
  mc.segments = cfg.segments;
  mc.visual_width = cfg.visual_width;
  mc.audio_width = cfg.audio_width;
  mc.width = cfg.width;
  mc.heads = cfg.heads;
  mc.classes = cfg.classes;
  M2N model(mc, cfg.seed);

  GenSpec gs;
  gs.seed = cfg.seed;
  gs.num_samples = 1;
  gs.segments = cfg.segments;
  gs.visual_width = cfg.visual_width;
  gs.audio_width = cfg.audio_width;
  gs.num_classes = cfg.classes;
  const SegmentFeatures sample = generate(gs).front();

  ParameterList params = task_parameters(model, cfg.task);
  {
    Tape tape;
    TapeScope scope(tape);
    tape.backward(sample_loss(model, sample, cfg.task));
  }
  for (auto& p : params) {
    if (p.name == cfg.fault_param) {
      auto g = p.tensor.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = g[i] * 1.5f + 0.05f;
    }
  }

  auto loss_at = [&] { return static_cast<double>(sample_loss(model, sample, cfg.task).item()); };

  std::vector<GradCheckEntry> report;
  for (auto& p : params) {
    GradCheckEntry entry;
    entry.name = p.name;
    entry.size = p.tensor.numel();
    auto theta = p.tensor.mutable_data();
    const auto grad = p.tensor.grad();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const float orig = theta[i];
      const float hi = orig + cfg.step;
      const float lo = orig - cfg.step;
      theta[i] = hi;
      const double up = loss_at();
      theta[i] = lo;
      const double down = loss_at();
      theta[i] = orig;
      const double numeric = (up - down) / (static_cast<double>(hi) - static_cast<double>(lo));
      const double analytic = grad.empty() ? 0.0 : grad[i];
      entry.max_error = std::max(entry.max_error, gradient_error(analytic, numeric));
    }
    entry.passed = entry.max_error <= cfg.tol;
    p.tensor.zero_grad();
    report.push_back(std::move(entry));
  }
  return report;
}

}  // namespace m2n
