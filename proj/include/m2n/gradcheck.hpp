// Copyright 2026 The M2N Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "m2n/train.hpp"

namespace m2n {

struct GradCheckConfig {
  std::size_t segments = 4;
  std::size_t width = 8;
  std::size_t heads = 2;
  std::size_t classes = 3;
  std::size_t visual_width = 6;
  std::size_t audio_width = 5;
  double tol = 1e-2;
  float step = 3e-3f;  // float32 loss quantization swamps smaller steps
  std::uint64_t seed = 7;
  Task task = Task::Sel;
  // Test hook: the analytic gradient of this parameter is perturbed after
  // backward, standing in for a broken backward rule.
  std::string fault_param;
};

struct GradCheckEntry {
  std::string name;
  std::size_t size = 0;
  double max_error = 0.0;
  bool passed = true;
};

// Error for one coordinate: |analytic - numeric| / max(|analytic|, |numeric|, 1e-2).
// With tol = 1e-2 this accepts a coordinate when the absolute error is within
// 1e-4 or the relative error is within 1e-2.
double gradient_error(double analytic, double numeric);

// Compares every parameter's analytic gradient of the task loss on a random
// sample against central finite differences. One entry per parameter, in
// registration order.
std::vector<GradCheckEntry> gradient_check(const GradCheckConfig& cfg);

}  // namespace m2n
