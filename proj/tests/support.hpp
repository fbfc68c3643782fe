// Copyright 2026 The M2N Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "m2n/rng.hpp"
#include "m2n/tensor.hpp"

namespace m2n::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, float scale = 1.0f, bool requires_grad = true) {
  std::vector<float> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(-scale, scale);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

inline std::vector<float> random_weights(std::size_t n, Rng& rng) {
  std::vector<float> w(n);
  for (auto& x : w) x = rng.uniform(-1.0f, 1.0f);
  return w;
}

// Scalar loss sum_i out[i] * w[i], built from recorded ops.
inline Tensor weighted_sum(const Tensor& out, const std::vector<float>& w) {
  Tensor flat = reshape(out, {1, out.numel()});
  Tensor col({w.size(), 1}, w);
  return reshape(matmul(flat, col), {});
}

// Same contraction evaluated in double without recording.
inline double weighted_sum_value(const Tensor& out, const std::vector<float>& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) s += static_cast<double>(out.data()[i]) * w[i];
  return s;
}

// Per-coordinate error of the form max(abs, rel) used throughout:
// |a - n| / max(|a|, |n|, floor).
inline double grad_error(double a, double n, double floor = 1e-2) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

// Step for composed modules. Contracting dozens of O(1) float outputs leaves
// roundoff near 1e-6 in the loss, which a 1e-3 step turns into gradient noise
// above the 1e-4 absolute floor.
inline constexpr float kModuleStep = 1e-2f;

// Largest error between the recorded gradient of sum(f(inputs) * w) and
// central differences with step h, over every coordinate of every input.
inline double max_grad_error(const std::function<Tensor()>& f, std::vector<Tensor> inputs, Rng& rng,
                             float h = 1e-3f) {
  std::vector<float> w;
  {
    Tensor probe = f();
    w = random_weights(probe.numel(), rng);
  }
  for (auto& x : inputs) x.zero_grad();
  {
    Tape tape;
    TapeScope scope(tape);
    tape.backward(weighted_sum(f(), w));
  }
  double worst = 0.0;
  for (auto& x : inputs) {
    auto theta = x.mutable_data();
    const std::vector<float> grad(x.grad().begin(), x.grad().end());
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const float orig = theta[i];
      const float hi = orig + h, lo = orig - h;
      theta[i] = hi;
      const double up = weighted_sum_value(f(), w);
      theta[i] = lo;
      const double down = weighted_sum_value(f(), w);
      theta[i] = orig;
      const double numeric = (up - down) / (static_cast<double>(hi) - lo);
      worst = std::max(worst, grad_error(grad.empty() ? 0.0 : grad[i], numeric));
    }
  }
  return worst;
}

inline double max_abs_diff(std::span<const float> a, std::span<const float> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  return m;
}

}  // namespace m2n::testing
