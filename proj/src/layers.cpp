// Copyright 2026 The M2N Authors
// SPDX-License-Identifier: Apache-2.0

#include "m2n/layers.hpp"

#include <cmath>

namespace m2n {

Tensor uniform_parameter(Shape shape, float bound, Rng& rng) {
  std::vector<float> data(shape_numel(shape));
  for (auto& v : data) v = rng.uniform(-bound, bound);
  return Tensor(std::move(shape), std::move(data), true);
}

Linear Linear::init(std::size_t in, std::size_t out, Rng& rng) {
  const float bound = 1.0f / std::sqrt(static_cast<float>(in));
  return Linear{uniform_parameter({in, out}, bound, rng), Tensor::zeros({1, out}, true)};
}

Tensor Linear::operator()(const Tensor& x) const { return add(matmul(x, weight), bias); }

void Linear::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

}  // namespace m2n
