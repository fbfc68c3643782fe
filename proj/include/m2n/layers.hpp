// Copyright 2026 The M2N Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "m2n/rng.hpp"
#include "m2n/tensor.hpp"

namespace m2n {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Flat, ordered view of learnable tensors. Entries share storage with the
// owning module.
using ParameterList = std::vector<NamedTensor>;

// Leaf parameter drawn uniformly from [-bound, bound].
Tensor uniform_parameter(Shape shape, float bound, Rng& rng);

// x * W + b with W stored [in, out] and b stored [1, out].
struct Linear {
  Tensor weight;
  Tensor bias;

  static Linear init(std::size_t in, std::size_t out, Rng& rng);

  Tensor operator()(const Tensor& x) const;
  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }
  void collect(const std::string& prefix, ParameterList& out) const;
};

}  // namespace m2n
