// Copyright 2026 The M2N Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <numeric>

#include "doctest.h"
#include "m2n/fusion.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace m2n;
using namespace m2n::testing;

namespace {

Tensor permute_rows(const Tensor& x, const std::vector<std::size_t>& perm) { return gather_rows(x, perm); }

std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  rng.shuffle(p);
  return p;
}

}  // namespace

TEST_CASE("linear layer shapes and init") {
  Rng rng(1);
  Linear lin = Linear::init(6, 4, rng);
  CHECK(lin.weight.shape() == Shape{6, 4});
  CHECK(lin.bias.shape() == Shape{1, 4});
  const float bound = 1.0f / std::sqrt(6.0f);
  for (float w : lin.weight.data()) CHECK(std::abs(w) <= bound);
  Tensor x = random_tensor({3, 6}, rng);
  CHECK(lin(x).shape() == Shape{3, 4});
  ParameterList params;
  lin.collect("p", params);
  REQUIRE(params.size() == 2);
  CHECK(params[0].name == "p.weight");
  CHECK(params[1].name == "p.bias");
}

TEST_CASE("attention agrees with a per-head loop") {
  Rng rng(2);
  for (auto [d, h, nq, nk] : {std::array<std::size_t, 4>{8, 2, 4, 5}, {12, 3, 1, 7}, {16, 4, 6, 6}, {6, 1, 3, 2}}) {
    MultiHeadAttention mha = MultiHeadAttention::init(d, h, rng);
    Tensor q = random_tensor({nq, d}, rng, 1.0f, false);
    Tensor k = random_tensor({nk, d}, rng, 1.0f, false);
    Tensor v = random_tensor({nk, d}, rng, 1.0f, false);
    const Tensor out = mha.attend(q, k, v);
    const auto expect = attention_oracle(mha, q, k, v);
    REQUIRE(out.numel() == expect.size());
    for (std::size_t i = 0; i < expect.size(); ++i) CHECK(std::abs(out.data()[i] - expect[i]) <= 1e-5);
  }
}

TEST_CASE("attention rejects widths not divisible by the head count") {
  Rng rng(3);
  CHECK_THROWS_AS(MultiHeadAttention::init(10, 4, rng), DimensionError);
}

TEST_CASE("attention over identical keys returns the value projection") {
  Rng rng(4);
  MultiHeadAttention mha = MultiHeadAttention::init(8, 2, rng);
  Tensor row = random_tensor({1, 8}, rng, 1.0f, false);
  Tensor kv = gather_rows(row, std::vector<std::size_t>{0, 0, 0});
  Tensor q = random_tensor({2, 8}, rng, 1.0f, false);
  const Tensor many = mha.attend(q, kv, kv);
  const Tensor one = mha.attend(q, row, row);
  CHECK(max_abs_diff(many.data(), one.data()) <= 1e-6);
}

TEST_CASE("attention is invariant to a joint key/value permutation") {
  Rng rng(5);
  MultiHeadAttention mha = MultiHeadAttention::init(8, 2, rng);
  Tensor q = random_tensor({4, 8}, rng, 1.0f, false);
  Tensor k = random_tensor({6, 8}, rng, 1.0f, false);
  Tensor v = random_tensor({6, 8}, rng, 1.0f, false);
  for (int trial = 0; trial < 10; ++trial) {
    const auto perm = shuffled(6, rng);
    const Tensor a = mha.attend(q, k, v);
    const Tensor b = mha.attend(q, permute_rows(k, perm), permute_rows(v, perm));
    CHECK(max_abs_diff(a.data(), b.data()) <= 1e-6);
  }
}

TEST_CASE("attention gradient matches finite differences") {
  Rng rng(6);
  MultiHeadAttention mha = MultiHeadAttention::init(8, 2, rng);
  Tensor q = random_tensor({3, 8}, rng);
  Tensor k = random_tensor({4, 8}, rng);
  ParameterList params;
  mha.collect("mha", params);
  std::vector<Tensor> inputs{q, k};
  for (auto& p : params) inputs.push_back(p.tensor);
  CHECK(max_grad_error([&] { return mha.attend(q, k, k); }, inputs, rng, kModuleStep) <= 1e-2);
}

TEST_CASE("channel_normalize row statistics") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng.below(8), d = 2 + rng.below(30);
    Tensor x = random_tensor({n, d}, rng, 5.0f, false);
    const Tensor z = channel_normalize(x);
    for (std::size_t i = 0; i < n; ++i) {
      double raw_mu = 0.0, raw_var = 0.0;
      for (std::size_t c = 0; c < d; ++c) raw_mu += x.at({i, c});
      raw_mu /= static_cast<double>(d);
      for (std::size_t c = 0; c < d; ++c) raw_var += (x.at({i, c}) - raw_mu) * (x.at({i, c}) - raw_mu);
      // eps shrinks the std by eps/sigma; below 1e-2 that alone exceeds 1e-3.
      const bool spread = std::sqrt(raw_var / static_cast<double>(d)) >= 1e-2;
      double mu = 0.0, var = 0.0;
      for (std::size_t c = 0; c < d; ++c) mu += z.at({i, c});
      mu /= static_cast<double>(d);
      for (std::size_t c = 0; c < d; ++c) var += (z.at({i, c}) - mu) * (z.at({i, c}) - mu);
      CHECK(std::abs(mu) < 1e-5);
      if (spread) CHECK(std::abs(std::sqrt(var / static_cast<double>(d)) - 1.0) < 1e-3);
    }
  }
  CHECK_THROWS_AS(channel_normalize(Tensor::zeros({3, 1})), DimensionError);
  const Tensor zc = channel_normalize(Tensor::full({2, 5}, 4.0f));
  for (float v : zc.data()) CHECK(v == 0.0f);
}

TEST_CASE("modulating norm") {
  Rng rng(8);
  ModulatingNorm mn = ModulatingNorm::init(8, 2, rng);
  Tensor x = random_tensor({5, 8}, rng, 2.0f);
  Tensor y = random_tensor({5, 8}, rng, 2.0f);

  SUBCASE("imn is cmn with the sequence as its own source") {
    CHECK(max_abs_diff(mn.imn(x).data(), mn.cmn(x, x).data()) == 0.0);
  }
  SUBCASE("output is bounded by |z| + 1") {
    const Tensor out = mn.cmn(x, y);
    const Tensor z = channel_normalize(x);
    for (std::size_t i = 0; i < out.numel(); ++i) CHECK(std::abs(out.data()[i]) <= std::abs(z.data()[i]) + 1.0f);
  }
  SUBCASE("source enters only through attention") {
    for (int trial = 0; trial < 5; ++trial) {
      const Tensor a = mn.cmn(x, y);
      const Tensor b = mn.cmn(x, permute_rows(y, shuffled(5, rng)));
      CHECK(max_abs_diff(a.data(), b.data()) <= 1e-6);
    }
  }
  SUBCASE("a single row with zeroed linear weights gives a zero row") {
    ModulatingNorm zero = ModulatingNorm::init(4, 2, rng);
    ParameterList params;
    zero.collect("z", params);
    for (auto& p : params)
      for (float& w : p.tensor.mutable_data()) w = 0.0f;
    const Tensor out = zero.imn(random_tensor({1, 4}, rng));
    for (float v : out.data()) CHECK(v == 0.0f);
  }
  SUBCASE("gradient matches finite differences") {
    ParameterList params;
    mn.collect("mn", params);
    std::vector<Tensor> inputs{x, y};
    for (auto& p : params) inputs.push_back(p.tensor);
    CHECK(max_grad_error([&] { return mn.cmn(x, y); }, inputs, rng, kModuleStep) <= 1e-2);
    CHECK(max_grad_error([&] { return mn.imn(x); }, {x}, rng, kModuleStep) <= 1e-2);
  }
}

TEST_CASE("proposal map agrees with slice averages") {
  Rng rng(9);
  for (std::size_t n = 1; n <= 8; ++n) {
    const std::size_t d = 5;
    Tensor f = random_tensor({n, d}, rng, 1.0f, false);
    const ProposalMap pm = build_proposal_map(f);
    REQUIRE(pm.features.shape() == Shape{n, n, d});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        CHECK(pm.valid[i * n + j] == (i <= j));
        for (std::size_t c = 0; c < d; ++c) CHECK(std::abs(pm.features.at({i, j, c}) - slice_average(f, i, j, c)) <= 1e-6);
      }
  }
}

TEST_CASE("proposal map satisfies the prefix-sum identity") {
  Rng rng(10);
  const std::size_t n = 8, d = 6;
  Tensor f = random_tensor({n, d}, rng, 1.0f, false);
  const ProposalMap pm = build_proposal_map(f);
  std::vector<double> prefix((n + 1) * d, 0.0);
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t c = 0; c < d; ++c) prefix[(t + 1) * d + c] = prefix[t * d + c] + f.at({t, c});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j)
      for (std::size_t c = 0; c < d; ++c) {
        const double lhs = pm.features.at({i, j, c}) * static_cast<double>(j - i + 1);
        CHECK(std::abs(lhs - (prefix[(j + 1) * d + c] - prefix[i * d + c])) <= 1e-5);
      }
}

TEST_CASE("pooling matrix rows sum to one on valid spans") {
  const Tensor p = proposal_pooling_matrix(5);
  for (std::size_t r = 0; r < 25; ++r) {
    double s = 0.0;
    for (std::size_t k = 0; k < 5; ++k) s += p.at({r, k});
    CHECK(s == doctest::Approx((r / 5 <= r % 5) ? 1.0 : 0.0));
  }
}

TEST_CASE("alignment map and the masm diagonal agree with flat indexing") {
  Rng rng(11);
  const std::size_t n = 5, d = 8;
  Tensor fv = random_tensor({n, d}, rng, 1.0f, false);
  Tensor fa = random_tensor({n, d}, rng, 1.0f, false);
  const Tensor map = build_alignment_map(fv, fa);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t c = 0; c < d; ++c) CHECK(map.at({i * n + j, c}) == fv.at({i, c}) * fa.at({j, c}));

  MasmParams p = MasmParams::init(d, 2, rng);
  MasmTrace trace;
  const Tensor out = masm(fv, fa, p, &trace);
  REQUIRE(out.shape() == Shape{n, d});
  const auto rows = aligned_flat_rows(n);
  REQUIRE(rows.size() == n);
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t c = 0; c < d; ++c) CHECK(out.at({t, c}) == trace.modulated.at({rows[t], c}));
  CHECK(diagonal_rows(4) == std::vector<std::size_t>{0, 5, 10, 15});
}

TEST_CASE("mspm shapes, masking and gradients") {
  Rng rng(12);
  const std::size_t n = 4, d = 8;
  MspmParams p = MspmParams::init(d, 2, rng);
  Tensor f = random_tensor({n, d}, rng);
  MspmTrace trace;
  const Tensor out = mspm(f, p, &trace);
  CHECK(out.shape() == Shape{n, d});
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const float w = trace.weights.at({i, j});
      if (j < i) {
        CHECK(w == 0.0f);
        for (std::size_t c = 0; c < d; ++c) CHECK(trace.relation_map.at({i, j, c}) == 0.0f);
      }
      row += w;
    }
    CHECK(std::abs(row - 1.0) <= 1e-6);
  }
  // The last start can only pair with itself.
  CHECK(trace.weights.at({n - 1, n - 1}) == 1.0f);

  ParameterList params;
  p.collect("mspm", params);
  std::vector<Tensor> inputs{f};
  for (auto& q : params) inputs.push_back(q.tensor);
  CHECK(max_grad_error([&] { return mspm(f, p); }, inputs, rng, kModuleStep) <= 1e-2);
}

TEST_CASE("masm gradient matches finite differences") {
  Rng rng(13);
  const std::size_t n = 3, d = 8;
  MasmParams p = MasmParams::init(d, 2, rng);
  Tensor fv = random_tensor({n, d}, rng);
  Tensor fa = random_tensor({n, d}, rng);
  ParameterList params;
  p.collect("masm", params);
  std::vector<Tensor> inputs{fv, fa};
  for (auto& q : params) inputs.push_back(q.tensor);
  CHECK(max_grad_error([&] { return masm(fv, fa, p); }, inputs, rng, kModuleStep) <= 1e-2);
}

TEST_CASE("fusion ops") {
  Tensor a({1, 2}, {2, 3}), b({1, 2}, {4, -1});
  CHECK(fuse(a, b).data()[0] == 8.0f);
  CHECK(fuse(a, b).data()[1] == -3.0f);
  CHECK(fuse_final(a, b).data()[0] == 6.0f);
  CHECK_THROWS_AS(fuse(a, Tensor::zeros({2, 2})), DimensionError);
}
