// Copyright 2026 The M2N Authors
// SPDX-License-Identifier: Apache-2.0

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "m2n/data.hpp"
#include "support.hpp"

using namespace m2n;
using namespace m2n::testing;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("m2n_test_data_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

SegmentFeatures random_sample(Rng& rng) {
  const std::size_t n = 2 + rng.below(12), dv = 1 + rng.below(9), da = 1 + rng.below(9), c = 1 + rng.below(6);
  const std::size_t len = 2 + rng.below(n - 1), start = rng.below(n - len + 1);
  SegmentFeatures s;
  s.num_classes = c;
  s.video_class = static_cast<int>(rng.below(c));
  s.labels.assign(n, kBackground);
  for (std::size_t t = start; t < start + len; ++t) s.labels[t] = s.video_class;
  // Raw bit patterns cover subnormals and negative zero as well.
  auto fill = [&](std::size_t count) {
    std::vector<float> v(count);
    for (auto& x : v) {
      do {
        x = std::bit_cast<float>(static_cast<std::uint32_t>(rng.next_u64()));
      } while (!std::isfinite(x));
    }
    return v;
  };
  s.visual = Tensor({n, dv}, fill(n * dv));
  s.audio = Tensor({n, da}, fill(n * da));
  return s;
}

bool bit_equal(std::span<const float> a, std::span<const float> b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

void put_u32(std::vector<std::uint8_t>& b, std::size_t off, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b[off + i] = static_cast<std::uint8_t>(v >> (8 * i));
}

FormatErrc decode_error(const std::vector<std::uint8_t>& bytes) {
  try {
    decode_sample(bytes);
  } catch (const FormatError& e) {
    return e.code();
  }
  FAIL("decode unexpectedly succeeded");
  return FormatErrc::Io;
}

}  // namespace

TEST_CASE("encoded size is exact") {
  CHECK(encoded_size(10, 4, 3) == 344);
  GenSpec g;
  g.num_samples = 1;
  g.visual_width = 4;
  g.audio_width = 3;
  const auto bytes = encode_sample(generate(g).front());
  CHECK(bytes.size() == 344);
  CHECK(bytes[0] == 0x4D);
  CHECK(bytes[1] == 0x32);
  CHECK(bytes[2] == 0x4E);
  CHECK(bytes[3] == 0x46);
  CHECK(bytes[4] == 1);
  CHECK(bytes[8] == 10);
}

TEST_CASE("random samples survive encode and decode bit-exactly") {
  Rng rng(21);
  for (int i = 0; i < 100; ++i) {
    const SegmentFeatures s = random_sample(rng);
    const SegmentFeatures back = decode_sample(encode_sample(s));
    CHECK(back.labels == s.labels);
    CHECK(back.video_class == s.video_class);
    CHECK(back.num_classes == s.num_classes);
    CHECK(back.visual.shape() == s.visual.shape());
    CHECK(back.audio.shape() == s.audio.shape());
    CHECK(bit_equal(back.visual.data(), s.visual.data()));
    CHECK(bit_equal(back.audio.data(), s.audio.data()));
  }
}

TEST_CASE("each corruption class has its own error") {
  GenSpec g;
  g.num_samples = 1;
  g.visual_width = 4;
  g.audio_width = 3;
  const SegmentFeatures s = generate(g).front();
  const auto good = encode_sample(s);
  std::set<FormatErrc> seen;

  auto bad = good;
  bad[0] = 'X';
  seen.insert(decode_error(bad));
  CHECK(decode_error(bad) == FormatErrc::BadMagic);

  bad = good;
  put_u32(bad, 4, 2);
  seen.insert(decode_error(bad));
  CHECK(decode_error(bad) == FormatErrc::BadVersion);

  bad = good;
  bad.resize(bad.size() - 5);
  seen.insert(decode_error(bad));
  CHECK(decode_error(bad) == FormatErrc::Truncated);
  CHECK(decode_error(std::vector<std::uint8_t>(good.begin(), good.begin() + 12)) == FormatErrc::Truncated);

  bad = good;
  for (std::size_t t = 0; t < s.segments(); ++t) put_u32(bad, kHeaderBytes + 4 * t, static_cast<std::uint32_t>(kBackground));
  seen.insert(decode_error(bad));
  CHECK(decode_error(bad) == FormatErrc::BadLabels);

  bad = good;
  put_u32(bad, 12, 0);
  seen.insert(decode_error(bad));
  CHECK(decode_error(bad) == FormatErrc::BadShape);

  CHECK(seen.size() == 5);
}

TEST_CASE("label and shape corruptions") {
  GenSpec g;
  g.num_samples = 1;
  const SegmentFeatures s = generate(g).front();
  const auto good = encode_sample(s);
  const std::size_t n = s.segments();
  auto labels_with = [&](std::vector<int> labels) {
    auto b = good;
    for (std::size_t t = 0; t < n; ++t) put_u32(b, kHeaderBytes + 4 * t, static_cast<std::uint32_t>(labels[t]));
    return decode_error(b);
  };
  std::vector<int> none(n, kBackground);
  CHECK(labels_with(none) == FormatErrc::BadLabels);
  std::vector<int> short_event = none;
  short_event[3] = 0;
  CHECK(labels_with(short_event) == FormatErrc::BadLabels);
  std::vector<int> two_classes = none;
  two_classes[2] = 0;
  two_classes[3] = 1;
  CHECK(labels_with(two_classes) == FormatErrc::BadLabels);
  std::vector<int> out_of_range = none;
  out_of_range[2] = out_of_range[3] = 99;
  CHECK(labels_with(out_of_range) == FormatErrc::BadLabels);
  std::vector<int> gap = none;
  gap[1] = gap[2] = gap[5] = 0;
  CHECK(labels_with(gap) == FormatErrc::BadLabels);

  auto trailing = good;
  trailing.push_back(0);
  CHECK(decode_error(trailing) == FormatErrc::BadShape);
  auto nan = good;
  put_u32(nan, kHeaderBytes + 4 * n, 0x7fc00000u);
  CHECK(decode_error(nan) == FormatErrc::BadShape);
  auto huge = good;
  put_u32(huge, 8, 0xffffffffu);
  CHECK(decode_error(huge) == FormatErrc::BadShape);
}

TEST_CASE("generator") {
  GenSpec g;
  g.num_samples = 50;
  const auto a = generate(g);
  const auto b = generate(g);
  REQUIRE(a.size() == 50);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(encode_sample(a[i]) == encode_sample(b[i]));
  std::set<int> classes;
  for (const auto& s : a) {
    CHECK_NOTHROW(validate(s));
    CHECK(s.segments() == 10);
    CHECK(s.visual_width() == 32);
    CHECK(s.audio_width() == 16);
    CHECK(s.event().length >= 2);
    classes.insert(s.video_class);
    const auto r = s.relevance();
    for (std::size_t t = 0; t < r.size(); ++t) CHECK(r[t] == (s.labels[t] == kBackground ? 0.0f : 1.0f));
  }
  CHECK(classes.size() == 5);
  g.seed = 8;
  CHECK(encode_sample(generate(g).front()) != encode_sample(a.front()));
  g.segments = 1;
  CHECK_THROWS_AS(generate(g), SpecError);
  // Prototypes are unit vectors.
  const auto p = class_prototype(7, 2, 1, 16);
  double norm = 0.0;
  for (float x : p) norm += static_cast<double>(x) * x;
  CHECK(norm == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("validate rejects inconsistent samples") {
  GenSpec g;
  g.num_samples = 1;
  SegmentFeatures s = generate(g).front();
  s.video_class = (s.video_class + 1) % 5;
  CHECK_THROWS_AS(validate(s), SpecError);
  s = generate(g).front();
  s.audio = Tensor::zeros({9, 16});
  CHECK_THROWS_AS(validate(s), SpecError);
}

TEST_CASE("dataset directory round trip and error reporting") {
  const fs::path dir = scratch_dir("roundtrip");
  GenSpec g;
  g.num_samples = 12;
  const auto data = generate(g);
  write_dataset(dir, data);
  CHECK(fs::exists(dir / kManifestName));
  CHECK(fs::exists(dir / "sample_00011.m2nf"));
  const auto back = read_dataset(dir);
  REQUIRE(back.size() == 12);
  for (std::size_t i = 0; i < 12; ++i) CHECK(encode_sample(back[i]) == encode_sample(data[i]));

  {
    std::fstream f(dir / "sample_00004.m2nf", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.put('Z');
  }
  try {
    read_dataset(dir);
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(e.code() == FormatErrc::BadMagic);
    CHECK(std::string(e.what()).find("sample_00004.m2nf") != std::string::npos);
  }

  CHECK_THROWS_AS(read_dataset(dir / "missing"), FormatError);
  fs::remove_all(dir);
}

TEST_CASE("mixed shapes in one dataset are rejected") {
  const fs::path dir = scratch_dir("mixed");
  GenSpec g;
  g.num_samples = 2;
  write_dataset(dir, generate(g));
  g.num_samples = 1;
  g.audio_width = 8;
  write_sample(dir / "sample_00001.m2nf", generate(g).front());
  try {
    read_dataset(dir);
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(e.code() == FormatErrc::BadShape);
  }
  fs::remove_all(dir);
}

TEST_CASE("split") {
  const Split s = split(400, {0.8, 0.2, 0.0}, 7);
  CHECK(s.train.size() == 320);
  CHECK(s.val.size() == 80);
  CHECK(s.test.empty());
  std::set<std::size_t> all(s.train.begin(), s.train.end());
  all.insert(s.val.begin(), s.val.end());
  CHECK(all.size() == 400);
  const Split again = split(400, {0.8, 0.2, 0.0}, 7);
  CHECK(again.val == s.val);
  CHECK(split(400, {0.8, 0.2, 0.0}, 8).val != s.val);
  CHECK_THROWS_AS(split(10, {0.5, 0.4, 0.0}, 1), SpecError);
  CHECK_THROWS_AS(split(1, {0.9, 0.1, 0.0}, 1), SpecError);
  CHECK_THROWS_AS(split(10, {1.2, -0.2, 0.0}, 1), SpecError);
}

TEST_CASE("rng is reproducible and in range") {
  Rng a(5), b(5);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng r(6);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(r.below(7) < 7);
  }
  CHECK(mix_seed(1, 2) != mix_seed(2, 1));
}
