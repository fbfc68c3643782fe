// Copyright 2026 The M2N Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "m2n/tensor.hpp"

namespace m2n {

inline constexpr int kBackground = -1;

struct EventSpan {
  std::size_t start = 0;
  std::size_t length = 0;
  bool operator==(const EventSpan&) const = default;
};

// One video: per-segment visual and audio features plus labels.
struct SegmentFeatures {
  Tensor visual;            // [N, d_v]
  Tensor audio;             // [N, d_a]
  std::vector<int> labels;  // kBackground or the video class
  int video_class = 0;
  std::size_t num_classes = 1;

  std::size_t segments() const { return labels.size(); }
  std::size_t visual_width() const { return visual.dim(1); }
  std::size_t audio_width() const { return audio.dim(1); }
  // The single contiguous event run.
  EventSpan event() const;
  // Per-segment relevance targets (1 inside the event).
  std::vector<float> relevance() const;
};

struct GenSpec {
  std::uint64_t seed = 7;
  std::size_t num_samples = 400;
  std::size_t segments = 10;
  std::size_t visual_width = 32;
  std::size_t audio_width = 16;
  std::size_t num_classes = 5;
  float noise_std = 0.3f;
  float signal_gain = 1.0f;
};

class SpecError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Unit prototype for (seed, class, modality); modality 0 = visual, 1 = audio.
std::vector<float> class_prototype(std::uint64_t seed, std::size_t cls, int modality, std::size_t width);

// Deterministic synthetic dataset; one event of length >= 2 per sample.
std::vector<SegmentFeatures> generate(const GenSpec& spec);

// ---- M2NF v1 ----
//
//   offset 0   "M2NF" (4D 32 4E 46)
//          4   u32 version = 1
//          8   u32 N
//         12   u32 d_v
//         16   u32 d_a
//         20   u32 C
//         24   N x i32 labels (-1 = background)
//              N*d_v x f32 visual, row-major
//              N*d_a x f32 audio, row-major
// All little-endian.

inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::size_t kHeaderBytes = 24;

std::size_t encoded_size(std::size_t n, std::size_t d_v, std::size_t d_a);

enum class FormatErrc { BadMagic, BadVersion, Truncated, BadLabels, BadShape, Io };
const char* to_string(FormatErrc code);

class FormatError : public std::runtime_error {
 public:
  FormatError(FormatErrc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  FormatErrc code() const { return code_; }

 private:
  FormatErrc code_;
};

// Throws SpecError if the sample violates its own invariants.
void validate(const SegmentFeatures& sample);

std::vector<std::uint8_t> encode_sample(const SegmentFeatures& sample);
SegmentFeatures decode_sample(const std::vector<std::uint8_t>& bytes);

void write_sample(const std::filesystem::path& path, const SegmentFeatures& sample);
SegmentFeatures read_sample(const std::filesystem::path& path);

inline constexpr const char* kManifestName = "manifest.txt";

// Writes sample_NNNNN.m2nf files plus a manifest listing them in order.
void write_dataset(const std::filesystem::path& dir, const std::vector<SegmentFeatures>& samples);
// Reads every file named in the manifest. FormatError messages name the file.
std::vector<SegmentFeatures> read_dataset(const std::filesystem::path& dir);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

// Seeded shuffle, then contiguous cuts of round(ratio * n). Ratios must sum
// to 1; a split with a positive ratio that ends up empty is an error.
Split split(std::size_t n, std::array<double, 3> ratios, std::uint64_t seed);

}  // namespace m2n
