// Copyright 2026 The M2N Authors
// SPDX-License-Identifier: Apache-2.0

#include "m2n/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>

#include "m2n/rng.hpp"

namespace m2n {

namespace fs = std::filesystem;

EventSpan SegmentFeatures::event() const {
  EventSpan span;
  bool found = false;
  for (std::size_t t = 0; t < labels.size(); ++t) {
    if (labels[t] == kBackground) continue;
    if (!found) {
      span.start = t;
      found = true;
    }
    span.length = t - span.start + 1;
  }
  return span;
}

std::vector<float> SegmentFeatures::relevance() const {
  std::vector<float> r(labels.size());
  for (std::size_t t = 0; t < labels.size(); ++t) r[t] = labels[t] == kBackground ? 0.0f : 1.0f;
  return r;
}

std::vector<float> class_prototype(std::uint64_t seed, std::size_t cls, int modality, std::size_t width) {
  Rng rng(mix_seed(mix_seed(seed, 0x70726f746fULL + cls), static_cast<std::uint64_t>(modality)));
  std::vector<float> v(width);
  double norm = 0.0;
  for (auto& x : v) {
    x = static_cast<float>(rng.normal());
    norm += static_cast<double>(x) * x;
  }
  const float inv = static_cast<float>(1.0 / std::sqrt(norm));
  for (auto& x : v) x *= inv;
  return v;
}

std::vector<SegmentFeatures> generate(const GenSpec& spec) {
  if (spec.segments < 2) throw SpecError("generator needs at least 2 segments per sample");
  if (spec.num_classes < 1) throw SpecError("generator needs at least one class");
  if (spec.visual_width < 1 || spec.audio_width < 1) throw SpecError("feature widths must be positive");
  if (!(spec.noise_std >= 0.0f)) throw SpecError("noise_std must be non-negative");

  std::vector<std::vector<float>> proto_v, proto_a;
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    proto_v.push_back(class_prototype(spec.seed, c, 0, spec.visual_width));
    proto_a.push_back(class_prototype(spec.seed, c, 1, spec.audio_width));
  }

  const std::size_t n = spec.segments;
  std::vector<SegmentFeatures> out;
  out.reserve(spec.num_samples);
  for (std::size_t s = 0; s < spec.num_samples; ++s) {
    Rng rng(mix_seed(spec.seed, s));
    const std::size_t cls = rng.below(spec.num_classes);
    const std::size_t length = 2 + rng.below(n - 1);  // [2, N]
    const std::size_t start = rng.below(n - length + 1);

    SegmentFeatures sample;
    sample.num_classes = spec.num_classes;
    sample.video_class = static_cast<int>(cls);
    sample.labels.assign(n, kBackground);
    std::vector<float> visual(n * spec.visual_width), audio(n * spec.audio_width);
    for (std::size_t t = 0; t < n; ++t) {
      const bool inside = t >= start && t < start + length;
      if (inside) sample.labels[t] = static_cast<int>(cls);
      for (std::size_t c = 0; c < spec.visual_width; ++c) {
        const float signal = inside ? proto_v[cls][c] * spec.signal_gain : 0.0f;
        visual[t * spec.visual_width + c] = signal + spec.noise_std * static_cast<float>(rng.normal());
      }
      for (std::size_t c = 0; c < spec.audio_width; ++c) {
        const float signal = inside ? proto_a[cls][c] * spec.signal_gain : 0.0f;
        audio[t * spec.audio_width + c] = signal + spec.noise_std * static_cast<float>(rng.normal());
      }
    }
    sample.visual = Tensor({n, spec.visual_width}, std::move(visual));
    sample.audio = Tensor({n, spec.audio_width}, std::move(audio));
    out.push_back(std::move(sample));
  }
  return out;
}

// ---- encoding ----

const char* to_string(FormatErrc code) {
  switch (code) {
    case FormatErrc::BadMagic: return "bad magic";
    case FormatErrc::BadVersion: return "unsupported version";
    case FormatErrc::Truncated: return "truncated payload";
    case FormatErrc::BadLabels: return "inconsistent labels";
    case FormatErrc::BadShape: return "inconsistent shape";
    case FormatErrc::Io: return "i/o failure";
  }
  return "unknown";
}

std::size_t encoded_size(std::size_t n, std::size_t d_v, std::size_t d_a) {
  return kHeaderBytes + 4 * n + 4 * n * d_v + 4 * n * d_a;
}

namespace {

constexpr std::uint8_t kMagic[4] = {0x4D, 0x32, 0x4E, 0x46};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[off + i]) << (8 * i);
  return v;
}

// Labels must be in {-1} U [0, C), share one class, and form a single
// contiguous run of length >= 2. Returns the class or an error message.
std::string check_labels(const std::vector<int>& labels, std::size_t classes, int* video_class) {
  int cls = kBackground;
  std::size_t first = labels.size(), last = 0, count = 0;
  for (std::size_t t = 0; t < labels.size(); ++t) {
    const int l = labels[t];
    if (l == kBackground) continue;
    if (l < 0 || static_cast<std::size_t>(l) >= classes) return "label " + std::to_string(l) + " out of range";
    if (cls != kBackground && l != cls) return "more than one event class";
    cls = l;
    first = std::min(first, t);
    last = t;
    ++count;
  }
  if (count == 0) return "no event segment";
  if (last - first + 1 != count) return "event segments are not contiguous";
  if (count < 2) return "event shorter than two segments";
  *video_class = cls;
  return {};
}

}  // namespace

void validate(const SegmentFeatures& sample) {
  const std::size_t n = sample.labels.size();
  if (n == 0) throw SpecError("sample has no segments");
  if (sample.visual.rank() != 2 || sample.visual.dim(0) != n || sample.visual.dim(1) == 0) {
    throw SpecError("visual features " + shape_str(sample.visual.shape()) + " do not match " + std::to_string(n) +
                    " segments");
  }
  if (sample.audio.rank() != 2 || sample.audio.dim(0) != n || sample.audio.dim(1) == 0) {
    throw SpecError("audio features " + shape_str(sample.audio.shape()) + " do not match " + std::to_string(n) +
                    " segments");
  }
  int cls = kBackground;
  const std::string err = check_labels(sample.labels, sample.num_classes, &cls);
  if (!err.empty()) throw SpecError(err);
  if (cls != sample.video_class) throw SpecError("video class disagrees with segment labels");
}

std::vector<std::uint8_t> encode_sample(const SegmentFeatures& sample) {
  validate(sample);
  const std::size_t n = sample.segments(), dv = sample.visual_width(), da = sample.audio_width();
  std::vector<std::uint8_t> out;
  out.reserve(encoded_size(n, dv, da));
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_u32(out, kFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(n));
  put_u32(out, static_cast<std::uint32_t>(dv));
  put_u32(out, static_cast<std::uint32_t>(da));
  put_u32(out, static_cast<std::uint32_t>(sample.num_classes));
  for (int l : sample.labels) put_u32(out, static_cast<std::uint32_t>(l));
  for (float v : sample.visual.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  for (float v : sample.audio.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

SegmentFeatures decode_sample(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4) throw FormatError(FormatErrc::Truncated, "file shorter than magic");
  if (!std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) {
    throw FormatError(FormatErrc::BadMagic, "missing M2NF magic");
  }
  if (bytes.size() < 8) throw FormatError(FormatErrc::Truncated, "file shorter than version field");
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kFormatVersion) {
    throw FormatError(FormatErrc::BadVersion, "unsupported M2NF version " + std::to_string(version));
  }
  if (bytes.size() < kHeaderBytes) throw FormatError(FormatErrc::Truncated, "file shorter than header");
  const std::uint64_t n = get_u32(bytes, 8), dv = get_u32(bytes, 12), da = get_u32(bytes, 16),
                      classes = get_u32(bytes, 20);
  if (n == 0 || dv == 0 || da == 0 || classes == 0) {
    throw FormatError(FormatErrc::BadShape, "header declares a zero dimension");
  }
  // Keeps the size arithmetic below far from overflow.
  constexpr std::uint64_t kMaxDim = 1u << 24;
  if (n > kMaxDim || dv > kMaxDim || da > kMaxDim || classes > kMaxDim) {
    throw FormatError(FormatErrc::BadShape, "header declares an implausibly large dimension");
  }
  const std::uint64_t expected = kHeaderBytes + 4 * n + 4 * n * dv + 4 * n * da;
  if (bytes.size() < expected) {
    throw FormatError(FormatErrc::Truncated, "payload has " + std::to_string(bytes.size()) + " bytes, header implies " +
                                                 std::to_string(expected));
  }
  if (bytes.size() > expected) {
    throw FormatError(FormatErrc::BadShape, "payload has " + std::to_string(bytes.size() - expected) +
                                                " bytes beyond the declared shape");
  }

  SegmentFeatures sample;
  sample.num_classes = classes;
  std::size_t off = kHeaderBytes;
  sample.labels.resize(n);
  for (auto& l : sample.labels) {
    l = static_cast<int>(static_cast<std::int32_t>(get_u32(bytes, off)));
    off += 4;
  }
  auto read_floats = [&](std::size_t count) {
    std::vector<float> v(count);
    for (auto& x : v) {
      x = std::bit_cast<float>(get_u32(bytes, off));
      off += 4;
      if (!std::isfinite(x)) throw FormatError(FormatErrc::BadShape, "non-finite feature value");
    }
    return v;
  };
  sample.visual = Tensor({n, dv}, read_floats(n * dv));
  sample.audio = Tensor({n, da}, read_floats(n * da));

  int cls = kBackground;
  const std::string err = check_labels(sample.labels, classes, &cls);
  if (!err.empty()) throw FormatError(FormatErrc::BadLabels, err);
  sample.video_class = cls;
  return sample;
}

void write_sample(const fs::path& path, const SegmentFeatures& sample) {
  const auto bytes = encode_sample(sample);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatErrc::Io, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(FormatErrc::Io, "write failed for " + path.string());
}

SegmentFeatures read_sample(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatErrc::Io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_sample(bytes);
}

void write_dataset(const fs::path& dir, const std::vector<SegmentFeatures>& samples) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw FormatError(FormatErrc::Io, "cannot create " + dir.string() + ": " + ec.message());
  std::ofstream manifest(dir / kManifestName, std::ios::trunc);
  if (!manifest) throw FormatError(FormatErrc::Io, "cannot write manifest in " + dir.string());
  char name[32];
  for (std::size_t i = 0; i < samples.size(); ++i) {
    std::snprintf(name, sizeof(name), "sample_%05zu.m2nf", i);
    write_sample(dir / name, samples[i]);
    manifest << name << '\n';
  }
  if (!manifest) throw FormatError(FormatErrc::Io, "manifest write failed in " + dir.string());
}

std::vector<SegmentFeatures> read_dataset(const fs::path& dir) {
  std::ifstream manifest(dir / kManifestName);
  if (!manifest) throw FormatError(FormatErrc::Io, "no " + std::string(kManifestName) + " in " + dir.string());
  std::vector<SegmentFeatures> out;
  std::string line;
  while (std::getline(manifest, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const fs::path file = dir / line;
    try {
      out.push_back(read_sample(file));
    } catch (const FormatError& e) {
      throw FormatError(e.code(), file.string() + ": " + e.what());
    }
    const auto& first = out.front();
    const auto& last = out.back();
    if (last.segments() != first.segments() || last.visual_width() != first.visual_width() ||
        last.audio_width() != first.audio_width() || last.num_classes != first.num_classes) {
      throw FormatError(FormatErrc::BadShape, file.string() + ": shape differs from the first sample");
    }
  }
  return out;
}

Split split(std::size_t n, std::array<double, 3> ratios, std::uint64_t seed) {
  double total = 0.0;
  for (double r : ratios) {
    if (!(r >= 0.0)) throw SpecError("split ratios must be non-negative");
    total += r;
  }
  if (std::abs(total - 1.0) > 1e-9) throw SpecError("split ratios must sum to 1");
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(mix_seed(seed, 0x73706c6974ULL));
  rng.shuffle(idx);

  const auto count = [n](double r) { return static_cast<std::size_t>(std::llround(r * static_cast<double>(n))); };
  const std::size_t n_train = std::min(n, count(ratios[0]));
  const std::size_t n_val = std::min(n - n_train, count(ratios[1]));
  Split s;
  s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train),
               idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), idx.end());
  if ((ratios[0] > 0 && s.train.empty()) || (ratios[1] > 0 && s.val.empty()) || (ratios[2] > 0 && s.test.empty())) {
    throw SpecError("split of " + std::to_string(n) + " items leaves a requested partition empty");
  }
  return s;
}

}  // namespace m2n
