// Copyright 2026 The M2N Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "m2n/network.hpp"

namespace m2n {

struct AdamConfig {
  float lr = 5e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

// Bias-corrected Adam over a fixed parameter set.
class Adam {
 public:
  explicit Adam(ParameterList params, AdamConfig cfg = {});

  // Applies one update from the parameters' accumulated grads. Every
  // parameter must hold a grad.
  void step();
  void zero_grad();

  std::uint64_t steps() const { return steps_; }
  const AdamConfig& config() const { return cfg_; }
  const ParameterList& parameters() const { return params_; }
  std::span<const float> first_moment(std::size_t i) const { return m_[i]; }
  std::span<const float> second_moment(std::size_t i) const { return v_[i]; }

 private:
  ParameterList params_;
  AdamConfig cfg_;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
  std::uint64_t steps_ = 0;
};

enum class Task { Sel, Cml };

struct TrainConfig {
  Task task = Task::Sel;
  std::size_t epochs = 60;
  std::size_t batch_size = 32;
  float lr = 5e-4f;
  std::uint64_t seed = 7;
  double val_fraction = 0.2;  // 0 validates on the training set
  std::filesystem::path checkpoint;  // best-so-far; "<checkpoint>.last" every epoch
  std::filesystem::path loss_log;    // "epoch,loss" lines
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;
  double val_metric = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> epochs;
  double best_val = -1.0;
  std::size_t best_epoch = 0;
  Split split;
};

// Parameters updated for a task; CML never touches the classifier, and
// disabled stages are left out.
ParameterList task_parameters(const M2N& model, Task task);

// Per-sample training loss. CML averages the A2V and V2A losses.
Tensor sample_loss(const M2N& model, const SegmentFeatures& sample, Task task);

// Mini-batch Adam training. Leaves the model holding the parameters of the
// best validation epoch.
TrainResult train(M2N& model, const std::vector<SegmentFeatures>& data, const TrainConfig& cfg,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

// Fraction of segments whose decoded label equals the ground truth.
double eval_sel(const M2N& model, const std::vector<SegmentFeatures>& data, std::span<const std::size_t> indices);
double eval_sel(const M2N& model, const std::vector<SegmentFeatures>& data);

// Fraction of samples whose localized window exactly matches the event span.
double eval_cml(const M2N& model, const std::vector<SegmentFeatures>& data, Direction dir,
                std::span<const std::size_t> indices);
double eval_cml(const M2N& model, const std::vector<SegmentFeatures>& data, Direction dir);

struct CmlAccuracy {
  double a2v = 0.0;
  double v2a = 0.0;
  double average = 0.0;
};
CmlAccuracy eval_cml_both(const M2N& model, const std::vector<SegmentFeatures>& data,
                          std::span<const std::size_t> indices);

// Localized start for one sample, querying with its own event span.
std::size_t infer_cml_start(const M2N& model, const SegmentFeatures& sample, Direction dir, EventSpan query);

// ---- checkpoints ----
//
// u32 count, then per tensor: u16 name length, name bytes, u8 rank,
// rank x u32 dims, f32 payload. Little-endian.

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { Io, Format, Mismatch };
  CheckpointError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

void save_checkpoint(const std::filesystem::path& path, const ParameterList& params);
std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path);
// Copies stored values into the tensors `params` refers to; names and shapes
// must match exactly.
void load_checkpoint(const std::filesystem::path& path, ParameterList params);

}  // namespace m2n
