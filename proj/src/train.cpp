// Copyright 2026 The M2N Authors
// SPDX-License-Identifier: Apache-2.0

#include "m2n/train.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>

namespace m2n {

namespace fs = std::filesystem;

// ---- Adam ----

Adam::Adam(ParameterList params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.numel(), 0.0f);
    v_.emplace_back(p.tensor.numel(), 0.0f);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

void Adam::step() {
  for (const auto& p : params_) {
    if (!p.tensor.has_grad()) throw AutogradError("parameter " + p.name + " has no gradient");
  }
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(static_cast<double>(cfg_.beta1), t);
  const double c2 = 1.0 - std::pow(static_cast<double>(cfg_.beta2), t);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& param = params_[k].tensor;
    auto theta = param.mutable_data();
    const auto grad = param.grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const float g = grad[i];
      m[i] = cfg_.beta1 * m[i] + (1.0f - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0f - cfg_.beta2) * g * g;
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      theta[i] = static_cast<float>(theta[i] - cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps));
    }
  }
}

// ---- losses per task ----

ParameterList task_parameters(const M2N& model, Task task) {
  const Ablation& ab = model.ablation();
  std::vector<std::string> unused;
  if (task == Task::Cml) unused.push_back("classifier.");
  if (!ab.cmn) unused.insert(unused.end(), {"cmn_v.", "cmn_a."});
  if (!ab.imn) unused.insert(unused.end(), {"imn_v.", "imn_a."});
  if (!ab.mspm) unused.push_back("mspm.");
  if (!ab.masm) unused.push_back("masm.");
  ParameterList out;
  for (auto& p : model.parameters()) {
    const bool skip = std::any_of(unused.begin(), unused.end(),
                                  [&](const std::string& prefix) { return p.name.rfind(prefix, 0) == 0; });
    if (!skip) out.push_back(std::move(p));
  }
  return out;
}

namespace {

Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t count) {
  const std::size_t d = x.dim(1);
  const auto src = x.data();
  std::vector<float> out(src.begin() + static_cast<std::ptrdiff_t>(start * d),
                         src.begin() + static_cast<std::ptrdiff_t>((start + count) * d));
  return Tensor({count, d}, std::move(out));
}

Tensor cml_relevance(const M2N& model, const SegmentFeatures& sample, Direction dir, EventSpan query) {
  const Tensor& query_source = dir == Direction::A2V ? sample.audio : sample.visual;
  const Tensor& context = dir == Direction::A2V ? sample.visual : sample.audio;
  return model.forward_cml(slice_rows(query_source, query.start, query.length), context, dir);
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  return idx;
}

void write_loss_log(const fs::path& path, const std::vector<EpochRecord>& epochs) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw CheckpointError(CheckpointError::Kind::Io, "cannot write loss log " + path.string());
  out.precision(9);
  for (const auto& e : epochs) out << e.epoch << ',' << e.loss << '\n';
  if (!out) throw CheckpointError(CheckpointError::Kind::Io, "loss log write failed: " + path.string());
}

}  // namespace

Tensor sample_loss(const M2N& model, const SegmentFeatures& sample, Task task) {
  const auto relevance = sample.relevance();
  if (task == Task::Sel) {
    return loss_sel(model.forward_sel(sample), static_cast<std::size_t>(sample.video_class), relevance);
  }
  const EventSpan span = sample.event();
  const Tensor a2v = loss_cml(cml_relevance(model, sample, Direction::A2V, span), relevance);
  const Tensor v2a = loss_cml(cml_relevance(model, sample, Direction::V2A, span), relevance);
  return scale(add(a2v, v2a), 0.5f);
}

std::size_t infer_cml_start(const M2N& model, const SegmentFeatures& sample, Direction dir, EventSpan query) {
  const Tensor p_r = cml_relevance(model, sample, dir, query);
  return decode_cml(p_r.data(), query.length);
}

// ---- evaluation ----

double eval_sel(const M2N& model, const std::vector<SegmentFeatures>& data, std::span<const std::size_t> indices) {
  std::size_t correct = 0, total = 0;
  for (std::size_t i : indices) {
    const auto& sample = data.at(i);
    const auto predicted = decode_sel(model.forward_sel(sample));
    for (std::size_t t = 0; t < predicted.size(); ++t) correct += predicted[t] == sample.labels[t];
    total += predicted.size();
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

double eval_sel(const M2N& model, const std::vector<SegmentFeatures>& data) {
  return eval_sel(model, data, all_indices(data.size()));
}

double eval_cml(const M2N& model, const std::vector<SegmentFeatures>& data, Direction dir,
                std::span<const std::size_t> indices) {
  std::size_t correct = 0;
  for (std::size_t i : indices) {
    const auto& sample = data.at(i);
    const EventSpan span = sample.event();
    correct += infer_cml_start(model, sample, dir, span) == span.start;
  }
  return indices.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(indices.size());
}

double eval_cml(const M2N& model, const std::vector<SegmentFeatures>& data, Direction dir) {
  return eval_cml(model, data, dir, all_indices(data.size()));
}

CmlAccuracy eval_cml_both(const M2N& model, const std::vector<SegmentFeatures>& data,
                          std::span<const std::size_t> indices) {
  CmlAccuracy acc;
  acc.a2v = eval_cml(model, data, Direction::A2V, indices);
  acc.v2a = eval_cml(model, data, Direction::V2A, indices);
  acc.average = 0.5 * (acc.a2v + acc.v2a);
  return acc;
}

// ---- training ----

TrainResult train(M2N& model, const std::vector<SegmentFeatures>& data, const TrainConfig& cfg,
                  const std::function<void(const EpochRecord&)>& on_epoch) {
  if (data.empty()) throw SpecError("training dataset is empty");
  if (cfg.batch_size < 1) throw SpecError("batch size must be >= 1");
  if (!(cfg.val_fraction >= 0.0 && cfg.val_fraction < 1.0)) throw SpecError("validation fraction must be in [0, 1)");

  TrainResult result;
  result.split = split(data.size(), {1.0 - cfg.val_fraction, cfg.val_fraction, 0.0}, cfg.seed);
  const std::vector<std::size_t>& val = result.split.val.empty() ? result.split.train : result.split.val;

  ParameterList all = model.parameters();
  Adam adam(task_parameters(model, cfg.task), AdamConfig{.lr = cfg.lr});
  std::vector<std::vector<float>> best;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::size_t> order = result.split.train;
    Rng(mix_seed(cfg.seed, 0x65706f6368ULL + epoch)).shuffle(order);

    double total = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      const float inv_batch = 1.0f / static_cast<float>(end - begin);
      adam.zero_grad();
      for (std::size_t b = begin; b < end; ++b) {
        Tape tape;
        TapeScope scope(tape);
        const Tensor loss = sample_loss(model, data[order[b]], cfg.task);
        total += loss.item();
        tape.backward(scale(loss, inv_batch));
      }
      adam.step();
    }
    adam.zero_grad();

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = total / static_cast<double>(order.size());
    rec.val_metric = cfg.task == Task::Sel ? eval_sel(model, data, val) : eval_cml_both(model, data, val).average;
    result.epochs.push_back(rec);

    if (!cfg.checkpoint.empty()) {
      fs::path last = cfg.checkpoint;
      last += ".last";
      save_checkpoint(last, all);
    }
    if (rec.val_metric > result.best_val) {
      result.best_val = rec.val_metric;
      result.best_epoch = epoch;
      best.clear();
      for (const auto& p : all) best.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
      if (!cfg.checkpoint.empty()) save_checkpoint(cfg.checkpoint, all);
    }
    if (!cfg.loss_log.empty()) write_loss_log(cfg.loss_log, result.epochs);
    if (on_epoch) on_epoch(rec);
  }

  for (std::size_t k = 0; k < best.size(); ++k) {
    auto dst = all[k].tensor.mutable_data();
    std::copy(best[k].begin(), best[k].end(), dst.begin());
  }
  return result;
}

// ---- checkpoints ----

namespace {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    if (off_ + sizeof(T) > bytes_.size()) throw CheckpointError(CheckpointError::Kind::Format, "checkpoint truncated");
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(bytes_[off_ + i]) << (8 * i));
    off_ += sizeof(T);
    return v;
  }

  std::string get_string(std::size_t n) {
    if (off_ + n > bytes_.size()) throw CheckpointError(CheckpointError::Kind::Format, "checkpoint truncated");
    std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(off_),
                  bytes_.begin() + static_cast<std::ptrdiff_t>(off_ + n));
    off_ += n;
    return s;
  }

  bool done() const { return off_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - off_; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t off_ = 0;
};

}  // namespace

void save_checkpoint(const fs::path& path, const ParameterList& params) {
  std::vector<std::uint8_t> out;
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(p.name.size()));
    out.insert(out.end(), p.name.begin(), p.name.end());
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(p.tensor.rank()));
    for (auto d : p.tensor.shape()) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (float v : p.tensor.data()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError(CheckpointError::Kind::Io, "cannot write checkpoint " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw CheckpointError(CheckpointError::Kind::Io, "checkpoint write failed: " + path.string());
}

std::vector<NamedTensor> read_checkpoint(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError(CheckpointError::Kind::Io, "cannot open checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Reader r(bytes);
  const auto count = r.get<std::uint32_t>();
  std::vector<NamedTensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint16_t>();
    std::string name = r.get_string(name_len);
    const auto rank = r.get<std::uint8_t>();
    Shape shape(rank);
    std::uint64_t numel = 1;
    for (auto& d : shape) {
      d = r.get<std::uint32_t>();
      numel *= d;
      if (numel > r.remaining()) throw CheckpointError(CheckpointError::Kind::Format, "checkpoint truncated");
    }
    if (4 * numel > r.remaining()) throw CheckpointError(CheckpointError::Kind::Format, "checkpoint truncated");
    std::vector<float> data(numel);
    for (auto& v : data) v = std::bit_cast<float>(r.get<std::uint32_t>());
    try {
      out.push_back({std::move(name), Tensor(std::move(shape), std::move(data))});
    } catch (const std::domain_error&) {
      throw CheckpointError(CheckpointError::Kind::Format, "non-finite value in checkpoint tensor");
    }
  }
  if (!r.done()) throw CheckpointError(CheckpointError::Kind::Format, "trailing bytes in checkpoint");
  return out;
}

void load_checkpoint(const fs::path& path, ParameterList params) {
  const auto stored = read_checkpoint(path);
  if (stored.size() != params.size()) {
    throw CheckpointError(CheckpointError::Kind::Mismatch, "checkpoint holds " + std::to_string(stored.size()) +
                                                               " tensors, model has " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (stored[i].name != params[i].name || stored[i].tensor.shape() != params[i].tensor.shape()) {
      throw CheckpointError(CheckpointError::Kind::Mismatch,
                            "checkpoint tensor " + stored[i].name + shape_str(stored[i].tensor.shape()) +
                                " does not match model tensor " + params[i].name + shape_str(params[i].tensor.shape()));
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto dst = params[i].tensor.mutable_data();
    std::copy(stored[i].tensor.data().begin(), stored[i].tensor.data().end(), dst.begin());
  }
}

}  // namespace m2n
