// Copyright 2026 The M2N Authors
// SPDX-License-Identifier: Apache-2.0

#include "m2n/m2n.h"

#include <exception>
#include <filesystem>
#include <memory>
#include <new>
#include <string>
#include <utility>
#include <vector>

#include "m2n/gradcheck.hpp"
#include "m2n/train.hpp"

struct m2n_dataset {
  std::vector<m2n::SegmentFeatures> samples;
};

struct m2n_model {
  std::unique_ptr<m2n::M2N> net;
};

struct m2n_gradcheck_report {
  std::vector<m2n::GradCheckEntry> entries;
};

namespace {

thread_local std::string last_error;

// What a failure means depends on which side of the call it came from:
// reading input, writing output, or computing.
enum class Side { Read, Write, Run };

m2n_status fail(m2n_status status, std::string message) {
  last_error = std::move(message);
  return status;
}

template <typename Fn>
m2n_status guard(Side side, Fn&& fn) {
  try {
    fn();
    return M2N_OK;
  } catch (const m2n::FormatError& e) {
    return fail(M2N_ERR_DATA, e.what());
  } catch (const m2n::CheckpointError& e) {
    if (e.kind() == m2n::CheckpointError::Kind::Io && side == Side::Write) return fail(M2N_ERR_USAGE, e.what());
    return fail(M2N_ERR_MODEL, e.what());
  } catch (const m2n::ConfigError& e) {
    return fail(M2N_ERR_MODEL, e.what());
  } catch (const m2n::SpecError& e) {
    return fail(side == Side::Read ? M2N_ERR_DATA : M2N_ERR_USAGE, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(side == Side::Read ? M2N_ERR_DATA : M2N_ERR_USAGE, e.what());
  } catch (const std::invalid_argument& e) {
    return fail(M2N_ERR_USAGE, e.what());
  } catch (const std::out_of_range& e) {
    return fail(M2N_ERR_USAGE, e.what());
  } catch (const std::bad_alloc&) {
    return fail(M2N_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(M2N_ERR_INTERNAL, e.what());
  }
}

#define M2N_REQUIRE(cond, msg) \
  if (!(cond)) return fail(M2N_ERR_USAGE, msg)

m2n::Task to_task(m2n_task t) { return t == M2N_TASK_CML ? m2n::Task::Cml : m2n::Task::Sel; }
m2n::Direction to_direction(m2n_direction d) { return d == M2N_V2A ? m2n::Direction::V2A : m2n::Direction::A2V; }

// Model and data must agree on every input dimension before a forward pass.
void check_compatible(const m2n::M2N& net, const m2n::SegmentFeatures& s) {
  const auto& c = net.config();
  if (s.segments() != c.segments || s.visual_width() != c.visual_width || s.audio_width() != c.audio_width ||
      s.num_classes != c.classes) {
    throw m2n::ConfigError("data shape (N=" + std::to_string(s.segments()) + ", d_v=" + std::to_string(s.visual_width()) +
                           ", d_a=" + std::to_string(s.audio_width()) + ", C=" + std::to_string(s.num_classes) +
                           ") does not match the model");
  }
}

void check_compatible(const m2n::M2N& net, const m2n_dataset& data) {
  for (const auto& s : data.samples) check_compatible(net, s);
}

}  // namespace

extern "C" {

const char* m2n_last_error(void) { return last_error.c_str(); }

const char* m2n_version(void) { return "1.0.0"; }

void m2n_gen_spec_default(m2n_gen_spec* spec) {
  if (!spec) return;
  const m2n::GenSpec d;
  *spec = {d.seed, d.num_samples, d.segments, d.visual_width, d.audio_width, d.num_classes, d.noise_std, d.signal_gain};
}

m2n_status m2n_dataset_generate(const m2n_gen_spec* spec, m2n_dataset** out) {
  M2N_REQUIRE(spec && out, "null argument");
  M2N_REQUIRE(spec->samples > 0, "sample count must be positive");
  return guard(Side::Run, [&] {
    m2n::GenSpec g;
    g.seed = spec->seed;
    g.num_samples = spec->samples;
    g.segments = spec->segments;
    g.visual_width = spec->visual_width;
    g.audio_width = spec->audio_width;
    g.num_classes = spec->classes;
    g.noise_std = spec->noise;
    g.signal_gain = spec->gain;
    auto ds = std::make_unique<m2n_dataset>();
    ds->samples = m2n::generate(g);
    *out = ds.release();
  });
}

m2n_status m2n_dataset_load(const char* dir, m2n_dataset** out) {
  M2N_REQUIRE(dir && out, "null argument");
  return guard(Side::Read, [&] {
    auto ds = std::make_unique<m2n_dataset>();
    ds->samples = m2n::read_dataset(dir);
    if (ds->samples.empty()) throw m2n::SpecError(std::string("dataset ") + dir + " is empty");
    *out = ds.release();
  });
}

m2n_status m2n_dataset_load_file(const char* path, m2n_dataset** out) {
  M2N_REQUIRE(path && out, "null argument");
  return guard(Side::Read, [&] {
    auto ds = std::make_unique<m2n_dataset>();
    try {
      ds->samples.push_back(m2n::read_sample(path));
    } catch (const m2n::FormatError& e) {
      throw m2n::FormatError(e.code(), std::string(path) + ": " + e.what());
    }
    *out = ds.release();
  });
}

m2n_status m2n_dataset_save(const m2n_dataset* data, const char* dir) {
  M2N_REQUIRE(data && dir, "null argument");
  return guard(Side::Write, [&] {
    try {
      m2n::write_dataset(dir, data->samples);
    } catch (const m2n::FormatError& e) {
      // Write-side IO failures are an output-path problem, not bad data.
      if (e.code() == m2n::FormatErrc::Io) throw std::invalid_argument(e.what());
      throw;
    }
  });
}

size_t m2n_dataset_size(const m2n_dataset* data) { return data ? data->samples.size() : 0; }

m2n_status m2n_dataset_shape(const m2n_dataset* data, size_t* segments, size_t* visual_width, size_t* audio_width,
                             size_t* classes) {
  M2N_REQUIRE(data && !data->samples.empty(), "empty dataset");
  const auto& s = data->samples.front();
  if (segments) *segments = s.segments();
  if (visual_width) *visual_width = s.visual_width();
  if (audio_width) *audio_width = s.audio_width();
  if (classes) *classes = s.num_classes;
  return M2N_OK;
}

m2n_status m2n_dataset_event(const m2n_dataset* data, size_t index, size_t* start, size_t* length) {
  M2N_REQUIRE(data && index < data->samples.size(), "sample index out of range");
  const auto ev = data->samples[index].event();
  if (start) *start = ev.start;
  if (length) *length = ev.length;
  return M2N_OK;
}

void m2n_dataset_free(m2n_dataset* data) { delete data; }

void m2n_model_config_default(m2n_model_config* cfg) {
  if (!cfg) return;
  const m2n::M2NConfig d;
  *cfg = {d.segments, d.visual_width, d.audio_width, d.width, d.heads, d.classes};
}

m2n_status m2n_model_create(const m2n_model_config* cfg, uint64_t seed, unsigned disabled, m2n_model** out) {
  M2N_REQUIRE(cfg && out, "null argument");
  return guard(Side::Run, [&] {
    m2n::M2NConfig c;
    c.segments = cfg->segments;
    c.visual_width = cfg->visual_width;
    c.audio_width = cfg->audio_width;
    c.width = cfg->width;
    c.heads = cfg->heads;
    c.classes = cfg->classes;
    m2n::Ablation ab;
    ab.cmn = !(disabled & M2N_DISABLE_CMN);
    ab.imn = !(disabled & M2N_DISABLE_IMN);
    ab.mspm = !(disabled & M2N_DISABLE_MSPM);
    ab.masm = !(disabled & M2N_DISABLE_MASM);
    auto m = std::make_unique<m2n_model>();
    m->net = std::make_unique<m2n::M2N>(c, seed, ab);
    *out = m.release();
  });
}

m2n_status m2n_model_load(m2n_model* model, const char* path) {
  M2N_REQUIRE(model && path, "null argument");
  return guard(Side::Run, [&] { m2n::load_checkpoint(path, model->net->parameters()); });
}

m2n_status m2n_model_save(const m2n_model* model, const char* path) {
  M2N_REQUIRE(model && path, "null argument");
  return guard(Side::Write, [&] { m2n::save_checkpoint(path, model->net->parameters()); });
}

size_t m2n_model_parameter_count(const m2n_model* model) { return model ? model->net->parameters().size() : 0; }

void m2n_model_free(m2n_model* model) { delete model; }

void m2n_train_config_default(m2n_train_config* cfg) {
  if (!cfg) return;
  const m2n::TrainConfig d;
  *cfg = {M2N_TASK_SEL, d.epochs, d.batch_size, d.lr, d.seed, d.val_fraction, nullptr, nullptr};
}

m2n_status m2n_train(m2n_model* model, const m2n_dataset* data, const m2n_train_config* cfg,
                     m2n_epoch_callback on_epoch, void* user, double* best_val, size_t* best_epoch) {
  M2N_REQUIRE(model && data && cfg, "null argument");
  M2N_REQUIRE(cfg->epochs > 0, "epoch count must be positive");
  M2N_REQUIRE(cfg->lr >= 0.0f, "learning rate must be non-negative");
  return guard(Side::Write, [&] {
    check_compatible(*model->net, *data);
    m2n::TrainConfig tc;
    tc.task = to_task(cfg->task);
    tc.epochs = cfg->epochs;
    tc.batch_size = cfg->batch_size;
    tc.lr = cfg->lr;
    tc.seed = cfg->seed;
    tc.val_fraction = cfg->val_fraction;
    if (cfg->checkpoint) tc.checkpoint = cfg->checkpoint;
    if (cfg->loss_log) tc.loss_log = cfg->loss_log;
    const auto result = m2n::train(*model->net, data->samples, tc, [&](const m2n::EpochRecord& r) {
      if (on_epoch) on_epoch(r.epoch, r.loss, r.val_metric, user);
    });
    if (best_val) *best_val = result.best_val;
    if (best_epoch) *best_epoch = result.best_epoch;
  });
}

m2n_status m2n_eval_sel(const m2n_model* model, const m2n_dataset* data, double* accuracy) {
  M2N_REQUIRE(model && data && accuracy, "null argument");
  return guard(Side::Run, [&] {
    check_compatible(*model->net, *data);
    *accuracy = m2n::eval_sel(*model->net, data->samples);
  });
}

m2n_status m2n_eval_cml(const m2n_model* model, const m2n_dataset* data, m2n_direction dir, double* accuracy) {
  M2N_REQUIRE(model && data && accuracy, "null argument");
  return guard(Side::Run, [&] {
    check_compatible(*model->net, *data);
    *accuracy = m2n::eval_cml(*model->net, data->samples, to_direction(dir));
  });
}

m2n_status m2n_infer_sel(const m2n_model* model, const m2n_dataset* data, size_t index, int* labels,
                         size_t capacity) {
  M2N_REQUIRE(model && data && labels, "null argument");
  M2N_REQUIRE(index < data->samples.size(), "sample index out of range");
  M2N_REQUIRE(capacity >= data->samples[index].segments(), "label buffer too small");
  return guard(Side::Run, [&] {
    const auto& s = data->samples[index];
    check_compatible(*model->net, s);
    const auto decoded = m2n::decode_sel(model->net->forward_sel(s));
    for (std::size_t t = 0; t < decoded.size(); ++t) labels[t] = decoded[t];
  });
}

m2n_status m2n_infer_cml(const m2n_model* model, const m2n_dataset* data, size_t index, m2n_direction dir,
                         size_t qstart, size_t qlen, size_t* start) {
  M2N_REQUIRE(model && data && start, "null argument");
  M2N_REQUIRE(index < data->samples.size(), "sample index out of range");
  const auto& s = data->samples[index];
  M2N_REQUIRE(qlen >= 1 && qstart < s.segments() && qlen <= s.segments() - qstart,
              "query window [" + std::to_string(qstart) + ", " + std::to_string(qstart + qlen) +
                  ") does not fit in " + std::to_string(s.segments()) + " segments");
  return guard(Side::Run, [&] {
    check_compatible(*model->net, s);
    *start = m2n::infer_cml_start(*model->net, s, to_direction(dir), m2n::EventSpan{qstart, qlen});
  });
}

void m2n_gradcheck_config_default(m2n_gradcheck_config* cfg) {
  if (!cfg) return;
  const m2n::GradCheckConfig d;
  *cfg = {d.segments, d.visual_width, d.audio_width, d.width, d.heads, d.classes, d.tol, d.seed, M2N_TASK_SEL, nullptr};
}

m2n_status m2n_gradcheck(const m2n_gradcheck_config* cfg, m2n_gradcheck_report** out) {
  M2N_REQUIRE(cfg && out, "null argument");
  M2N_REQUIRE(cfg->tol > 0.0, "tolerance must be positive");
  return guard(Side::Run, [&] {
    m2n::GradCheckConfig g;
    g.segments = cfg->segments;
    g.visual_width = cfg->visual_width;
    g.audio_width = cfg->audio_width;
    g.width = cfg->width;
    g.heads = cfg->heads;
    g.classes = cfg->classes;
    g.tol = cfg->tol;
    g.seed = cfg->seed;
    g.task = to_task(cfg->task);
    if (cfg->fault_param) g.fault_param = cfg->fault_param;
    auto r = std::make_unique<m2n_gradcheck_report>();
    r->entries = m2n::gradient_check(g);
    *out = r.release();
  });
}

size_t m2n_gradcheck_count(const m2n_gradcheck_report* report) { return report ? report->entries.size() : 0; }

const char* m2n_gradcheck_name(const m2n_gradcheck_report* report, size_t i) {
  return report && i < report->entries.size() ? report->entries[i].name.c_str() : nullptr;
}

double m2n_gradcheck_error(const m2n_gradcheck_report* report, size_t i) {
  return report && i < report->entries.size() ? report->entries[i].max_error : -1.0;
}

int m2n_gradcheck_passed(const m2n_gradcheck_report* report, size_t i) {
  return report && i < report->entries.size() && report->entries[i].passed ? 1 : 0;
}

int m2n_gradcheck_all_passed(const m2n_gradcheck_report* report) {
  if (!report) return 0;
  for (const auto& e : report->entries)
    if (!e.passed) return 0;
  return 1;
}

void m2n_gradcheck_free(m2n_gradcheck_report* report) { delete report; }

}  // extern "C"
