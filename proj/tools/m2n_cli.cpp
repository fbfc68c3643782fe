// Copyright 2026 The M2N Authors
// SPDX-License-Identifier: Apache-2.0
//
// m2n: generate synthetic data, train, evaluate, infer, and gradient-check.
// Talks to the library only through the C API.

#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "m2n/m2n.h"

namespace {

struct DatasetDeleter {
  void operator()(m2n_dataset* d) const { m2n_dataset_free(d); }
};
struct ModelDeleter {
  void operator()(m2n_model* m) const { m2n_model_free(m); }
};
struct ReportDeleter {
  void operator()(m2n_gradcheck_report* r) const { m2n_gradcheck_free(r); }
};
using DatasetPtr = std::unique_ptr<m2n_dataset, DatasetDeleter>;
using ModelPtr = std::unique_ptr<m2n_model, ModelDeleter>;
using ReportPtr = std::unique_ptr<m2n_gradcheck_report, ReportDeleter>;

int report(m2n_status status) {
  if (status != M2N_OK) std::fprintf(stderr, "error: %s\n", m2n_last_error());
  return status;
}

int usage(const std::string& message) {
  std::fprintf(stderr, "error: %s\n", message.c_str());
  return M2N_ERR_USAGE;
}

struct ModelFlags {
  std::size_t width = 64;
  std::size_t heads = 4;
  std::uint64_t seed = 7;
};

void add_model_flags(CLI::App* cmd, ModelFlags& f) {
  cmd->add_option("--d", f.width, "model width")->check(CLI::PositiveNumber);
  cmd->add_option("--heads", f.heads, "attention heads")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", f.seed, "seed for initialization, shuffling, and splits");
}

m2n_task parse_task(const std::string& s) { return s == "cml" ? M2N_TASK_CML : M2N_TASK_SEL; }
m2n_direction parse_direction(const std::string& s) { return s == "v2a" ? M2N_V2A : M2N_A2V; }

// Input dimensions come from the data; width and heads from flags.
int make_model(const m2n_dataset* data, const ModelFlags& f, ModelPtr& out) {
  m2n_model_config cfg;
  m2n_model_config_default(&cfg);
  if (int rc = report(m2n_dataset_shape(data, &cfg.segments, &cfg.visual_width, &cfg.audio_width, &cfg.classes)))
    return rc;
  cfg.width = f.width;
  cfg.heads = f.heads;
  m2n_model* m = nullptr;
  if (int rc = report(m2n_model_create(&cfg, f.seed, 0, &m))) return rc;
  out.reset(m);
  return 0;
}

int load_dir(const std::string& dir, DatasetPtr& out) {
  m2n_dataset* d = nullptr;
  if (int rc = report(m2n_dataset_load(dir.c_str(), &d))) return rc;
  out.reset(d);
  return 0;
}

struct GenArgs {
  std::string out;
  m2n_gen_spec spec;
};

int run_gen(const GenArgs& a) {
  if (a.spec.samples == 0) return usage("--samples must be positive");
  m2n_dataset* d = nullptr;
  if (int rc = report(m2n_dataset_generate(&a.spec, &d))) return rc;
  DatasetPtr data(d);
  if (int rc = report(m2n_dataset_save(data.get(), a.out.c_str()))) return rc;
  std::printf("wrote %zu samples to %s\n", m2n_dataset_size(data.get()), a.out.c_str());
  return 0;
}

struct TrainArgs {
  std::string task = "sel";
  std::string data;
  std::string ckpt = "m2n.ckpt";
  std::string log;
  std::size_t epochs = 60;
  std::size_t batch = 32;
  float lr = 5e-4f;
  double val_frac = 0.2;
  bool quiet = false;
  ModelFlags model;
};

void print_epoch(std::size_t epoch, double loss, double val, void*) {
  std::printf("epoch=%zu loss=%.6f val=%.4f\n", epoch, loss, val);
  std::fflush(stdout);
}

int run_train(const TrainArgs& a) {
  DatasetPtr data;
  if (int rc = load_dir(a.data, data)) return rc;
  ModelPtr model;
  if (int rc = make_model(data.get(), a.model, model)) return rc;
  const std::string log = a.log.empty() ? a.ckpt + ".loss.csv" : a.log;
  m2n_train_config cfg;
  m2n_train_config_default(&cfg);
  cfg.task = parse_task(a.task);
  cfg.epochs = a.epochs;
  cfg.batch_size = a.batch;
  cfg.lr = a.lr;
  cfg.seed = a.model.seed;
  cfg.val_fraction = a.val_frac;
  cfg.checkpoint = a.ckpt.c_str();
  cfg.loss_log = log.c_str();
  double best = 0.0;
  std::size_t best_epoch = 0;
  if (int rc = report(m2n_train(model.get(), data.get(), &cfg, a.quiet ? nullptr : print_epoch, nullptr, &best,
                                &best_epoch)))
    return rc;
  std::printf("best_val=%.4f epoch=%zu\n", best, best_epoch);
  return 0;
}

struct EvalArgs {
  std::string task = "sel";
  std::string direction;
  std::string data;
  std::string ckpt;
  ModelFlags model;
};

int load_checkpointed(const m2n_dataset* data, const ModelFlags& flags, const std::string& ckpt, ModelPtr& model) {
  if (int rc = make_model(data, flags, model)) return rc;
  return report(m2n_model_load(model.get(), ckpt.c_str()));
}

int run_eval(const EvalArgs& a) {
  DatasetPtr data;
  if (int rc = load_dir(a.data, data)) return rc;
  ModelPtr model;
  if (int rc = load_checkpointed(data.get(), a.model, a.ckpt, model)) return rc;
  double acc = 0.0;
  if (a.task == "sel") {
    if (int rc = report(m2n_eval_sel(model.get(), data.get(), &acc))) return rc;
    std::printf("accuracy=%.6f\n", acc);
    return 0;
  }
  if (!a.direction.empty()) {
    if (int rc = report(m2n_eval_cml(model.get(), data.get(), parse_direction(a.direction), &acc))) return rc;
    std::printf("accuracy=%.6f\n", acc);
    return 0;
  }
  double a2v = 0.0, v2a = 0.0;
  if (int rc = report(m2n_eval_cml(model.get(), data.get(), M2N_A2V, &a2v))) return rc;
  if (int rc = report(m2n_eval_cml(model.get(), data.get(), M2N_V2A, &v2a))) return rc;
  std::printf("a2v=%.6f\nv2a=%.6f\naverage=%.6f\n", a2v, v2a, (a2v + v2a) / 2.0);
  return 0;
}

struct InferArgs {
  std::string task = "sel";
  std::string direction = "a2v";
  std::string input;
  std::string ckpt;
  std::size_t qstart = 0;
  std::size_t qlen = 0;
  bool have_qlen = false;
  ModelFlags model;
};

int run_infer(const InferArgs& a) {
  m2n_dataset* d = nullptr;
  if (int rc = report(m2n_dataset_load_file(a.input.c_str(), &d))) return rc;
  DatasetPtr data(d);
  std::size_t n = 0;
  m2n_dataset_shape(data.get(), &n, nullptr, nullptr, nullptr);
  if (a.task == "cml") {
    if (!a.have_qlen) return usage("--qlen is required for cml");
    if (a.qlen < 1 || a.qstart + a.qlen > n)
      return usage("--qstart + --qlen must fit within " + std::to_string(n) + " segments");
  }
  ModelPtr model;
  if (int rc = load_checkpointed(data.get(), a.model, a.ckpt, model)) return rc;
  if (a.task == "sel") {
    std::vector<int> labels(n);
    if (int rc = report(m2n_infer_sel(model.get(), data.get(), 0, labels.data(), labels.size()))) return rc;
    for (std::size_t t = 0; t < n; ++t) std::printf("%zu,%d\n", t, labels[t]);
    return 0;
  }
  std::size_t start = 0;
  if (int rc = report(m2n_infer_cml(model.get(), data.get(), 0, parse_direction(a.direction), a.qstart, a.qlen, &start)))
    return rc;
  std::printf("start=%zu,len=%zu\n", start, a.qlen);
  return 0;
}

struct GradArgs {
  m2n_gradcheck_config cfg;
  std::string task = "sel";
  std::string fault;
};

int run_gradcheck(GradArgs a) {
  a.cfg.task = parse_task(a.task);
  a.cfg.fault_param = a.fault.empty() ? nullptr : a.fault.c_str();
  m2n_gradcheck_report* r = nullptr;
  if (int rc = report(m2n_gradcheck(&a.cfg, &r))) return rc;
  ReportPtr rep(r);
  double worst = 0.0;
  for (std::size_t i = 0; i < m2n_gradcheck_count(r); ++i) {
    const double e = m2n_gradcheck_error(r, i);
    worst = std::max(worst, e);
    std::printf("%s %s %.3e\n", m2n_gradcheck_passed(r, i) ? "ok  " : "FAIL", m2n_gradcheck_name(r, i), e);
  }
  const bool pass = m2n_gradcheck_all_passed(r);
  std::printf("%s: %zu parameters, max error %.3e, tol %.1e\n", pass ? "PASS" : "FAIL", m2n_gradcheck_count(r), worst,
              a.cfg.tol);
  if (!pass) {
    std::fprintf(stderr, "gradient check failed:");
    for (std::size_t i = 0; i < m2n_gradcheck_count(r); ++i)
      if (!m2n_gradcheck_passed(r, i)) std::fprintf(stderr, " %s", m2n_gradcheck_name(r, i));
    std::fprintf(stderr, "\n");
    return M2N_ERR_CHECK;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"M2N audio-visual event localization"};
  app.require_subcommand(1);
  const auto tasks = CLI::IsMember({"sel", "cml"});
  const auto directions = CLI::IsMember({"a2v", "v2a"});

  GenArgs gen;
  m2n_gen_spec_default(&gen.spec);
  auto* gen_cmd = app.add_subcommand("gen", "write a synthetic dataset");
  gen_cmd->add_option("--out", gen.out, "output directory")->required();
  gen_cmd->add_option("--seed", gen.spec.seed);
  gen_cmd->add_option("--samples", gen.spec.samples);
  gen_cmd->add_option("--classes", gen.spec.classes)->check(CLI::PositiveNumber);
  gen_cmd->add_option("--n", gen.spec.segments, "segments per sample")->check(CLI::Range(2, 1 << 16));
  gen_cmd->add_option("--dv", gen.spec.visual_width)->check(CLI::PositiveNumber);
  gen_cmd->add_option("--da", gen.spec.audio_width)->check(CLI::PositiveNumber);
  gen_cmd->add_option("--noise", gen.spec.noise)->check(CLI::NonNegativeNumber);
  gen_cmd->add_option("--gain", gen.spec.gain);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "train on a dataset directory");
  train_cmd->add_option("--task", train.task)->check(tasks);
  train_cmd->add_option("--data", train.data)->required();
  train_cmd->add_option("--epochs", train.epochs)->check(CLI::PositiveNumber);
  train_cmd->add_option("--lr", train.lr)->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--batch", train.batch)->check(CLI::PositiveNumber);
  train_cmd->add_option("--ckpt", train.ckpt, "best checkpoint; <ckpt>.last holds the latest epoch");
  train_cmd->add_option("--log", train.log, "loss log (default <ckpt>.loss.csv)");
  train_cmd->add_option("--val-frac", train.val_frac, "held-out fraction; 0 validates on training data")
      ->check(CLI::Range(0.0, 0.95));
  train_cmd->add_flag("--quiet", train.quiet, "omit per-epoch lines");
  add_model_flags(train_cmd, train.model);

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset directory");
  eval_cmd->add_option("--task", eval.task)->check(tasks);
  eval_cmd->add_option("--direction", eval.direction)->check(directions);
  eval_cmd->add_option("--data", eval.data)->required();
  eval_cmd->add_option("--ckpt", eval.ckpt)->required();
  add_model_flags(eval_cmd, eval.model);

  InferArgs infer;
  auto* infer_cmd = app.add_subcommand("infer", "predict for one feature file");
  infer_cmd->add_option("--task", infer.task)->check(tasks);
  infer_cmd->add_option("--direction", infer.direction)->check(directions);
  infer_cmd->add_option("--input", infer.input)->required();
  infer_cmd->add_option("--ckpt", infer.ckpt)->required();
  infer_cmd->add_option("--qstart", infer.qstart);
  auto* qlen = infer_cmd->add_option("--qlen", infer.qlen);
  add_model_flags(infer_cmd, infer.model);

  GradArgs grad;
  m2n_gradcheck_config_default(&grad.cfg);
  auto* grad_cmd = app.add_subcommand("gradcheck", "compare analytic and finite-difference gradients");
  grad_cmd->add_option("--n", grad.cfg.segments)->check(CLI::Range(1, 64));
  grad_cmd->add_option("--d", grad.cfg.width)->check(CLI::Range(2, 64));
  grad_cmd->add_option("--heads", grad.cfg.heads)->check(CLI::PositiveNumber);
  grad_cmd->add_option("--classes", grad.cfg.classes)->check(CLI::PositiveNumber);
  grad_cmd->add_option("--dv", grad.cfg.visual_width)->check(CLI::PositiveNumber);
  grad_cmd->add_option("--da", grad.cfg.audio_width)->check(CLI::PositiveNumber);
  grad_cmd->add_option("--tol", grad.cfg.tol)->check(CLI::PositiveNumber);
  grad_cmd->add_option("--seed", grad.cfg.seed);
  grad_cmd->add_option("--task", grad.task)->check(tasks);
  grad_cmd->add_option("--fault", grad.fault, "perturb this parameter's gradient")->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : M2N_ERR_USAGE;
  }

  if (*gen_cmd) return run_gen(gen);
  if (*train_cmd) return run_train(train);
  if (*eval_cmd) return run_eval(eval);
  if (*infer_cmd) {
    infer.have_qlen = qlen->count() > 0;
    return run_infer(infer);
  }
  if (*grad_cmd) return run_gradcheck(grad);
  return M2N_ERR_USAGE;
}
