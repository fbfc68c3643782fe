// Copyright 2026 The M2N Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "m2n/m2n.h"

namespace fs = std::filesystem;

namespace {

m2n_gen_spec tiny_spec() {
  m2n_gen_spec s;
  m2n_gen_spec_default(&s);
  s.samples = 8;
  s.segments = 4;
  s.visual_width = 6;
  s.audio_width = 5;
  s.classes = 3;
  return s;
}

m2n_model_config tiny_model() {
  m2n_model_config c;
  m2n_model_config_default(&c);
  c.segments = 4;
  c.visual_width = 6;
  c.audio_width = 5;
  c.width = 8;
  c.heads = 2;
  c.classes = 3;
  return c;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "m2n_test_capi";
  fs::create_directories(dir);
  return dir / name;
}

void count_epochs(size_t, double, double, void* user) { ++*static_cast<int*>(user); }

}  // namespace

TEST_CASE("defaults") {
  m2n_gen_spec g;
  m2n_gen_spec_default(&g);
  CHECK(g.seed == 7);
  CHECK(g.samples == 400);
  CHECK(g.segments == 10);
  CHECK(g.visual_width == 32);
  CHECK(g.audio_width == 16);
  CHECK(g.classes == 5);
  m2n_model_config m;
  m2n_model_config_default(&m);
  CHECK(m.width == 256);
  CHECK(m.heads == 4);
  m2n_train_config t;
  m2n_train_config_default(&t);
  CHECK(t.batch_size == 32);
  CHECK(t.lr == doctest::Approx(5e-4));
  CHECK(t.epochs == 60);
  CHECK(std::string(m2n_version()).size() > 0);
}

TEST_CASE("dataset lifecycle") {
  const auto spec = tiny_spec();
  m2n_dataset* data = nullptr;
  REQUIRE(m2n_dataset_generate(&spec, &data) == M2N_OK);
  CHECK(m2n_dataset_size(data) == 8);
  size_t n = 0, dv = 0, da = 0, c = 0;
  CHECK(m2n_dataset_shape(data, &n, &dv, &da, &c) == M2N_OK);
  CHECK(n == 4);
  CHECK(dv == 6);
  CHECK(da == 5);
  CHECK(c == 3);
  size_t start = 0, len = 0;
  CHECK(m2n_dataset_event(data, 0, &start, &len) == M2N_OK);
  CHECK(len >= 2);
  CHECK(start + len <= 4);
  CHECK(m2n_dataset_event(data, 8, &start, &len) == M2N_ERR_USAGE);

  const fs::path dir = scratch("ds");
  fs::remove_all(dir);
  CHECK(m2n_dataset_save(data, dir.c_str()) == M2N_OK);
  m2n_dataset* back = nullptr;
  REQUIRE(m2n_dataset_load(dir.c_str(), &back) == M2N_OK);
  CHECK(m2n_dataset_size(back) == 8);
  m2n_dataset* one = nullptr;
  REQUIRE(m2n_dataset_load_file((dir / "sample_00002.m2nf").c_str(), &one) == M2N_OK);
  CHECK(m2n_dataset_size(one) == 1);
  m2n_dataset_free(one);
  m2n_dataset_free(back);
  m2n_dataset_free(data);

  m2n_dataset* missing = nullptr;
  CHECK(m2n_dataset_load((dir / "nope").c_str(), &missing) == M2N_ERR_DATA);
  CHECK(missing == nullptr);
  CHECK(std::string(m2n_last_error()).find("manifest") != std::string::npos);
  std::FILE* f = std::fopen((dir / "sample_00001.m2nf").c_str(), "r+b");
  std::fputc('Q', f);
  std::fclose(f);
  CHECK(m2n_dataset_load(dir.c_str(), &missing) == M2N_ERR_DATA);
  CHECK(std::string(m2n_last_error()).find("sample_00001.m2nf") != std::string::npos);

  auto zero = spec;
  zero.samples = 0;
  CHECK(m2n_dataset_generate(&zero, &missing) == M2N_ERR_USAGE);
  CHECK(m2n_dataset_generate(nullptr, &missing) == M2N_ERR_USAGE);
  m2n_dataset_free(nullptr);
}

TEST_CASE("model lifecycle, training and inference") {
  const auto spec = tiny_spec();
  m2n_dataset* data = nullptr;
  REQUIRE(m2n_dataset_generate(&spec, &data) == M2N_OK);
  const auto cfg = tiny_model();
  m2n_model* model = nullptr;
  REQUIRE(m2n_model_create(&cfg, 3, 0, &model) == M2N_OK);
  CHECK(m2n_model_parameter_count(model) == 133);

  m2n_train_config tc;
  m2n_train_config_default(&tc);
  tc.epochs = 2;
  tc.batch_size = 4;
  tc.val_fraction = 0.25;
  const std::string ckpt = scratch("m.ckpt").string();
  tc.checkpoint = ckpt.c_str();
  int epochs = 0;
  double best = -1.0;
  size_t best_epoch = 0;
  REQUIRE(m2n_train(model, data, &tc, count_epochs, &epochs, &best, &best_epoch) == M2N_OK);
  CHECK(epochs == 2);
  CHECK(best >= 0.0);
  CHECK(best_epoch >= 1);

  double acc = -1.0;
  CHECK(m2n_eval_sel(model, data, &acc) == M2N_OK);
  CHECK(acc >= 0.0);
  CHECK(m2n_eval_cml(model, data, M2N_V2A, &acc) == M2N_OK);

  std::vector<int> labels(4);
  CHECK(m2n_infer_sel(model, data, 0, labels.data(), labels.size()) == M2N_OK);
  for (int l : labels) CHECK((l >= -1 && l < 3));
  CHECK(m2n_infer_sel(model, data, 0, labels.data(), 2) == M2N_ERR_USAGE);
  size_t start = 99;
  CHECK(m2n_infer_cml(model, data, 0, M2N_A2V, 0, 4, &start) == M2N_OK);
  CHECK(start == 0);
  CHECK(m2n_infer_cml(model, data, 0, M2N_A2V, 2, 3, &start) == M2N_ERR_USAGE);
  CHECK(m2n_infer_cml(model, data, 0, M2N_A2V, 0, 0, &start) == M2N_ERR_USAGE);

  m2n_model* other = nullptr;
  REQUIRE(m2n_model_create(&cfg, 11, 0, &other) == M2N_OK);
  CHECK(m2n_model_load(other, ckpt.c_str()) == M2N_OK);
  double a = 0.0, b = 0.0;
  m2n_eval_sel(model, data, &a);
  m2n_eval_sel(other, data, &b);
  CHECK(a == b);

  auto wide = cfg;
  wide.width = 12;
  m2n_model* mismatched = nullptr;
  REQUIRE(m2n_model_create(&wide, 1, 0, &mismatched) == M2N_OK);
  CHECK(m2n_model_load(mismatched, ckpt.c_str()) == M2N_ERR_MODEL);
  CHECK(m2n_model_load(mismatched, scratch("absent.ckpt").c_str()) == M2N_ERR_MODEL);
  auto narrow = cfg;
  narrow.visual_width = 7;
  m2n_model* incompatible = nullptr;
  REQUIRE(m2n_model_create(&narrow, 1, 0, &incompatible) == M2N_OK);
  CHECK(m2n_eval_sel(incompatible, data, &acc) == M2N_ERR_MODEL);

  tc.epochs = 0;
  CHECK(m2n_train(model, data, &tc, nullptr, nullptr, nullptr, nullptr) == M2N_ERR_USAGE);
  tc.epochs = 1;
  tc.checkpoint = "/proc/forbidden/m.ckpt";
  CHECK(m2n_train(model, data, &tc, nullptr, nullptr, nullptr, nullptr) == M2N_ERR_USAGE);

  m2n_model_free(incompatible);
  m2n_model_free(mismatched);
  m2n_model_free(other);
  m2n_model_free(model);
  m2n_dataset_free(data);
}

TEST_CASE("model config errors") {
  auto cfg = tiny_model();
  cfg.heads = 3;
  m2n_model* model = nullptr;
  CHECK(m2n_model_create(&cfg, 1, 0, &model) == M2N_ERR_MODEL);
  CHECK(model == nullptr);
  CHECK(std::string(m2n_last_error()).find("divisible") != std::string::npos);
  cfg = tiny_model();
  CHECK(m2n_model_create(&cfg, 1, M2N_DISABLE_CMN | M2N_DISABLE_IMN, &model) == M2N_OK);
  m2n_model_free(model);
}

TEST_CASE("gradient check through the C API") {
  m2n_gradcheck_config cfg;
  m2n_gradcheck_config_default(&cfg);
  CHECK(cfg.segments == 4);
  CHECK(cfg.width == 8);
  CHECK(cfg.heads == 2);
  CHECK(cfg.classes == 3);
  cfg.fault_param = "relevance.weight";
  m2n_gradcheck_report* report = nullptr;
  REQUIRE(m2n_gradcheck(&cfg, &report) == M2N_OK);
  CHECK(m2n_gradcheck_count(report) == 133);
  CHECK(m2n_gradcheck_all_passed(report) == 0);
  for (size_t i = 0; i < m2n_gradcheck_count(report); ++i) {
    const bool faulty = std::string(m2n_gradcheck_name(report, i)) == "relevance.weight";
    CHECK(m2n_gradcheck_passed(report, i) == (faulty ? 0 : 1));
  }
  CHECK(m2n_gradcheck_name(report, 1000) == nullptr);
  m2n_gradcheck_free(report);
  cfg.tol = 0.0;
  CHECK(m2n_gradcheck(&cfg, &report) == M2N_ERR_USAGE);
}
