/* Copyright 2026 The M2N Authors
 * SPDX-License-Identifier: Apache-2.0
 *
 * C interface to the M2N library. All objects are opaque handles owned by the
 * caller and released with the matching *_free function. Every call that can
 * fail returns an m2n_status; on failure m2n_last_error() describes the cause
 * for the calling thread until its next failing call.
 */
#ifndef M2N_M2N_H_
#define M2N_M2N_H_

#include <stddef.h>
#include <stdint.h>

#if defined(M2N_BUILDING_LIBRARY)
#define M2N_API __attribute__((visibility("default")))
#else
#define M2N_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Values line up with the command-line exit codes. */
typedef enum {
  M2N_OK = 0,
  M2N_ERR_CHECK = 1,    /* a check ran and failed */
  M2N_ERR_USAGE = 2,    /* bad argument or unwritable output */
  M2N_ERR_DATA = 3,     /* unreadable or corrupt feature data */
  M2N_ERR_MODEL = 4,    /* invalid model config or checkpoint */
  M2N_ERR_INTERNAL = 5  /* anything else */
} m2n_status;

typedef enum { M2N_TASK_SEL = 0, M2N_TASK_CML = 1 } m2n_task;

/* A2V: audio query localized in the visual stream. V2A: the reverse. */
typedef enum { M2N_A2V = 0, M2N_V2A = 1 } m2n_direction;

/* Ablation bits for m2n_model_create. */
enum {
  M2N_DISABLE_CMN = 1u << 0,
  M2N_DISABLE_IMN = 1u << 1,
  M2N_DISABLE_MSPM = 1u << 2,
  M2N_DISABLE_MASM = 1u << 3
};

typedef struct m2n_dataset m2n_dataset;
typedef struct m2n_model m2n_model;
typedef struct m2n_gradcheck_report m2n_gradcheck_report;

M2N_API const char* m2n_last_error(void);
M2N_API const char* m2n_version(void);

/* ---- datasets ---- */

typedef struct {
  uint64_t seed;
  size_t samples;
  size_t segments;
  size_t visual_width;
  size_t audio_width;
  size_t classes;
  float noise;
  float gain;
} m2n_gen_spec;

M2N_API void m2n_gen_spec_default(m2n_gen_spec* spec);
M2N_API m2n_status m2n_dataset_generate(const m2n_gen_spec* spec, m2n_dataset** out);
/* Reads every sample listed in the directory's manifest. */
M2N_API m2n_status m2n_dataset_load(const char* dir, m2n_dataset** out);
/* Reads one feature file as a single-sample dataset. */
M2N_API m2n_status m2n_dataset_load_file(const char* path, m2n_dataset** out);
M2N_API m2n_status m2n_dataset_save(const m2n_dataset* data, const char* dir);
M2N_API size_t m2n_dataset_size(const m2n_dataset* data);
/* Shape of the first sample; all samples in a dataset agree. */
M2N_API m2n_status m2n_dataset_shape(const m2n_dataset* data, size_t* segments, size_t* visual_width,
                                     size_t* audio_width, size_t* classes);
/* Ground-truth event of sample `index`. */
M2N_API m2n_status m2n_dataset_event(const m2n_dataset* data, size_t index, size_t* start, size_t* length);
M2N_API void m2n_dataset_free(m2n_dataset* data);

/* ---- models ---- */

typedef struct {
  size_t segments;
  size_t visual_width;
  size_t audio_width;
  size_t width;
  size_t heads;
  size_t classes;
} m2n_model_config;

M2N_API void m2n_model_config_default(m2n_model_config* cfg);
M2N_API m2n_status m2n_model_create(const m2n_model_config* cfg, uint64_t seed, unsigned disabled,
                                    m2n_model** out);
/* Overwrites the model's parameters; names and shapes must match. */
M2N_API m2n_status m2n_model_load(m2n_model* model, const char* path);
M2N_API m2n_status m2n_model_save(const m2n_model* model, const char* path);
M2N_API size_t m2n_model_parameter_count(const m2n_model* model);
M2N_API void m2n_model_free(m2n_model* model);

/* ---- training and evaluation ---- */

typedef struct {
  m2n_task task;
  size_t epochs;
  size_t batch_size;
  float lr;
  uint64_t seed;
  double val_fraction;     /* 0 validates on the training samples */
  const char* checkpoint;  /* may be NULL */
  const char* loss_log;    /* may be NULL */
} m2n_train_config;

typedef void (*m2n_epoch_callback)(size_t epoch, double loss, double val_metric, void* user);

M2N_API void m2n_train_config_default(m2n_train_config* cfg);
/* Leaves the model at its best validation epoch. */
M2N_API m2n_status m2n_train(m2n_model* model, const m2n_dataset* data, const m2n_train_config* cfg,
                             m2n_epoch_callback on_epoch, void* user, double* best_val, size_t* best_epoch);
M2N_API m2n_status m2n_eval_sel(const m2n_model* model, const m2n_dataset* data, double* accuracy);
M2N_API m2n_status m2n_eval_cml(const m2n_model* model, const m2n_dataset* data, m2n_direction dir,
                                double* accuracy);

/* Writes one label per segment (-1 for background) into `labels`, which must
 * hold at least `capacity` >= segments entries. */
M2N_API m2n_status m2n_infer_sel(const m2n_model* model, const m2n_dataset* data, size_t index, int* labels,
                                 size_t capacity);
/* Queries with segments [qstart, qstart + qlen) of the query modality and
 * returns the start of the localized window of length qlen. */
M2N_API m2n_status m2n_infer_cml(const m2n_model* model, const m2n_dataset* data, size_t index,
                                 m2n_direction dir, size_t qstart, size_t qlen, size_t* start);

/* ---- gradient check ---- */

typedef struct {
  size_t segments;
  size_t visual_width;
  size_t audio_width;
  size_t width;
  size_t heads;
  size_t classes;
  double tol;
  uint64_t seed;
  m2n_task task;
  const char* fault_param; /* perturbs this parameter's gradient; NULL for none */
} m2n_gradcheck_config;

M2N_API void m2n_gradcheck_config_default(m2n_gradcheck_config* cfg);
/* Returns M2N_OK whenever the sweep ran, even if some parameters fail. */
M2N_API m2n_status m2n_gradcheck(const m2n_gradcheck_config* cfg, m2n_gradcheck_report** out);
M2N_API size_t m2n_gradcheck_count(const m2n_gradcheck_report* report);
M2N_API const char* m2n_gradcheck_name(const m2n_gradcheck_report* report, size_t i);
M2N_API double m2n_gradcheck_error(const m2n_gradcheck_report* report, size_t i);
M2N_API int m2n_gradcheck_passed(const m2n_gradcheck_report* report, size_t i);
M2N_API int m2n_gradcheck_all_passed(const m2n_gradcheck_report* report);
M2N_API void m2n_gradcheck_free(m2n_gradcheck_report* report);

#ifdef __cplusplus
}
#endif

#endif /* M2N_M2N_H_ */
