// Copyright 2026 The M3D Attack Lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef M3D_M3D_H_
#define M3D_M3D_H_

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(__GNUC__)
#define M3D_API __attribute__((visibility("default")))
#else
#define M3D_API
#endif

/* Status codes. Every fallible call returns one of these; the message of the
 * most recent failure on the calling thread is available from
 * m3d_last_error(). */
typedef enum {
  M3D_OK = 0,
  M3D_E_INVALID_ARGUMENT = 1,
  M3D_E_CONFIG = 2,
  M3D_E_VALIDATION = 3,
  M3D_E_IO = 4,
  M3D_E_INTEGRITY = 5,
  M3D_E_ARCH_MISMATCH = 6,
  M3D_E_DIVERGENCE = 7,
  M3D_E_SHAPE = 8,
  M3D_E_RUNTIME = 9
} m3d_status;

typedef enum { M3D_PROTOCOL_ALL_SOURCE = 0, M3D_PROTOCOL_SUBSET_SOURCE = 1 } m3d_protocol;

typedef enum {
  M3D_ROLE_WHITEBOX_SUBSTITUTE = 0,
  M3D_ROLE_BLACKBOX = 1,
  M3D_ROLE_ROBUST_BLACKBOX = 2,
  M3D_ROLE_TOPK_API = 3
} m3d_victim_role;

typedef enum { M3D_EVAL_TRANSFER = 0, M3D_EVAL_PERTURBATION_ONLY = 1, M3D_EVAL_TOPK = 2 } m3d_eval_kind;

typedef struct m3d_config m3d_config;
typedef struct m3d_dataset m3d_dataset;
typedef struct m3d_model m3d_model;
typedef struct m3d_lock m3d_lock;

typedef struct {
  double target_accuracy;
  double error_rate;
  int n;
  int degenerate;
} m3d_metrics;

typedef struct {
  double err_blackbox_to_target;
  double err_substitute_to_target;
  double disagreement_sb;
  int violations;
  int n;
  double max_pairwise_disagreement; /* lower estimate; -1 when not sampled */
} m3d_bound_result;

M3D_API const char* m3d_version(void);
M3D_API const char* m3d_last_error(void);
M3D_API const char* m3d_status_string(m3d_status status);

/* Text outputs use a caller buffer. `needed` (optional) receives the full
 * length including the terminator; a short buffer yields
 * M3D_E_INVALID_ARGUMENT with the text truncated. */

/* ---- configuration ---------------------------------------------------- */

/* `overrides` are "key=value" strings applied after the file. */
M3D_API m3d_status m3d_config_load(const char* path, const char* const* overrides, int n_overrides, m3d_config** out);
M3D_API m3d_status m3d_config_parse(const char* text, const char* const* overrides, int n_overrides,
                                    m3d_config** out);
M3D_API m3d_status m3d_config_serialize(const m3d_config* cfg, char* buf, size_t cap, size_t* needed);
M3D_API m3d_status m3d_config_get(const m3d_config* cfg, const char* key, char* buf, size_t cap, size_t* needed);
M3D_API m3d_status m3d_config_hash(const m3d_config* cfg, char* buf, size_t cap);
M3D_API void m3d_config_free(m3d_config* cfg);

/* ---- data ------------------------------------------------------------- */

M3D_API m3d_status m3d_dataset_load(const m3d_config* cfg, m3d_dataset** out);
M3D_API m3d_status m3d_dataset_info(const m3d_dataset* ds, int* num_classes, int* n_train, int* n_test, int* side);
/* Writes <root>/train/<class>/<id>.png and <root>/test/<class>/<id>.png. */
M3D_API m3d_status m3d_dataset_export(const m3d_dataset* ds, const char* root);
M3D_API void m3d_dataset_free(m3d_dataset* ds);

/* ---- models ----------------------------------------------------------- */

/* `expected_arch` may be NULL. */
M3D_API m3d_status m3d_model_load(const char* path, const char* expected_arch, m3d_model** out);
M3D_API m3d_status m3d_model_save(const m3d_model* model, const char* path);
M3D_API m3d_status m3d_model_arch(const m3d_model* model, char* buf, size_t cap, size_t* needed);
M3D_API m3d_status m3d_model_checksum(const m3d_model* model, uint64_t* out);
/* Top-1 accuracy on the test split. */
M3D_API m3d_status m3d_model_accuracy(const m3d_model* model, const m3d_dataset* ds, double* out);
M3D_API void m3d_model_free(m3d_model* model);

M3D_API m3d_status m3d_pretrain(const m3d_config* cfg, const m3d_dataset* ds, const char* arch, uint64_t seed,
                                int augment, m3d_model** out, double* test_accuracy);

/* ---- attack training --------------------------------------------------- */

M3D_API m3d_status m3d_train(const m3d_config* cfg, const m3d_dataset* ds, const m3d_model* substitute,
                             const char* run_dir, int log_every);
M3D_API m3d_status m3d_resume(const m3d_config* cfg, const m3d_dataset* ds, const char* run_dir,
                              int64_t from_iteration, int log_every);

/* ---- evaluation -------------------------------------------------------- */

/* One generator against one victim. The target comes from the generator
 * checkpoint, falling back to the config. `k` is used by M3D_EVAL_TOPK only
 * and its success rate is returned in target_accuracy. */
M3D_API m3d_status m3d_evaluate_one(const m3d_config* cfg, const m3d_dataset* ds, const char* gen_ckpt,
                                    const m3d_model* victim, m3d_eval_kind kind, m3d_protocol protocol, int k,
                                    m3d_metrics* out);

/* Every generator against every victim; writes metrics.csv and summary.csv
 * into out_dir. `mean_out` (optional) receives one macro-average per victim. */
M3D_API m3d_status m3d_evaluate(const m3d_config* cfg, const m3d_dataset* ds, const char* const* gen_ckpts,
                                int n_gens, const m3d_model* const* victims, const char* const* victim_names,
                                const m3d_victim_role* roles, int n_victims, m3d_protocol protocol,
                                const char* out_dir, m3d_metrics* mean_out);

/* Trains modes A, B and C for every (target, seed) under out_dir and writes
 * ablation.csv (rows = victims, columns = modes) and metrics.csv. */
M3D_API m3d_status m3d_ablation(const m3d_config* cfg, const m3d_dataset* ds, const m3d_model* substitute,
                                const m3d_model* const* victims, const char* const* victim_names, int n_victims,
                                const int* targets, int n_targets, const uint64_t* seeds, int n_seeds,
                                const char* out_dir, int log_every);

/* Bound terms for one generator and (h_s, h_b); with n_models >= 2 also
 * samples that many retrained classifiers. Writes bound_report.csv to
 * out_csv when it is not NULL. */
M3D_API m3d_status m3d_bound(const m3d_config* cfg, const m3d_dataset* ds, const char* gen_ckpt,
                             const m3d_model* h_s, const m3d_model* h_b, int n_models, const char* out_csv,
                             m3d_bound_result* out);

/* summary.csv plus SVG charts; notes (newline separated) go to `notes`. */
M3D_API m3d_status m3d_report(const char* run_dir, char* notes, size_t cap, size_t* needed);

/* ---- run directories --------------------------------------------------- */

/* Exclusive writer lock (`.lock` file) on an existing directory. */
M3D_API m3d_status m3d_lock_acquire(const char* run_dir, m3d_lock** out);
M3D_API void m3d_lock_release(m3d_lock* lock);
/* $M3D_RUNS_DIR or "runs". */
M3D_API m3d_status m3d_default_runs_root(char* buf, size_t cap, size_t* needed);

#ifdef __cplusplus
}
#endif

#endif /* M3D_M3D_H_ */
