/* Copyright 2026 The Copsel Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

/* C interface to copsel.
 *
 * Every function returns a copsel_status. On failure the message for the
 * calling thread is available from copsel_last_error() until the next call.
 * Strings returned through `char**` are heap-allocated and released with
 * copsel_free_string(). JSON documents use the layouts in docs/formats.md.
 */

#ifndef COPSEL_COPSEL_H_
#define COPSEL_COPSEL_H_

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define COPSEL_API __declspec(dllexport)
#else
#define COPSEL_API __attribute__((visibility("default")))
#endif

typedef enum copsel_status {
  COPSEL_OK = 0,
  COPSEL_ERR_ARGUMENT = 1, /* null pointer, bad enum string, bad parameter */
  COPSEL_ERR_SHAPE = 2,    /* dimension mismatch */
  COPSEL_ERR_DOMAIN = 3,   /* value outside its allowed range */
  COPSEL_ERR_FORMAT = 4,   /* malformed JSON, CSV, IDX or checkpoint */
  COPSEL_ERR_IO = 5,       /* file could not be read or written */
  COPSEL_ERR_NUMERIC = 6,  /* non-finite value or failed factorization */
  COPSEL_ERR_INTERNAL = 7
} copsel_status;

typedef struct copsel_dataset copsel_dataset;
typedef struct copsel_model copsel_model;

/* Receives one progress line (no trailing newline). */
typedef void (*copsel_progress_fn)(const char* line, void* user);

COPSEL_API const char* copsel_version(void);
COPSEL_API const char* copsel_last_error(void);
COPSEL_API const char* copsel_status_name(copsel_status status);
COPSEL_API void copsel_free_string(char* s);

/* Experiment configuration as JSON. */
COPSEL_API copsel_status copsel_preset_names(char** out_json);
COPSEL_API copsel_status copsel_preset(const char* name, char** out_json);
/* Parses, validates and re-serializes; fills defaults. */
COPSEL_API copsel_status copsel_normalize_config(const char* config_json,
                                                 char** out_json);

/* Synthetic data: writes train.csv, test.csv and spec.json into out_dir. */
COPSEL_API copsel_status copsel_generate(const char* spec_json,
                                         const char* out_dir);

COPSEL_API copsel_status copsel_dataset_load_csv(const char* path,
                                                 copsel_dataset** out);
COPSEL_API copsel_status copsel_dataset_load_idx(const char* images,
                                                 const char* labels,
                                                 copsel_dataset** out);
COPSEL_API copsel_status copsel_dataset_shape(const copsel_dataset* ds,
                                              size_t* rows, size_t* dim,
                                              size_t* classes, int* has_truth);
COPSEL_API void copsel_dataset_free(copsel_dataset* ds);

/* Trains per the experiment config and writes the run directory. The
 * returned JSON lists artifact paths and test metrics. */
COPSEL_API copsel_status copsel_train(const char* config_json,
                                      copsel_progress_fn progress, void* user,
                                      char** out_json);
/* Full method against NOLA (and low/full rank when ranks != 0). */
COPSEL_API copsel_status copsel_ablate(const char* config_json, int ranks,
                                       copsel_progress_fn progress, void* user,
                                       char** out_json);

COPSEL_API copsel_status copsel_model_load(const char* checkpoint_dir,
                                           copsel_model** out);
COPSEL_API void copsel_model_free(copsel_model* model);
COPSEL_API copsel_status copsel_model_config(const copsel_model* model,
                                             char** out_json);
COPSEL_API copsel_status copsel_evaluate(const copsel_model* model,
                                         const copsel_dataset* ds,
                                         char** out_json);
/* Row-major buffers; any output pointer may be null. alpha and hard hold
 * rows * dim values, probs rows * classes. */
COPSEL_API copsel_status copsel_infer(const copsel_model* model, const double* x,
                                      size_t rows, size_t dim, double* alpha,
                                      double* hard, double* probs);

COPSEL_API copsel_status copsel_export_sigma(const copsel_model* model,
                                             const copsel_dataset* ds,
                                             size_t rows, const char* sigma_path,
                                             const char* correlation_path);
COPSEL_API copsel_status copsel_export_masks(const copsel_model* model,
                                             const copsel_dataset* ds,
                                             const char* path);
COPSEL_API copsel_status copsel_export_ranking(const copsel_model* model,
                                               const copsel_dataset* ds,
                                               size_t m, const char* path);

/* which: "theorem1" | "theorem2" | "copula"; params_json may be null.
 * *passed is 1 when the check meets its threshold. */
COPSEL_API copsel_status copsel_verify(const char* which, const char* params_json,
                                       char** out_json, int* passed);

#ifdef __cplusplus
}
#endif

#endif /* COPSEL_COPSEL_H_ */
