#ifndef MTSNN_H
#define MTSNN_H

/* C interface to the mtsnn library.
 *
 * Every function returns an mtsnn_status. On failure, mtsnn_last_error()
 * describes the most recent error on the calling thread. Strings returned
 * through char** are owned by the caller and released with
 * mtsnn_string_free(). */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define MTSNN_API __declspec(dllexport)
#else
#define MTSNN_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mtsnn_status {
  MTSNN_OK = 0,
  MTSNN_ERR_RUNTIME = 1,          /* training diverged, internal failure */
  MTSNN_ERR_USAGE = 2,            /* bad config, bad checkpoint, bad arguments */
  MTSNN_ERR_IO = 3,               /* file could not be read or written */
  MTSNN_ERR_DATA = 4,             /* dataset missing or malformed */
  MTSNN_ERR_VERIFY_FAILED = 5,    /* verification ran and a check failed */
  MTSNN_ERR_INVALID_ARGUMENT = 6  /* null handle or pointer */
} mtsnn_status;

typedef struct mtsnn_config mtsnn_config;
typedef struct mtsnn_model mtsnn_model;

MTSNN_API const char* mtsnn_version(void);
MTSNN_API const char* mtsnn_last_error(void);
MTSNN_API void mtsnn_string_free(char* s);

/* ---- configuration ---------------------------------------------------- */

MTSNN_API mtsnn_status mtsnn_config_load(const char* path, mtsnn_config** out);
MTSNN_API mtsnn_status mtsnn_config_from_string(const char* text, mtsnn_config** out);
/* Dotted key such as "mt.deltas"; the config is re-validated and left
 * unchanged on error. */
MTSNN_API mtsnn_status mtsnn_config_set(mtsnn_config* config, const char* key, const char* value);
/* Resolved snapshot. Writes at most `capacity` bytes including the
 * terminator; `required` receives the full size including the terminator. */
MTSNN_API mtsnn_status mtsnn_config_to_string(const mtsnn_config* config, char* buffer, size_t capacity,
                                              size_t* required);
MTSNN_API void mtsnn_config_free(mtsnn_config* config);

/* ---- training --------------------------------------------------------- */

typedef struct mtsnn_epoch_record {
  size_t epoch;
  const char* split; /* "train" or "test" */
  double loss;
  double accuracy;
  double lr;
  double seconds;
} mtsnn_epoch_record;

typedef void (*mtsnn_epoch_callback)(const mtsnn_epoch_record* record, void* user);

typedef struct mtsnn_train_options {
  const char* data_root;   /* NULL: data.root, then $MTSNN_DATA */
  const char* out_root;    /* NULL: "runs" */
  const char* resume_from; /* checkpoint path or NULL */
  mtsnn_epoch_callback on_epoch;
  void* user;
} mtsnn_train_options;

typedef struct mtsnn_train_result {
  double peak_test_accuracy;
  double final_test_accuracy;
  size_t peak_epoch;
  size_t epochs;
  char run_dir[4096];
} mtsnn_train_result;

MTSNN_API mtsnn_status mtsnn_train(const mtsnn_config* config, const mtsnn_train_options* options,
                                   mtsnn_train_result* result);

/* ---- trained models --------------------------------------------------- */

MTSNN_API mtsnn_status mtsnn_model_load(const char* checkpoint_path, mtsnn_model** out);
MTSNN_API mtsnn_status mtsnn_model_parameter_count(const mtsnn_model* model, size_t* count);
MTSNN_API void mtsnn_model_free(mtsnn_model* model);

typedef struct mtsnn_evaluation {
  double loss;
  double accuracy;
  size_t samples;
} mtsnn_evaluation;

/* split is "train" or "test"; the dataset comes from the model's config. */
MTSNN_API mtsnn_status mtsnn_evaluate(mtsnn_model* model, const char* data_root, const char* split,
                                      mtsnn_evaluation* result);

typedef struct mtsnn_verify_options {
  const char* data_root;
  size_t images;       /* 0: 10 */
  int precision_bits;  /* 32 or 64; 0: 64 */
  int inject_multiply; /* nonzero: fault-inject one multiply */
  uint64_t seed;
} mtsnn_verify_options;

/* Writes the JSON report to *json (always, when the checks ran) and sets
 * *passed. Returns MTSNN_ERR_VERIFY_FAILED when a check failed. */
MTSNN_API mtsnn_status mtsnn_verify(const mtsnn_model* model, const mtsnn_verify_options* options, char** json,
                                    int* passed);

/* ---- experiments ------------------------------------------------------ */

typedef struct mtsnn_ablate_options {
  const char* axis;   /* "mt_scope", "deltas" or "steps" */
  const char* values; /* settings separated by ';' */
  const char* steps;  /* comma-separated step counts to cross with, or NULL */
  const char* seeds;  /* comma-separated seeds, or NULL */
  const char* data_root;
  const char* out_root;
  void (*log)(const char* line, void* user);
  void* user;
} mtsnn_ablate_options;

/* Runs the grid sequentially; *csv receives the summary table. */
MTSNN_API mtsnn_status mtsnn_ablate(const mtsnn_config* config, const mtsnn_ablate_options* options, char** csv);

/* Writes SVG charts into out_dir; *written receives the newline-separated
 * list of files. */
MTSNN_API mtsnn_status mtsnn_plot(const char* const* run_dirs, size_t count, const char* out_dir, char** written);

#ifdef __cplusplus
}
#endif

#endif /* MTSNN_H */
