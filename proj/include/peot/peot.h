/* Stable C interface to the peot library.
 *
 * Every function returns a peot_status. On failure a description is
 * available from peot_last_error() until the next call on the same thread.
 * Strings returned through `char**` out-parameters are owned by the caller
 * and released with peot_string_free(). JSON arguments may be NULL or "" for
 * defaults. */
#ifndef PEOT_PEOT_H
#define PEOT_PEOT_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define PEOT_API __declspec(dllexport)
#else
#define PEOT_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum peot_status {
  PEOT_OK = 0,
  PEOT_ERR_INVALID = 1,
  PEOT_ERR_CONFIG = 2,
  PEOT_ERR_DATA = 3,
  PEOT_ERR_NUMERIC = 4,
  PEOT_ERR_IO = 5,
  PEOT_ERR_INTERNAL = 6
} peot_status;

typedef struct peot_dataset peot_dataset;
typedef struct peot_tree peot_tree;
typedef struct peot_gbt peot_gbt;

PEOT_API const char* peot_version(void);
PEOT_API const char* peot_last_error(void);
PEOT_API void peot_string_free(char* s);

/* Datasets */
PEOT_API peot_status peot_dataset_load(const char* path, peot_dataset** out);
PEOT_API peot_status peot_dataset_save(const peot_dataset* ds, const char* path);
PEOT_API void peot_dataset_free(peot_dataset* ds);
/* {"rows", "cols", "num_classes", "temporal", "fingerprint", "provenance", "class_counts"} */
PEOT_API peot_status peot_dataset_info_json(const peot_dataset* ds, char** out_json);
PEOT_API peot_status peot_dataset_from_idx(const char* images_path, const char* labels_path, peot_dataset** out);
/* Recording CSV + window label CSV + feature config JSON (see README). */
PEOT_API peot_status peot_dataset_from_csv(const char* recording_path, const char* labels_path,
                                           const char* feature_config_json, double fs, peot_dataset** out);
/* Synthetic task ("seizure", "tremor", "finger"). When csv_dir is non-NULL the
 * raw recording.csv, labels.csv and features.json are written there.
 * out_note receives the separability note (may be NULL). */
PEOT_API peot_status peot_synth(const char* task, size_t n_windows, uint64_t seed, const char* csv_dir,
                                peot_dataset** out, char** out_note);
/* Train/test split of fold `fold` out of k. */
PEOT_API peot_status peot_dataset_split(const peot_dataset* ds, int k, int fold, uint64_t seed,
                                        peot_dataset** out_train, peot_dataset** out_test);
PEOT_API peot_status peot_dataset_rows(const peot_dataset* ds, size_t* rows, size_t* cols);
PEOT_API peot_status peot_dataset_labels(const peot_dataset* ds, int* out_labels, size_t n);

/* Oblique trees */
PEOT_API peot_status peot_tree_train(const peot_dataset* train, const char* config_json, peot_tree** out);
PEOT_API peot_status peot_tree_load(const char* path, peot_tree** out);
PEOT_API peot_status peot_tree_save(const peot_tree* tree, const char* path);
PEOT_API void peot_tree_free(peot_tree* tree);
/* Single-path labels for every row. */
PEOT_API peot_status peot_tree_predict(const peot_tree* tree, const peot_dataset* ds, int* out_labels, size_t n);
/* Soft class distribution of one raw feature vector. */
PEOT_API peot_status peot_tree_predict_soft(const peot_tree* tree, const double* x, size_t num_features,
                                            double* out_probs, size_t num_classes);
/* Prune + share + fine-tune; replaces *tree and returns the report. */
PEOT_API peot_status peot_tree_compress(peot_tree* tree, const peot_dataset* train, const peot_dataset* eval,
                                        const char* config_json, char** out_report_json);
/* Metrics, size breakdowns, deployed power and touched-parameter fractions. */
PEOT_API peot_status peot_tree_evaluate(const peot_tree* tree, const peot_dataset* ds, char** out_json);

/* Gradient-boosted baselines */
PEOT_API peot_status peot_gbt_train(const peot_dataset* train, const char* config_json, peot_gbt** out);
PEOT_API peot_status peot_gbt_quantize(peot_gbt* model, int threshold_bits, int leaf_bits);
PEOT_API peot_status peot_gbt_load(const char* path, peot_gbt** out);
PEOT_API peot_status peot_gbt_save(const peot_gbt* model, const char* path);
PEOT_API void peot_gbt_free(peot_gbt* model);
PEOT_API peot_status peot_gbt_predict(const peot_gbt* model, const peot_dataset* ds, int* out_labels, size_t n);
PEOT_API peot_status peot_gbt_evaluate(const peot_gbt* model, const peot_dataset* ds, char** out_json);

/* Harness */
PEOT_API peot_status peot_sweep(const peot_dataset* ds, const char* config_json, char** out_csv, char** out_json,
                                char** out_gnuplot);
PEOT_API peot_status peot_benchmark(const peot_dataset* ds, const char* config_json, char** out_json,
                                    char** out_csv);
/* Normalized table over saved model files; the first path is the baseline. */
PEOT_API peot_status peot_report(const peot_dataset* ds, const char* const* model_paths, size_t n_models,
                                 char** out_json, char** out_csv);

/* Default configuration documents: "train", "compress", "gbt", "sweep",
 * "benchmark". */
PEOT_API peot_status peot_default_config(const char* kind, char** out_json);

#ifdef __cplusplus
}
#endif

#endif /* PEOT_PEOT_H */
