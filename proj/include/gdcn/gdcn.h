/* C interface to the multi-view clustering library.
 *
 * Every function returns a gdcn_status; on failure the thread-local message
 * returned by gdcn_last_error() describes the problem. Handles are opaque and
 * must be released with the matching *_free function. Strings returned
 * through `char**` are allocated by the library and released with
 * gdcn_string_free.
 */
#ifndef GDCN_GDCN_H
#define GDCN_GDCN_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(__GNUC__)
#define GDCN_API __attribute__((visibility("default")))
#else
#define GDCN_API
#endif

typedef enum gdcn_status {
  GDCN_OK = 0,
  GDCN_ERR_CONFIG = 1,
  GDCN_ERR_SHAPE = 2,
  GDCN_ERR_NUMERICAL = 3,
  GDCN_ERR_IO = 4,
  GDCN_ERR_FORMAT = 5,
  GDCN_ERR_INVALID_ARGUMENT = 6,
  GDCN_ERR_INTERNAL = 7
} gdcn_status;

typedef struct gdcn_dataset gdcn_dataset;
typedef struct gdcn_model gdcn_model;

typedef struct gdcn_metrics {
  double acc;
  double nmi;
  double pur;
} gdcn_metrics;

typedef struct gdcn_synthetic_spec {
  size_t n_clusters;
  size_t per_cluster;
  const size_t* view_dims;
  size_t n_views;
  double separation;
  uint64_t seed;
} gdcn_synthetic_spec;

/* Per-cell corruption; a cell is one sample's feature row in one view. */
typedef struct gdcn_corruption_spec {
  double noise_sigma;
  double noise_fraction;
  double missing_fraction;
  uint64_t seed;
} gdcn_corruption_spec;

/* Called after every training epoch. `acc` is NaN when not computed. */
typedef void (*gdcn_epoch_callback)(size_t epoch, int finetune, double loss_rec, double loss_cl, double loss_total,
                                    double acc, void* user);

GDCN_API const char* gdcn_version(void);
/* Message of the last failure on this thread ("" if none). */
GDCN_API const char* gdcn_last_error(void);
GDCN_API void gdcn_string_free(char* s);

/* Datasets. */
GDCN_API gdcn_status gdcn_dataset_generate(const gdcn_synthetic_spec* spec, gdcn_dataset** out);
GDCN_API gdcn_status gdcn_dataset_load(const char* dir, gdcn_dataset** out);
GDCN_API gdcn_status gdcn_dataset_save(const gdcn_dataset* ds, const char* dir);
GDCN_API gdcn_status gdcn_dataset_corrupt(const gdcn_dataset* ds, const gdcn_corruption_spec* spec,
                                          gdcn_dataset** out);
/* Column-wise min-max scaling to [0, 1] in place (what loading applies). */
GDCN_API gdcn_status gdcn_dataset_normalize(gdcn_dataset* ds);
GDCN_API gdcn_status gdcn_dataset_info(const gdcn_dataset* ds, size_t* n_samples, size_t* n_views,
                                       size_t* n_clusters, int* has_labels);
GDCN_API gdcn_status gdcn_dataset_view_dim(const gdcn_dataset* ds, size_t view, size_t* dim);
GDCN_API void gdcn_dataset_free(gdcn_dataset* ds);

/* Models. `config_json` may be NULL or "" for defaults; dotted keys are
 * accepted. */
GDCN_API gdcn_status gdcn_model_create(const gdcn_dataset* ds, const char* config_json, gdcn_model** out);
GDCN_API gdcn_status gdcn_model_load(const char* checkpoint, gdcn_model** out);
GDCN_API gdcn_status gdcn_model_save(const gdcn_model* model, const char* checkpoint);
/* Effective config as JSON. */
GDCN_API gdcn_status gdcn_model_config_json(const gdcn_model* model, char** out);
/* Pretrain + finetune + evaluate. `out_dir` may be NULL (no files).
 * `metrics` may be NULL; it is only filled when the dataset has labels. */
GDCN_API gdcn_status gdcn_model_train(gdcn_model* model, const gdcn_dataset* ds, const char* out_dir,
                                      gdcn_epoch_callback callback, void* user, gdcn_metrics* metrics);
GDCN_API gdcn_status gdcn_model_evaluate(const gdcn_model* model, const gdcn_dataset* ds, gdcn_metrics* metrics);
/* Cluster assignments into `assignments` (n_samples entries). */
GDCN_API gdcn_status gdcn_model_cluster(const gdcn_model* model, const gdcn_dataset* ds, int* assignments,
                                        size_t capacity);
/* `which` is "fused", "projected" or "per-view". */
GDCN_API gdcn_status gdcn_model_export_embeddings(const gdcn_model* model, const gdcn_dataset* ds, const char* which,
                                                  const char* out_dir);
/* Fused representation into a caller buffer of `capacity` doubles, row
 * major; `rows`/`cols` receive the shape. Passing capacity 0 queries the
 * shape only. */
GDCN_API gdcn_status gdcn_model_embed(const gdcn_model* model, const gdcn_dataset* ds, double* out, size_t capacity,
                                      size_t* rows, size_t* cols);
GDCN_API void gdcn_model_free(gdcn_model* model);

/* {"acc": 0.123456, "nmi": ..., "pur": ...} */
GDCN_API gdcn_status gdcn_metrics_to_json(const gdcn_metrics* metrics, char** out);

#ifdef __cplusplus
}
#endif

#endif
