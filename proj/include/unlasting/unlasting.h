#ifndef UNLASTING_UNLASTING_H
#define UNLASTING_UNLASTING_H

/* C interface to the unlasting perturbation-response library.
 *
 * Every fallible call returns an unl_status. On failure the message is kept per thread
 * and can be read with unl_last_error() until the next failing call on that thread.
 * Objects are opaque; each *_free accepts NULL. Strings returned through char** are
 * owned by the caller and released with unl_string_free(). */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(UNLASTING_BUILDING_LIBRARY)
#    define UNL_API __declspec(dllexport)
#  else
#    define UNL_API __declspec(dllimport)
#  endif
#else
#  define UNL_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum unl_status {
  UNL_OK = 0,
  UNL_ERR_ARGUMENT = 1,
  UNL_ERR_INVALID_DATA = 2,
  UNL_ERR_INSUFFICIENT_DATA = 3,
  UNL_ERR_NUMERIC = 4,
  UNL_ERR_STEP_RANGE = 5,
  UNL_ERR_TRAINING = 6,
  UNL_ERR_IO = 7,
  UNL_ERR_FORMAT = 8,
  UNL_ERR_INTERNAL = 9
} unl_status;

typedef struct unl_config unl_config;
typedef struct unl_dataset unl_dataset;
typedef struct unl_grn unl_grn;
typedef struct unl_denoiser unl_denoiser;
typedef struct unl_mask_model unl_mask_model;

/* Called once per optimisation step. loss is NaN for a skipped all-silent batch. */
typedef void (*unl_progress_fn)(size_t step, double loss, void* user);

UNL_API const char* unl_version(void);
UNL_API const char* unl_status_name(unl_status status);
UNL_API const char* unl_last_error(void);
UNL_API void unl_string_free(char* s);

/* Run configuration (hyperparameters, ablation flags, split). */
UNL_API unl_status unl_config_new(unl_config** out);
UNL_API unl_status unl_config_load(const char* path, unl_config** out);
UNL_API unl_status unl_config_from_json(const char* text, unl_config** out);
UNL_API unl_status unl_config_to_json(const unl_config* cfg, char** out);
UNL_API unl_status unl_config_hash(const unl_config* cfg, uint64_t* out);
/* Boolean switches: no_ctrl_stats, random_latent, no_mask, no_grn, clamp_output. */
UNL_API unl_status unl_config_set_flag(unl_config* cfg, const char* name, int value);
UNL_API void unl_config_free(unl_config* cfg);

/* Synthetic benchmark: raw.csv, conditions.json, truth.json, true_grn.csv in out_dir.
 * sim_config_path may be NULL for defaults. */
UNL_API unl_status unl_simulate(const char* sim_config_path, uint64_t seed, const char* out_dir);

/* Expression CSV plus condition registry JSON; molecules_csv may be NULL. */
UNL_API unl_status unl_dataset_load(const char* csv_path, const char* conditions_path, const char* molecules_csv,
                                    unl_dataset** out);
/* conditions_path may be NULL to write only the CSV. */
UNL_API unl_status unl_dataset_save(const unl_dataset* ds, const char* csv_path, const char* conditions_path);
UNL_API unl_status unl_dataset_shape(const unl_dataset* ds, size_t* cells, size_t* genes);
/* Copies values row-major into out (cells * genes doubles). */
UNL_API unl_status unl_dataset_values(const unl_dataset* ds, double* out);
UNL_API unl_status unl_dataset_max(const unl_dataset* ds, double* out);
UNL_API void unl_dataset_free(unl_dataset* ds);

/* Reads x_max from a meta.json written by unl_preprocess. */
UNL_API unl_status unl_read_x_max(const char* meta_path, double* out);

/* log1p, gene selection, split; writes train.csv, test.csv, conditions.json, meta.json
 * (and prior.csv when prior_csv is given) into out_dir. */
UNL_API unl_status unl_preprocess(const unl_config* cfg, const unl_dataset* raw, const char* prior_csv,
                                  const char* out_dir);

/* prior_csv may be NULL (no prior edges). */
UNL_API unl_status unl_grn_build(const unl_dataset* ds, const char* prior_csv, double eps_co, unl_grn** out);
UNL_API unl_status unl_grn_load(const char* path, unl_grn** out);
UNL_API unl_status unl_grn_save(const unl_grn* grn, const char* path);
UNL_API unl_status unl_grn_size(const unl_grn* grn, size_t* genes, size_t* edges);
UNL_API void unl_grn_free(unl_grn* grn);

/* train holds log1p values; x_max is the scale reference. progress may be NULL. */
UNL_API unl_status unl_denoiser_train(const unl_config* cfg, const unl_dataset* train, const unl_grn* grn,
                                      double x_max, unl_progress_fn progress, void* user, unl_denoiser** out);
UNL_API unl_status unl_denoiser_save(const unl_denoiser* model, const char* path);
UNL_API unl_status unl_denoiser_load(const char* path, unl_denoiser** out);
UNL_API void unl_denoiser_free(unl_denoiser* model);

UNL_API unl_status unl_mask_model_train(const unl_config* cfg, const unl_dataset* train, const unl_grn* grn,
                                        double x_max, unl_progress_fn progress, void* user, unl_mask_model** out);
UNL_API unl_status unl_mask_model_save(const unl_mask_model* model, const char* path);
UNL_API unl_status unl_mask_model_load(const char* path, unl_mask_model** out);
UNL_API void unl_mask_model_free(unl_mask_model* model);

/* One prediction per perturbed cell of targets, bridged from control cells in controls.
 * mask may be NULL only when the config sets no_mask. */
UNL_API unl_status unl_predict(const unl_config* cfg, const unl_denoiser* model, const unl_mask_model* mask,
                               const unl_dataset* targets, const unl_dataset* controls, unl_dataset** out);

/* JSON report (All/DE20/DE40 per condition) and per-gene EMD CSV. cfg may be NULL;
 * when given its hash is recorded. per_gene_csv may be NULL. */
UNL_API unl_status unl_evaluate(const unl_dataset* pred, const unl_dataset* truth, const unl_dataset* control,
                                const unl_config* cfg, char** report_json, char** per_gene_csv);

#ifdef __cplusplus
}
#endif

#endif
