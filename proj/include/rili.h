/* C interface to the lung-injury classification pipeline. All functions
 * return rili_status; on failure rili_last_error() describes what went wrong.
 * Strings are UTF-8, paths are filesystem paths. */
#ifndef RILI_H
#define RILI_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum rili_status {
    RILI_OK = 0,
    RILI_ERR_VALIDATION = 2, /* bad arguments or inconsistent inputs */
    RILI_ERR_IO = 3,         /* missing/corrupt files, write failures */
    RILI_ERR_RUNTIME = 4     /* anything else */
} rili_status;

/* Message for the most recent failure on this thread; never NULL. */
const char* rili_last_error(void);

const char* rili_version(void);

/* Frees strings returned through char** out-parameters. */
void rili_free_text(char* text);

/* ---- dataset synthesis -------------------------------------------------- */

typedef struct rili_synth_params {
    int64_t n_patients;           /* > 0 */
    int64_t min_scans_per_patient;
    int64_t max_scans_per_patient;
    double prevalence;            /* in (0, 1) */
    uint64_t seed;
    int32_t off_axial;            /* nonzero: lesions dodge the mid-axial plane */
} rili_synth_params;

/* Writes volumes/ and manifest.csv under out_dir. Same params -> identical
 * bytes. n_scans_out (optional) receives the number of scans written. */
rili_status rili_synth_dataset(const rili_synth_params* params, const char* out_dir, int64_t* n_scans_out);

/* ---- preprocessing ------------------------------------------------------ */

/* Preps every scan in the manifest (crop_mm in {50, 75}; input_mode
 * "orthogonal"/"axial_repeat"; resolution is the model input size) and caches
 * the tensors under out_dir. */
rili_status rili_prep_dataset(const char* manifest_path, double crop_mm, const char* input_mode,
                              int64_t resolution, const char* out_dir);

/* ---- splits ------------------------------------------------------------- */

/* Patient-level holdout + 5-fold split, written as JSON to out_path. */
rili_status rili_make_splits(const char* manifest_path, uint64_t seed, const char* out_path);

/* ---- training / evaluation / reporting ---------------------------------- */

/* Trains one grid cell described by an INI config (sections [model], [prep],
 * [train], [lora], [experiment]) against a split file, evaluating each fold's
 * best checkpoint on the holdout. Artifacts land in <out_dir>/<cell>/ where
 * out_dir comes from the config. run_dir_out (optional) receives the cell
 * directory; it must hold run_dir_cap bytes including the terminator. */
rili_status rili_train_cell(const char* config_path, const char* splits_path, char* run_dir_out,
                            size_t run_dir_cap);

/* Formats a finished run as text. subgroup (optional, e.g.
 * "nodule_size_cm<=2.5") re-scores the holdout on matching scans only;
 * manifest_path (optional) overrides the manifest recorded in the run. */
rili_status rili_eval_run(const char* run_dir, const char* subgroup, const char* manifest_path,
                          char** text_out);

/* Summary tables (per-family CSV + parameter/time table) across runs. */
rili_status rili_report(const char* const* run_dirs, size_t n_dirs, const char* out_dir);

/* ---- parameter accounting ----------------------------------------------- */

/* Parameter budget for a preset under a tuning regime ("nft", "fft", "lora"),
 * computed from the architecture plan without materializing weights. rank 0
 * and targets_csv NULL fall back to the defaults (32 and "q,v"); targets
 * accepts "q,v" or compact "qv" spellings. */
rili_status rili_count_params(const char* preset, const char* regime, int64_t rank, const char* targets_csv,
                              int64_t* total_out, int64_t* trainable_out);

/* Text table of all presets with their total parameter counts. */
rili_status rili_presets_text(char** text_out);

/* ---- models as opaque handles ------------------------------------------- */

typedef struct rili_model rili_model;

/* Builds a preset with seeded initialization. Destroy with rili_model_destroy. */
rili_status rili_model_create(const char* preset, uint64_t seed, rili_model** model_out);
void rili_model_destroy(rili_model* model);

rili_status rili_model_param_count(const rili_model* model, int32_t trainable_only, int64_t* count_out);

/* Freezes/unfreezes parameters per regime; LoRA injects adapters (rank 0 /
 * NULL targets = defaults). lr_out (optional) receives the regime's learning
 * rate. */
rili_status rili_model_apply_regime(rili_model* model, const char* regime, int64_t rank,
                                    const char* targets_csv, uint64_t seed, double* lr_out);

/* Folds adapters into the base weights (LoRA models only). */
rili_status rili_model_merge_adapters(rili_model* model);

/* Batched forward pass. input is batch * 3 * resolution * resolution floats
 * (channel-major); logits_out receives batch * 2 floats. */
rili_status rili_model_forward(rili_model* model, const float* input, int64_t batch, int64_t resolution,
                               float* logits_out);

rili_status rili_model_save(const rili_model* model, const char* path);
rili_status rili_model_load(rili_model* model, const char* path);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* RILI_H */
