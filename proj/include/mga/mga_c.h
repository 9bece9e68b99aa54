#ifndef MGA_C_H
#define MGA_C_H

/* C interface to the alignment toolkit. Every entry point returns an
 * mga_status; on failure the thread-local message from mga_last_error()
 * explains what went wrong. Returned strings are heap-allocated and must be
 * released with mga_string_free. Handles are opaque and single-owner. */

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mga_status {
  MGA_OK = 0,
  MGA_ERR = 1,     /* internal failure (shape, vocabulary, wiring, ...) */
  MGA_USAGE = 2,   /* bad arguments or configuration */
  MGA_IO = 3,      /* filesystem or file-format trouble */
  MGA_NUMERIC = 4  /* non-finite values or a failed numeric check */
} mga_status;

/* Message for the most recent failure on this thread; never NULL. */
const char* mga_last_error(void);

/* Frees any char* returned through an out-parameter here. NULL is a no-op. */
void mga_string_free(char* s);

/* ------------------------------------------------------------------ */
/* Configuration                                                      */
/* ------------------------------------------------------------------ */

typedef struct mga_config mga_config;

/* Fresh config holding the built-in defaults; NULL only on allocation
 * failure. Free with mga_config_free. */
mga_config* mga_config_new(void);
void mga_config_free(mga_config* cfg);

/* Merges a key = value file into cfg (later wins). */
mga_status mga_config_load_file(mga_config* cfg, const char* path);

/* Sets one key; unknown keys fail listing the valid ones. */
mga_status mga_config_set(mga_config* cfg, const char* key, const char* value);

/* Reads one key back in its textual form. */
mga_status mga_config_get(const mga_config* cfg, const char* key, char** value);

/* Full range validation, same checks training performs up front. */
mga_status mga_config_validate(const mga_config* cfg);

/* Sorted "key = value" lines; parseable by mga_config_load_file. */
mga_status mga_config_dump(const mga_config* cfg, char** out);

/* ------------------------------------------------------------------ */
/* Corpus                                                             */
/* ------------------------------------------------------------------ */

typedef struct mga_corpus mga_corpus;

/* Generates a synthetic corpus and writes it under out_dir. Any of
 * clips/frames/events/feat_dim may be 0 to take the built-in default,
 * sigma may be negative for the default. */
mga_status mga_corpus_generate(const char* out_dir, int clips, int frames,
                               int events, int feat_dim, double sigma,
                               uint64_t seed, mga_corpus** out);

/* Opens a corpus previously written by mga_corpus_generate. */
mga_status mga_corpus_open(const char* dir, mga_corpus** out);

/* Human-readable split and vocabulary summary. */
mga_status mga_corpus_summary(const mga_corpus* corpus, char** out);

void mga_corpus_free(mga_corpus* corpus);

/* ------------------------------------------------------------------ */
/* Training                                                           */
/* ------------------------------------------------------------------ */

typedef void (*mga_epoch_cb)(int epoch, double train_loss, double val_r1,
                             void* user);

/* Runs the training loop described by cfg on the corpus. Writes checkpoints,
 * metrics, and the effective config under the configured output directory;
 * calls cb (when non-NULL) after every epoch. On success *summary_json (when
 * non-NULL) carries a JSON object with the run's paths and headline numbers.
 * A numeric abort reports MGA_NUMERIC with diagnostics in mga_last_error. */
mga_status mga_train(const mga_config* cfg, const mga_corpus* corpus,
                     mga_epoch_cb cb, void* user, char** summary_json);

/* ------------------------------------------------------------------ */
/* Models and evaluation                                               */
/* ------------------------------------------------------------------ */

typedef struct mga_model mga_model;

/* Loads a checkpoint written by mga_train. The config must describe the same
 * architecture and objective the checkpoint was trained with. */
mga_status mga_model_load(const mga_config* cfg, const mga_corpus* corpus,
                          const char* checkpoint, mga_model** out);
void mga_model_free(mga_model* model);

/* Retrieval + tagging + detection on one split ("train", "val" or "test";
 * the detection threshold is always chosen on val). as_json selects the JSON
 * report, otherwise a human-readable one. */
mga_status mga_evaluate(const mga_model* model, const mga_corpus* corpus,
                        const char* split, int as_json, char** report);

/* Codeword usage statistics (support hits, dead codewords, nearest classes)
 * on one split. Requires a codebook-aggregation model. */
mga_status mga_inspect_codebook(const mga_model* model, const mga_corpus* corpus,
                                const char* split, int top_classes, int as_json,
                                char** report);

/* Class-by-frame cosine heatmap for one clip, written as CSV plus a JSON
 * sidecar with the ground-truth intervals. */
mga_status mga_export_heatmap(const mga_model* model, const mga_corpus* corpus,
                              int clip_id, const char* csv_path);

/* ------------------------------------------------------------------ */
/* Studies and checks                                                  */
/* ------------------------------------------------------------------ */

typedef void (*mga_ablate_cb)(const char* row, uint64_t seed, int ok,
                              double seconds, const char* error, void* user);

/* Trains and evaluates the seven studied toggle combinations across the given
 * seeds, starting from cfg. epochs sets the per-run schedule; <= 0 selects
 * the sweep default, a short schedule that keeps the full sweep inside its
 * time budget (train.epochs from cfg is ignored here). Writes the full report
 * to json_path and csv_path (either may be NULL to skip), calls cb after
 * every run, and returns the directional summary as JSON through trends_json
 * (may be NULL). A run that fails is recorded in the report; the sweep itself
 * still succeeds. */
mga_status mga_ablate(const mga_config* cfg, const mga_corpus* corpus,
                      const uint64_t* seeds, int n_seeds, int epochs,
                      const char* json_path, const char* csv_path,
                      mga_ablate_cb cb, void* user, char** trends_json);

/* Finite-difference audit of every differentiable op and the composed loss
 * and model paths, points_per_item fresh draws each. MGA_OK only when every
 * item passes; a failing suite returns MGA_NUMERIC and still fills *report. */
mga_status mga_grad_check(int points_per_item, uint64_t seed, int as_json,
                          char** report);

#ifdef __cplusplus
}
#endif

#endif /* MGA_C_H */
