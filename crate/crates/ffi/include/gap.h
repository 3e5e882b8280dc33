#ifndef GAP_FFI_H
#define GAP_FFI_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GapStatus {
  GAP_STATUS_OK = 0,
  GAP_STATUS_INVALID_ARGUMENT = 1,
  GAP_STATUS_NOT_FOUND = 2,
  /**
   * The oracle failed: transport, protocol, rate limit or degenerate input.
   */
  GAP_STATUS_ORACLE = 3,
  GAP_STATUS_IO = 4,
  GAP_STATUS_NULL_POINTER = 5,
  GAP_STATUS_PANIC = 6,
} GapStatus;

/**
 * Rendered synthetic corpus.
 */
typedef struct GapCorpus GapCorpus;

/**
 * Similarity oracle with its own query ledger.
 */
typedef struct GapOracle GapOracle;

/**
 * Optimized (or loaded) patch with its placement.
 */
typedef struct GapPatch GapPatch;

/**
 * Search settings. Start from [`gap_optimize_params_default`].
 */
typedef struct GapOptimizeParams {
  uint32_t n_iters;
  uint32_t batch_size;
  uint32_t restart_interval;
  bool restarts_enabled;
  bool symmetric;
  uint64_t seed;
  uint32_t identity;
  uint32_t photo_a;
  uint32_t photo_b;
} GapOptimizeParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. Valid until
 * the next `gap_*` call on the same thread.
 */
const char *gap_last_error(void);

/**
 * # Safety
 * `out` must be a valid pointer to write a handle into.
 */
enum GapStatus gap_corpus_new(uint64_t corpus_seed,
                              uint32_t n_identities,
                              uint32_t photos_per_identity,
                              struct GapCorpus **out);

/**
 * # Safety
 * `corpus` must be NULL or a handle from [`gap_corpus_new`] not yet freed.
 */
void gap_corpus_free(struct GapCorpus *corpus);

/**
 * In-process toy embedding oracle.
 *
 * # Safety
 * `out` must be a valid pointer to write a handle into.
 */
enum GapStatus gap_oracle_toy_new(struct GapOracle **out);

/**
 * HTTP oracle at `endpoint_url`, health-checked before returning.
 * `max_qps <= 0` disables throttling.
 *
 * # Safety
 * `endpoint_url` must be a NUL-terminated string; `out` a valid pointer.
 */
enum GapStatus gap_oracle_remote_new(const char *endpoint_url,
                                     double max_qps,
                                     struct GapOracle **out);

/**
 * Total similarity queries charged so far; 0 for a NULL handle.
 *
 * # Safety
 * `oracle` must be NULL or a live handle.
 */
uint64_t gap_oracle_queries(const struct GapOracle *oracle);

/**
 * # Safety
 * `oracle` must be NULL or a live handle.
 */
void gap_oracle_free(struct GapOracle *oracle);

struct GapOptimizeParams gap_optimize_params_default(void);

/**
 * Runs the greedy search on one pair of the corpus with the default
 * forehead placement. An oracle failure mid-run still yields no patch.
 *
 * # Safety
 * `corpus`, `oracle` and `params` must be live; `out` a valid pointer.
 */
enum GapStatus gap_optimize(const struct GapCorpus *corpus,
                            const struct GapOracle *oracle,
                            const struct GapOptimizeParams *params,
                            struct GapPatch **out);

/**
 * Patch width, height and channel count.
 *
 * # Safety
 * `patch` must be live; the out-pointers valid or NULL.
 */
enum GapStatus gap_patch_dims(const struct GapPatch *patch,
                              size_t *width,
                              size_t *height,
                              size_t *channels);

/**
 * Best loss reached by the search; `+inf` for loaded or empty runs.
 *
 * # Safety
 * `patch` must be NULL or live.
 */
double gap_patch_best_loss(const struct GapPatch *patch);

/**
 * Copies the row-major interleaved values (in `[-1, 1]`) into `buf`, which
 * must hold at least `width * height * channels` doubles.
 *
 * # Safety
 * `buf` must point to `len` writable doubles.
 */
enum GapStatus gap_patch_values(const struct GapPatch *patch, double *buf, size_t len);

/**
 * # Safety
 * `patch` must be live and `path` a NUL-terminated string.
 */
enum GapStatus gap_patch_save_json(const struct GapPatch *patch, const char *path);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` a valid pointer.
 */
enum GapStatus gap_patch_load_json(const char *path, struct GapPatch **out);

/**
 * # Safety
 * `patch` must be NULL or a live handle.
 */
void gap_patch_free(struct GapPatch *patch);

/**
 * Calibrates a threshold at `target_far` from `n_impostor_pairs` sampled
 * with `calibration_seed`, then scores every genuine pair of the corpus
 * with the patch worn. Writes the success rate and the threshold used.
 *
 * # Safety
 * Handles must be live; the out-pointers valid or NULL.
 */
enum GapStatus gap_attack_success_rate(const struct GapCorpus *corpus,
                                       const struct GapOracle *oracle,
                                       const struct GapPatch *patch,
                                       double target_far,
                                       uint32_t n_impostor_pairs,
                                       uint64_t calibration_seed,
                                       double *asr,
                                       double *threshold);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GAP_FFI_H */
