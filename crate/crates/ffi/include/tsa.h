#ifndef TSA_H
#define TSA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TsaStatus {
  TSA_STATUS_OK = 0,
  TSA_STATUS_NULL_POINTER = 1,
  TSA_STATUS_INVALID_ARGUMENT = 2,
  TSA_STATUS_FORMAT = 3,
  TSA_STATUS_IO = 4,
  TSA_STATUS_NUMERICAL = 5,
  TSA_STATUS_DEGENERATE = 6,
  TSA_STATUS_BUFFER_TOO_SMALL = 7,
  TSA_STATUS_PANIC = 8,
} TsaStatus;

/**
 * Opaque knowledge base.
 */
typedef struct TsaKb TsaKb;

/**
 * Opaque trained classifier.
 */
typedef struct TsaModel TsaModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *tsa_last_error(void);

/**
 * Number of features every sample carries.
 */
size_t tsa_num_features(void);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum TsaStatus tsa_model_load(const char *path, struct TsaModel **out);

/**
 * # Safety
 * `model` must come from this library; `path` must be NUL-terminated.
 */
enum TsaStatus tsa_model_save(const struct TsaModel *model, const char *path);

/**
 * # Safety
 * `model` must come from this library (or be null) and not be used again.
 */
void tsa_model_free(struct TsaModel *model);

/**
 * # Safety
 * `model` and `out` must be valid.
 */
enum TsaStatus tsa_model_num_classes(const struct TsaModel *model, size_t *out);

/**
 * Writes class probabilities (model class order) into `probs` and the
 * winning external label (+1 stable, −1 unstable) into `label`.
 *
 * # Safety
 * `features` must point to `n_features` doubles and `probs` to
 * `probs_len` writable doubles; `label` must be valid.
 */
enum TsaStatus tsa_model_predict(const struct TsaModel *model,
                                 const double *features,
                                 size_t n_features,
                                 double *probs,
                                 size_t probs_len,
                                 int32_t *label);

/**
 * # Safety
 * `path` must be NUL-terminated and `out` valid.
 */
enum TsaStatus tsa_kb_load(const char *path, struct TsaKb **out);

/**
 * # Safety
 * `kb` must come from this library (or be null) and not be used again.
 */
void tsa_kb_free(struct TsaKb *kb);

/**
 * # Safety
 * `kb` and `out` must be valid.
 */
enum TsaStatus tsa_kb_len(const struct TsaKb *kb, size_t *out);

/**
 * Copies sample `index` into `features` (`tsa_num_features()` doubles)
 * and its label (±1) into `label`.
 *
 * # Safety
 * `features` must hold `features_len` writable doubles; the rest valid.
 */
enum TsaStatus tsa_kb_sample(const struct TsaKb *kb,
                             size_t index,
                             double *features,
                             size_t features_len,
                             int32_t *label);

/**
 * Trains on a seeded split of `kb` with default settings and reports the
 * held-out accuracy.
 *
 * # Safety
 * `scheme` must be NUL-terminated; `out` and `accuracy` valid.
 */
enum TsaStatus tsa_train(const struct TsaKb *kb,
                         const char *scheme,
                         size_t n_train,
                         uint64_t seed,
                         struct TsaModel **out,
                         double *accuracy);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TSA_H */
