#ifndef VOCMD_H
#define VOCMD_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every call.
 */
typedef enum VocmdStatus {
  VOCMD_STATUS_OK = 0,
  VOCMD_STATUS_NULL_ARGUMENT = 1,
  VOCMD_STATUS_INVALID_UTF8 = 2,
  VOCMD_STATUS_INVALID_ARGUMENT = 3,
  VOCMD_STATUS_IO = 4,
  VOCMD_STATUS_MODEL = 5,
  VOCMD_STATUS_GRAMMAR = 6,
  VOCMD_STATUS_NO_SPEECH = 7,
  VOCMD_STATUS_BAD_PAYLOAD = 8,
  VOCMD_STATUS_INTERNAL = 9,
} VocmdStatus;

/**
 * A loaded acoustic model compiled against one grammar.
 */
typedef struct VocmdRecognizer VocmdRecognizer;

/**
 * Ranked hypotheses of one decode.
 */
typedef struct VocmdResult VocmdResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *vocmd_version(void);

/**
 * Message of the last failed call on this thread, or NULL after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *vocmd_last_error(void);

/**
 * Loads a model directory and compiles a grammar. A NULL `grammar_path`
 * recognizes every lexicon word on its own. A non-finite `beam` disables
 * pruning.
 *
 * # Safety
 * Path arguments must be NULL or NUL-terminated strings; `out` must be a
 * valid pointer to writable storage.
 */
enum VocmdStatus vocmd_recognizer_new(const char *model_dir,
                                      const char *lexicon_path,
                                      const char *grammar_path,
                                      double beam,
                                      size_t n_best,
                                      struct VocmdRecognizer **out);

/**
 * # Safety
 * `rec` must be NULL or a handle from [`vocmd_recognizer_new`] not yet freed.
 */
void vocmd_recognizer_free(struct VocmdRecognizer *rec);

/**
 * Decodes mono 16-bit PCM.
 *
 * # Safety
 * `samples` must point to `len` readable values; `rec` must be a live
 * handle and `out` writable.
 */
enum VocmdStatus vocmd_recognize_pcm(const struct VocmdRecognizer *rec,
                                     const int16_t *samples,
                                     size_t len,
                                     uint32_t sample_rate_hz,
                                     struct VocmdResult **out);

/**
 * Decodes a payload in wire format: WAV bytes or a codeword text file.
 *
 * # Safety
 * `data` must point to `len` readable bytes; `rec` must be a live handle
 * and `out` writable.
 */
enum VocmdStatus vocmd_recognize_bytes(const struct VocmdRecognizer *rec,
                                       const uint8_t *data,
                                       size_t len,
                                       struct VocmdResult **out);

/**
 * Number of hypotheses, best first. Zero for a NULL handle.
 *
 * # Safety
 * `res` must be NULL or a live result handle.
 */
size_t vocmd_result_count(const struct VocmdResult *res);

/**
 * Log score of hypothesis `index`, or NaN when out of range.
 *
 * # Safety
 * `res` must be NULL or a live result handle.
 */
double vocmd_result_score(const struct VocmdResult *res, size_t index);

/**
 * Space-separated words of hypothesis `index`, or NULL when out of range.
 * Owned by the result.
 *
 * # Safety
 * `res` must be NULL or a live result handle.
 */
const char *vocmd_result_words(const struct VocmdResult *res, size_t index);

/**
 * # Safety
 * `res` must be NULL or a result handle not yet freed.
 */
void vocmd_result_free(struct VocmdResult *res);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VOCMD_H */
