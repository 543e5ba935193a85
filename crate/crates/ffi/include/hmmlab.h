#ifndef HMMLAB_H
#define HMMLAB_H

/* Generated by cbindgen from hmmlab-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code for every fallible call. Zero is success; anything else is
 * an error whose detail is available from `hmmlab_last_error`.
 */
typedef enum {
  HMMLAB_STATUS_OK = 0,
  HMMLAB_STATUS_NULL_POINTER = 1,
  HMMLAB_STATUS_INVALID_ARGUMENT = 2,
  HMMLAB_STATUS_NON_ERGODIC = 3,
  HMMLAB_STATUS_SYNTHESIS_FAILED = 4,
  HMMLAB_STATUS_SYMBOL_OUT_OF_RANGE = 5,
  HMMLAB_STATUS_RANK_DEFICIENT = 6,
  HMMLAB_STATUS_SEQUENCE_TOO_SHORT = 7,
  HMMLAB_STATUS_BUFFER_TOO_SMALL = 8,
  HMMLAB_STATUS_UTF8_ERROR = 9,
  HMMLAB_STATUS_JSON_ERROR = 10,
  HMMLAB_STATUS_INTERNAL_ERROR = 11,
} HmmlabStatus;

/**
 * Opaque sampled trajectory batch.
 */
typedef struct HmmlabBatch HmmlabBatch;

/**
 * Opaque HMM parameter set.
 */
typedef struct HmmlabModel HmmlabModel;

/**
 * Opaque fitted spectral parameters.
 */
typedef struct HmmlabSpectral HmmlabSpectral;

/**
 * Exact chain analysis results.
 */
typedef struct {
  double mixing_rate;
  double transition_entropy;
  double emission_entropy;
  double normalized_joint_entropy;
  /**
   * 1 when the unit eigenvalue is simple.
   */
  uint8_t ergodic;
} HmmlabAnalysis;

/**
 * Flat synthesis request. `beta = 0` means a uniform stationary
 * distribution, `beta >= 1` the Beta(1, beta) skew; `target_ha = NaN`
 * leaves the transition entropy free; `deterministic_init != 0` puts all
 * initial mass on state 1.
 */
typedef struct {
  uint32_t num_states;
  uint32_t num_obs;
  double target_lambda2;
  double beta;
  double target_ha;
  double target_hb;
  uint8_t deterministic_init;
  uint64_t seed;
  uint32_t max_retries;
} HmmlabSynthesisSpec;

/**
 * What the accepted construction achieved.
 */
typedef struct {
  double achieved_lambda2;
  double achieved_ha;
  double achieved_hb;
  double max_row_sum_error;
  double stationary_error;
  uint64_t iterations_used;
  uint32_t retries;
  uint8_t accepted;
} HmmlabSynthesisReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent error on this thread. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *hmmlab_last_error(void);

/**
 * Crate version as a static string.
 */
const char *hmmlab_version(void);

/**
 * Release a string returned by this library.
 *
 * # Safety
 * `s` must have been returned by a hmmlab function and not freed before.
 */
void hmmlab_string_free(char *s);

/**
 * Build a model from row-major matrices. `pi` has length `m`, `a` is
 * `m * m`, `b` is `m * l`. The parameters must be stochastic.
 *
 * # Safety
 * All pointers must reference buffers of the documented lengths.
 */
HmmlabStatus hmmlab_model_new(uint32_t m,
                              uint32_t l,
                              const double *pi,
                              const double *a,
                              const double *b,
                              HmmlabModel **out);

/**
 * Parse a model from the params-file JSON shape `{"M", "L", "pi", "A", "B"}`.
 *
 * # Safety
 * `json` must be a NUL-terminated UTF-8 string.
 */
HmmlabStatus hmmlab_model_from_json(const char *json, HmmlabModel **out);

/**
 * Serialize a model to its JSON file shape; free with `hmmlab_string_free`.
 *
 * # Safety
 * `model` must be a live handle from this library.
 */
char *hmmlab_model_to_json(const HmmlabModel *model);

/**
 * # Safety
 * `model` must be a live handle; it is invalid after this call.
 */
void hmmlab_model_free(HmmlabModel *model);

/**
 * # Safety
 * `model` must be a live handle or null.
 */
uint32_t hmmlab_model_num_states(const HmmlabModel *model);

/**
 * # Safety
 * `model` must be a live handle or null.
 */
uint32_t hmmlab_model_num_obs(const HmmlabModel *model);

/**
 * Number of violated parameter invariants (0 means valid).
 *
 * # Safety
 * `model` must be a live handle or null.
 */
uint32_t hmmlab_model_validate(const HmmlabModel *model);

/**
 * # Safety
 * `model` must be a live handle; `out` must point to writable memory.
 */
HmmlabStatus hmmlab_model_analyze(const HmmlabModel *model, HmmlabAnalysis *out);

/**
 * Stationary distribution into a caller buffer of length `len >= M`.
 *
 * # Safety
 * `model` must be a live handle; `buf` must hold `len` doubles.
 */
HmmlabStatus hmmlab_model_stationary(const HmmlabModel *model, double *buf, uintptr_t len);

/**
 * # Safety
 * `spec` and `out_model` must be valid; `out_report` may be null.
 */
HmmlabStatus hmmlab_synthesize(const HmmlabSynthesisSpec *spec,
                               HmmlabModel **out_model,
                               HmmlabSynthesisReport *out_report);

/**
 * Sample `n` state/observation sequence pairs of length `t`.
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
HmmlabStatus hmmlab_sample(const HmmlabModel *model,
                           uint32_t n,
                           uint32_t t,
                           uint64_t seed,
                           HmmlabBatch **out);

/**
 * # Safety
 * `batch` must be a live handle; it is invalid after this call.
 */
void hmmlab_batch_free(HmmlabBatch *batch);

/**
 * # Safety
 * `batch` must be a live handle or null.
 */
uint32_t hmmlab_batch_num_sequences(const HmmlabBatch *batch);

/**
 * # Safety
 * `batch` must be a live handle or null.
 */
uint32_t hmmlab_batch_seq_len(const HmmlabBatch *batch);

/**
 * Copy sequence `index`'s observations as 1-based symbols.
 *
 * # Safety
 * `batch` must be a live handle; `buf` must hold `len` u32 values.
 */
HmmlabStatus hmmlab_batch_observations(const HmmlabBatch *batch,
                                       uint32_t index,
                                       uint32_t *buf,
                                       uintptr_t len);

/**
 * Copy sequence `index`'s hidden states as 1-based symbols.
 *
 * # Safety
 * `batch` must be a live handle; `buf` must hold `len` u32 values.
 */
HmmlabStatus hmmlab_batch_states(const HmmlabBatch *batch,
                                 uint32_t index,
                                 uint32_t *buf,
                                 uintptr_t len);

/**
 * Exact conditional `P(O_{t+1} | O_{1:t})` under the model.
 *
 * # Safety
 * `model` live; `observations` holds `len` 1-based symbols; `out_probs`
 * holds `out_len >= L` doubles.
 */
HmmlabStatus hmmlab_oracle_forward(const HmmlabModel *model,
                                   const uint32_t *observations,
                                   uintptr_t len,
                                   double *out_probs,
                                   uintptr_t out_len);

/**
 * Viterbi-decoded next-observation distribution.
 *
 * # Safety
 * As for `hmmlab_oracle_forward`.
 */
HmmlabStatus hmmlab_viterbi_predict(const HmmlabModel *model,
                                    const uint32_t *observations,
                                    uintptr_t len,
                                    double *out_probs,
                                    uintptr_t out_len);

/**
 * Truncated-memory forward prediction over the last `k + 1` observations.
 *
 * # Safety
 * As for `hmmlab_oracle_forward`.
 */
HmmlabStatus hmmlab_truncated_forward_predict(const HmmlabModel *model,
                                              const uint32_t *observations,
                                              uintptr_t len,
                                              uint32_t k,
                                              double *out_probs,
                                              uintptr_t out_len);

/**
 * Additively smoothed n-gram prediction over a 1-based symbol history.
 *
 * # Safety
 * `observations` holds `len` symbols; `out_probs` holds `out_len >=
 * alphabet` doubles.
 */
HmmlabStatus hmmlab_ngram_predict(const uint32_t *observations,
                                  uintptr_t len,
                                  uint32_t alphabet,
                                  uint32_t n,
                                  double delta,
                                  double *out_probs,
                                  uintptr_t out_len);

/**
 * Fit an HMM to one sequence with Baum-Welch and return it as a new model
 * handle.
 *
 * # Safety
 * `observations` holds `len` 1-based symbols; `out` must be writable.
 */
HmmlabStatus hmmlab_baum_welch_fit(const uint32_t *observations,
                                   uintptr_t len,
                                   uint32_t num_states,
                                   uint32_t alphabet,
                                   uint64_t init_seed,
                                   uint32_t max_iters,
                                   double tol,
                                   HmmlabModel **out);

/**
 * Estimate spectral parameters from one sequence (`alphabet >= num_states`).
 *
 * # Safety
 * `observations` holds `len` 1-based symbols; `out` must be writable.
 */
HmmlabStatus hmmlab_spectral_fit(const uint32_t *observations,
                                 uintptr_t len,
                                 uint32_t num_states,
                                 uint32_t alphabet,
                                 uint32_t burn_in,
                                 HmmlabSpectral **out);

/**
 * Belief-update over the history and score the next symbol.
 *
 * # Safety
 * `spectral` must be a live handle; buffers as documented.
 */
HmmlabStatus hmmlab_spectral_predict(const HmmlabSpectral *spectral,
                                     const uint32_t *observations,
                                     uintptr_t len,
                                     double *out_probs,
                                     uintptr_t out_len);

/**
 * # Safety
 * `spectral` must be a live handle; it is invalid after this call.
 */
void hmmlab_spectral_free(HmmlabSpectral *spectral);

/**
 * Hellinger distance between two probability vectors of length `len`.
 *
 * # Safety
 * `p`, `q` hold `len` doubles; `out` must be writable.
 */
HmmlabStatus hmmlab_hellinger(const double *p, const double *q, uintptr_t len, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HMMLAB_H */
