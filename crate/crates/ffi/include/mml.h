#ifndef MML_H
#define MML_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum MmlStatus {
  MML_STATUS_OK = 0,
  MML_STATUS_NULL_POINTER = 1,
  MML_STATUS_INVALID_ARGUMENT = 2,
  MML_STATUS_NON_POSITIVE_ENTRY = 3,
  MML_STATUS_SHAPE_MISMATCH = 4,
  MML_STATUS_NO_CONVERGENCE = 5,
  MML_STATUS_TOO_LARGE = 6,
  MML_STATUS_PARSE = 7,
  MML_STATUS_IO = 8,
  MML_STATUS_DUPLICATE_VALUE = 9,
  /**
   * A Rust panic was caught at the boundary.
   */
  MML_STATUS_INTERNAL = 10,
} MmlStatus;

/**
 * Proposing side for deferred acceptance.
 */
typedef enum MmlSide {
  MML_SIDE_MEN = 0,
  MML_SIDE_WOMEN = 1,
} MmlSide;

/**
 * A balanced square market.
 */
typedef struct MmlBalanced MmlBalanced;

/**
 * A market in canonical (row-stochastic) form.
 */
typedef struct MmlMarket MmlMarket;

/**
 * A possibly partial matching.
 */
typedef struct MmlMatching MmlMatching;

/**
 * A latent-value draw `(X, Y)`.
 */
typedef struct MmlValues MmlValues;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread. The pointer stays valid
 * until the next failing call on the same thread. Empty if nothing failed.
 */
const char *mml_last_error_message(void);

/**
 * Builds a market from positive raw scores: `a_raw` is `n_men x n_women`,
 * `b_raw` is `n_women x n_men`. Rows are normalized.
 *
 * # Safety
 * `a_raw` and `b_raw` must point to `n_men * n_women` doubles; `out` must
 * be a valid pointer.
 */
enum MmlStatus mml_market_from_raw(size_t n_men,
                                   size_t n_women,
                                   const double *a_raw,
                                   const double *b_raw,
                                   struct MmlMarket **out_market);

/**
 * The `n_men x n_women` market where every score is equal.
 *
 * # Safety
 * `out_market` must be a valid pointer.
 */
enum MmlStatus mml_market_uniform(size_t n_men, size_t n_women, struct MmlMarket **out_market);

/**
 * Random square market with raw scores log-uniform on `[1/c, c]`.
 *
 * # Safety
 * `out_market` must be a valid pointer.
 */
enum MmlStatus mml_market_random_cbounded(size_t n,
                                          double c,
                                          uint64_t seed,
                                          struct MmlMarket **out_market);

/**
 * Reads a market file in the text format written by the `mml` tools.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out_market` a valid pointer.
 */
enum MmlStatus mml_market_read(const char *path, struct MmlMarket **out_market);

/**
 * # Safety
 * `market` must come from this library or be null.
 */
void mml_market_free(struct MmlMarket *market);

/**
 * # Safety
 * All pointers must be valid.
 */
enum MmlStatus mml_market_dims(const struct MmlMarket *market, size_t *n_men, size_t *n_women);

/**
 * Sinkhorn balancing of a square market to `tol` within `max_iters`.
 *
 * # Safety
 * All pointers must be valid.
 */
enum MmlStatus mml_balance(const struct MmlMarket *market,
                           double tol,
                           size_t max_iters,
                           struct MmlBalanced **out_balanced);

/**
 * # Safety
 * `balanced` must come from this library or be null.
 */
void mml_balanced_free(struct MmlBalanced *balanced);

/**
 * Market size, or 0 for a null handle.
 *
 * # Safety
 * `balanced` must be valid or null.
 */
size_t mml_balanced_n(const struct MmlBalanced *balanced);

/**
 * Contiguity constant `C` and the final Sinkhorn residual.
 *
 * # Safety
 * All pointers must be valid.
 */
enum MmlStatus mml_balanced_stats(const struct MmlBalanced *balanced,
                                  double *contiguity,
                                  double *residual);

/**
 * Copies the men's fitness `phi` and women's fitness `psi` (length `n`
 * each) into the caller's buffers.
 *
 * # Safety
 * `phi` and `psi` must hold `len` doubles.
 */
enum MmlStatus mml_balanced_fitness(const struct MmlBalanced *balanced,
                                    double *phi,
                                    double *psi,
                                    size_t len);

/**
 * Copies the bistochastic mutual matrix `M` (row-major, `n * n`).
 *
 * # Safety
 * `m` must hold `len` doubles.
 */
enum MmlStatus mml_balanced_mutual(const struct MmlBalanced *balanced, double *m, size_t len);

/**
 * Draws latent values `X_ij ~ Exp(A_ij)`, `Y_ji ~ Exp(B_ji)`.
 *
 * # Safety
 * All pointers must be valid.
 */
enum MmlStatus mml_sample_latent(const struct MmlBalanced *balanced,
                                 uint64_t seed,
                                 struct MmlValues **out_values);

/**
 * # Safety
 * `values` must come from this library or be null.
 */
void mml_values_free(struct MmlValues *values);

/**
 * Copies the men's values `X` (`n_men x n_women`) and the women's values
 * `Y` (`n_women x n_men`), row-major.
 *
 * # Safety
 * `x` and `y` must hold `len` doubles each.
 */
enum MmlStatus mml_values_copy(const struct MmlValues *values, double *x, double *y, size_t len);

/**
 * Deferred acceptance on the preferences induced by `values`. The number
 * of proposals is written to `proposals` when it is not null.
 *
 * # Safety
 * `values` and `out_matching` must be valid; `proposals` may be null.
 */
enum MmlStatus mml_deferred_acceptance(const struct MmlValues *values,
                                       enum MmlSide side,
                                       struct MmlMatching **out_matching,
                                       uint64_t *proposals);

/**
 * A perfect matching of a square market: man `i` gets woman `partner[i]`.
 *
 * # Safety
 * `partner` must hold `n` entries; `out_matching` must be valid.
 */
enum MmlStatus mml_matching_perfect(const size_t *partner,
                                    size_t n,
                                    struct MmlMatching **out_matching);

/**
 * # Safety
 * `matching` must come from this library or be null.
 */
void mml_matching_free(struct MmlMatching *matching);

/**
 * Writes each man's partner, or -1 when unmatched, into `partner`.
 *
 * # Safety
 * `partner` must hold `len` entries.
 */
enum MmlStatus mml_matching_partners(const struct MmlMatching *matching,
                                     int64_t *partner,
                                     size_t len);

/**
 * Whether `matching` has no blocking pair under `values`.
 *
 * # Safety
 * All pointers must be valid.
 */
enum MmlStatus mml_is_stable(const struct MmlMatching *matching,
                             const struct MmlValues *values,
                             bool *stable);

/**
 * Number of stable matchings, by enumeration (at most 10 agents a side).
 *
 * # Safety
 * All pointers must be valid.
 */
enum MmlStatus mml_count_stable(const struct MmlValues *values, size_t *count);

/**
 * Sup distance between the empirical CDF of `samples` and `Exp(lambda)`.
 *
 * # Safety
 * `samples` must hold `n` doubles; `distance` must be valid.
 */
enum MmlStatus mml_ks_distance_to_exp(const double *samples,
                                      size_t n,
                                      double lambda,
                                      double *distance);

/**
 * Rate minimizing the KS distance, and that distance.
 *
 * # Safety
 * `samples` must hold `n` doubles; the outputs must be valid.
 */
enum MmlStatus mml_best_fit_exponential(const double *samples,
                                        size_t n,
                                        double *lambda,
                                        double *distance);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MML_H */
