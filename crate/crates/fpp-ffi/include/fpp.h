#ifndef FPP_H
#define FPP_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FppRegime {
  FPP_REGIME_EXPLOSIVE = 0,
  FPP_REGIME_POLYLOG = 1,
  FPP_REGIME_POLYNOMIAL = 2,
  FPP_REGIME_LINEAR = 3,
} FppRegime;

typedef enum FppStatus {
  FPP_STATUS_OK = 0,
  FPP_STATUS_NULL_POINTER = 1,
  FPP_STATUS_INVALID_ARGUMENT = 2,
  FPP_STATUS_OUT_OF_RANGE = 3,
  FPP_STATUS_BUFFER_TOO_SMALL = 4,
  FPP_STATUS_IO = 5,
  FPP_STATUS_PANIC = 6,
} FppStatus;

/**
 * Opaque graph with costs for its current `mu`.
 */
typedef struct FppGraph FppGraph;

/**
 * Model parameters. `alpha` or `beta` may be infinite (threshold kernel,
 * constant `L`). A finite `beta` gives `L` with `P(L <= t) = t^beta` on `[0, 1]`.
 */
typedef struct FppModel {
  uint32_t d;
  double tau;
  double alpha;
  double beta;
  double mu;
  /**
   * Nonzero: integer lattice vertices; zero: uniform (Poisson) points.
   */
  uint8_t lattice;
  /**
   * Nonzero: torus metric; zero: Euclidean.
   */
  uint8_t torus;
} FppModel;

/**
 * A phase; `lower == upper` except exactly on a threshold.
 */
typedef struct FppPhase {
  enum FppRegime lower;
  enum FppRegime upper;
} FppPhase;

typedef struct FppThresholds {
  double mu_expl;
  double mu_log;
  double mu_pol;
} FppThresholds;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message (NUL-terminated, truncated
 * to fit) into `buf` and returns the full message length in bytes.
 *
 * # Safety
 * `buf` must be valid for `len` bytes or null.
 */
size_t fpp_last_error(char *buf, size_t len);

/**
 * Phase of `model` in the phase map.
 *
 * # Safety
 * `model` and `out` must be valid pointers.
 */
enum FppStatus fpp_classify_phase(const struct FppModel *model, struct FppPhase *out);

/**
 * Thresholds `mu_expl`, `mu_log`, `mu_pol` (`mu` is ignored).
 *
 * # Safety
 * `model` and `out` must be valid pointers.
 */
enum FppStatus fpp_thresholds(const struct FppModel *model, struct FppThresholds *out);

/**
 * Samples a realization on `[0, side)^d` and stores a new handle in `*out`.
 *
 * # Safety
 * `model` and `out` must be valid pointers.
 */
enum FppStatus fpp_graph_sample(const struct FppModel *model,
                                double side,
                                uint64_t seed,
                                struct FppGraph **out);

/**
 * Reads a graph file written by `fpp gen` or `fpp_graph_save`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum FppStatus fpp_graph_load(const char *path, struct FppGraph **out);

/**
 * # Safety
 * `g` must be a live handle and `path` a NUL-terminated string.
 */
enum FppStatus fpp_graph_save(const struct FppGraph *g, const char *path);

/**
 * Releases a handle; null is ignored.
 *
 * # Safety
 * `g` must come from this library and not be used afterwards.
 */
void fpp_graph_free(struct FppGraph *g);

/**
 * # Safety
 * `g` must be a live handle or null.
 */
size_t fpp_graph_vertex_count(const struct FppGraph *g);

/**
 * # Safety
 * `g` must be a live handle or null.
 */
size_t fpp_graph_edge_count(const struct FppGraph *g);

/**
 * Weight of vertex `v`.
 *
 * # Safety
 * `g` must be a live handle and `out` a valid pointer.
 */
enum FppStatus fpp_graph_weight(const struct FppGraph *g, size_t v, double *out);

/**
 * Recomputes edge costs for a new penalty exponent; edges and `L` are kept.
 *
 * # Safety
 * `g` must be a live handle.
 */
enum FppStatus fpp_graph_set_mu(struct FppGraph *g, double mu);

/**
 * Cost distances from `src` to every vertex, written to `out[0..n]`;
 * unreachable vertices get `+inf`. `len` must be at least the vertex count.
 *
 * # Safety
 * `g` must be a live handle and `out` valid for `len` doubles.
 */
enum FppStatus fpp_cost_distance(const struct FppGraph *g, size_t src, double *out, size_t len);

/**
 * Hop distances from `src`; unreachable vertices get `UINT32_MAX`.
 *
 * # Safety
 * `g` must be a live handle and `out` valid for `len` entries.
 */
enum FppStatus fpp_hop_distance(const struct FppGraph *g, size_t src, uint32_t *out, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FPP_H */
