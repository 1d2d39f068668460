#ifndef CLOSNET_H
#define CLOSNET_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Inter-stage activation codes accepted by [`closnet_layer_new`].
 */
typedef enum ClosnetActivation {
  CLOSNET_ACTIVATION_NONE = 0,
  CLOSNET_ACTIVATION_RELU = 1,
} ClosnetActivation;

/**
 * Result of every fallible call.
 */
typedef enum ClosnetStatus {
  CLOSNET_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  CLOSNET_STATUS_NULL_POINTER = 1,
  /**
   * The Clos 5-tuple failed validation.
   */
  CLOSNET_STATUS_INVALID_SPEC = 2,
  /**
   * An argument was out of range (unknown activation, zero batch, ...).
   */
  CLOSNET_STATUS_INVALID_ARGUMENT = 3,
  /**
   * The spec cannot be mapped onto the requested torus.
   */
  CLOSNET_STATUS_NON_CONFORMING = 4,
  /**
   * Unexpected internal failure, including caught panics.
   */
  CLOSNET_STATUS_INTERNAL = 5,
} ClosnetStatus;

/**
 * A Clos layer with `f64` weights.
 */
typedef struct ClosnetLayer ClosnetLayer;

/**
 * A validated Clos spec.
 */
typedef struct ClosnetSpec ClosnetSpec;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or null if none.
 * The pointer stays valid until the next failing call on this thread.
 */
const char *closnet_last_error_message(void);

/**
 * Validates `(inputs, outputs, input_routers, middle_routers,
 * output_routers)` and stores a new handle in `*out`.
 *
 * # Safety
 * `out` must be null or valid for one pointer write.
 */
enum ClosnetStatus closnet_spec_new(size_t inputs,
                                    size_t outputs,
                                    size_t input_routers,
                                    size_t middle_routers,
                                    size_t output_routers,
                                    struct ClosnetSpec **out);

/**
 * Releases a spec handle. Null is ignored.
 *
 * # Safety
 * `spec` must be null or a handle from [`closnet_spec_new`] not yet freed.
 */
void closnet_spec_free(struct ClosnetSpec *spec);

/**
 * Stores the layer's weight count `R_m (I + O + R_i R_o)` in `*out`.
 *
 * # Safety
 * `spec` must be a live handle; `out` must be valid for one write.
 */
enum ClosnetStatus closnet_spec_param_count(const struct ClosnetSpec *spec, size_t *out);

/**
 * Stores the number of distinct paths between any input and output.
 *
 * # Safety
 * `spec` must be a live handle; `out` must be valid for one write.
 */
enum ClosnetStatus closnet_spec_path_diversity(const struct ClosnetSpec *spec, size_t *out);

/**
 * Builds a layer with seeded per-block Glorot weights. `activation` is a
 * [`ClosnetActivation`] code.
 *
 * # Safety
 * `spec` must be a live handle; `out` must be valid for one pointer write.
 */
enum ClosnetStatus closnet_layer_new(const struct ClosnetSpec *spec,
                                     uint64_t seed,
                                     uint32_t activation,
                                     struct ClosnetLayer **out);

/**
 * Releases a layer handle. Null is ignored.
 *
 * # Safety
 * `layer` must be null or a handle from [`closnet_layer_new`] not yet freed.
 */
void closnet_layer_free(struct ClosnetLayer *layer);

/**
 * Forward pass over `batch` row-major samples: reads `batch * inputs`
 * values from `input` and writes `batch * outputs` values to `output`.
 *
 * # Safety
 * `layer` must be a live handle and both buffers must hold the stated
 * number of `double`s.
 */
enum ClosnetStatus closnet_layer_forward(const struct ClosnetLayer *layer,
                                         const double *input,
                                         size_t batch,
                                         double *output);

/**
 * Runs one sample through the layer mapped onto a `rows x cols` torus
 * with unit hop and MAC costs. Writes `outputs` values to `output` and,
 * when `cycles` is non-null, the simulated cycle count to `*cycles`.
 *
 * # Safety
 * `layer` must be a live handle; `input` and `output` must hold `inputs`
 * and `outputs` `double`s; `cycles` must be null or valid for one write.
 */
enum ClosnetStatus closnet_simulate_inference(const struct ClosnetLayer *layer,
                                              size_t rows,
                                              size_t cols,
                                              const double *input,
                                              double *output,
                                              uint64_t *cycles);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CLOSNET_H */
