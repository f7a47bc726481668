#ifndef RGC_H
#define RGC_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>





// Bandwidth accounting of the cost model formulas.
typedef enum RgcBandwidthMode {
  // Literal element counts.
  RGC_BANDWIDTH_MODE_ELEMENTS = 0,
  // 8 bytes per element (index + value).
  RGC_BANDWIDTH_MODE_BYTES = 1,
  // 4 bytes per index plus one shared mean.
  RGC_BANDWIDTH_MODE_BYTES_QUANTIZED = 2,
} RgcBandwidthMode;

// Status code of every C API call.
typedef enum RgcStatus {
  RGC_STATUS_OK = 0,
  RGC_STATUS_NULL_POINTER = 1,
  RGC_STATUS_INVALID_ARGUMENT = 2,
  RGC_STATUS_BUFFER_TOO_SMALL = 3,
  RGC_STATUS_DECODE_ERROR = 4,
  RGC_STATUS_INTERNAL_ERROR = 5,
} RgcStatus;

// Opaque decoded sparse message.
typedef struct RgcMessage RgcMessage;

// Opaque threshold cache for the sampled selector.
typedef struct RgcThresholdCache RgcThresholdCache;

// Selector tuning knobs, mirrored from the Rust configuration.
typedef struct RgcSelectorConfig {
  // Fraction of elements to keep, in (0, 1].
  double ratio;
  // Threshold-lowering step of the trimmed selector.
  float epsilon_trim;
  // Binary-search termination width.
  float epsilon_bs;
  // Reuse period of the sampled selector.
  uintptr_t sample_interval;
} RgcSelectorConfig;

// Inputs to the synchronization time formulas.
typedef struct RgcCostParams {
  double alpha;
  double beta;
  double gamma1;
  double gamma2;
  double t_select;
  uint64_t p;
  uint64_t m;
  double d;
} RgcCostParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Returns the default selector configuration.
struct RgcSelectorConfig rgc_selector_config_default(void);

// Static description of a status code.
const char *rgc_status_message(enum RgcStatus status);

// Exact top-k by magnitude. `out_indices`/`out_values` must hold `k`
// entries; ties break toward the lower index.
//
// # Safety
// `data` must point to `len` readable floats; out pointers must be valid
// for `k` writes.
enum RgcStatus rgc_top_k_exact(const float *data,
                               uintptr_t len,
                               uintptr_t k,
                               uint32_t *out_indices,
                               float *out_values,
                               uintptr_t *out_count);

// Trimmed top-k: identical element set to the exact selector, computed by
// statistical trimming. Buffers must hold `k` entries.
//
// # Safety
// As `rgc_top_k_exact`.
enum RgcStatus rgc_top_k_trimmed(const float *data,
                                 uintptr_t len,
                                 uintptr_t k,
                                 struct RgcSelectorConfig cfg,
                                 uint32_t *out_indices,
                                 float *out_values,
                                 uintptr_t *out_count);

// Threshold binary search: returns between k and 2k elements on the break
// path, never fewer than k overall. `cap` is the caller buffer capacity;
// on `BufferTooSmall` the required count is in `out_count`.
//
// # Safety
// `data` readable for `len` floats; out buffers writable for `cap` entries.
enum RgcStatus rgc_top_k_threshold_search(const float *data,
                                          uintptr_t len,
                                          uintptr_t k,
                                          struct RgcSelectorConfig cfg,
                                          uint32_t *out_indices,
                                          float *out_values,
                                          uintptr_t cap,
                                          uintptr_t *out_count,
                                          float *out_threshold);

// Allocates a fresh threshold cache. Free with `rgc_threshold_cache_free`.
struct RgcThresholdCache *rgc_threshold_cache_new(void);

// Frees a cache allocated by `rgc_threshold_cache_new`.
//
// # Safety
// `cache` must come from `rgc_threshold_cache_new` and not be used after.
void rgc_threshold_cache_free(struct RgcThresholdCache *cache);

// Sampled threshold search: a full search every `sample_interval` calls on
// this cache, threshold reuse in between.
//
// # Safety
// As `rgc_top_k_threshold_search`; `cache` must be a live cache handle.
enum RgcStatus rgc_top_k_sampled_search(struct RgcThresholdCache *cache,
                                        const float *data,
                                        uintptr_t len,
                                        uintptr_t k,
                                        struct RgcSelectorConfig cfg,
                                        uint32_t *out_indices,
                                        float *out_values,
                                        uintptr_t cap,
                                        uintptr_t *out_count,
                                        float *out_threshold);

// Exact wire size of a frame with `count` elements in the given mode, or
// 0 for an unknown mode.
uintptr_t rgc_frame_len(uintptr_t count, uint8_t mode);

// Encodes a dense-values frame into `out` (capacity `cap` bytes);
// `out_written` receives the frame size.
//
// # Safety
// `indices`/`values` readable for `count` entries; `out` writable for `cap`.
enum RgcStatus rgc_encode_dense(const uint32_t *indices,
                                const float *values,
                                uintptr_t count,
                                uint8_t *out,
                                uintptr_t cap,
                                uintptr_t *out_written);

// Encodes a quantized-mean frame.
//
// # Safety
// As `rgc_encode_dense`.
enum RgcStatus rgc_encode_quantized(const uint32_t *indices,
                                    uintptr_t count,
                                    float mean,
                                    uint8_t *out,
                                    uintptr_t cap,
                                    uintptr_t *out_written);

// Decodes one complete frame into an opaque handle. Free the handle with
// `rgc_message_free`.
//
// # Safety
// `bytes` readable for `len`; `out` writable.
enum RgcStatus rgc_message_decode(const uint8_t *bytes, uintptr_t len, struct RgcMessage **out);

// Frees a message handle.
//
// # Safety
// `msg` must come from `rgc_message_decode` and not be used after.
void rgc_message_free(struct RgcMessage *msg);

// Element count of a decoded message.
//
// # Safety
// `msg` must be a live handle.
uintptr_t rgc_message_count(const struct RgcMessage *msg);

// Mode byte (`RGC_MODE_*`) of a decoded message.
//
// # Safety
// `msg` must be a live handle.
uint8_t rgc_message_mode(const struct RgcMessage *msg);

// Borrowed pointer to the sorted indices; valid until the handle is freed.
//
// # Safety
// `msg` must be a live handle.
const uint32_t *rgc_message_indices(const struct RgcMessage *msg);

// Borrowed pointer to the payload: `count` floats for dense messages, a
// single float for quantized ones. `out_len` receives the payload length.
//
// # Safety
// `msg` must be a live handle; `out_len` writable.
const float *rgc_message_payload(const struct RgcMessage *msg, uintptr_t *out_len);

// Scatter-adds a decoded message into `dst`:
// `dst[idx[j]] += scale * value_j`.
//
// # Safety
// `msg` live; `dst` writable for `dst_len` floats.
enum RgcStatus rgc_message_apply(const struct RgcMessage *msg,
                                 float *dst,
                                 uintptr_t dst_len,
                                 float scale);

// Predicted time of the allgather-based sparse allreduce.
double rgc_cost_sparse(struct RgcCostParams params, enum RgcBandwidthMode mode);

// Predicted time of the dense allreduce.
double rgc_cost_dense(struct RgcCostParams params, enum RgcBandwidthMode mode);

// Largest power-of-two p (up to 65536) where the sparse path is strictly
// faster, or 0 when it never is.
uint64_t rgc_cost_crossover_p(struct RgcCostParams params, enum RgcBandwidthMode mode);

// Sparse-to-dense bandwidth ratio `(p - 1) * D`.
double rgc_cost_bandwidth_ratio(uint64_t p, double d);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RGC_H */
