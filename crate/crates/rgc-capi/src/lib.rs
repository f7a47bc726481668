//! C ABI for the compression primitives: top-k selection, the sparse
//! message codec, and the synchronization cost model.
//!
//! Conventions:
//! * every function returns an `RgcStatus`; results travel through out
//!   pointers supplied by the caller;
//! * variable-length results take a caller buffer plus capacity and report
//!   the required size through `out_count` when the buffer is too small;
//! * decoded messages are opaque handles freed with `rgc_message_free`;
//!   the sampled selector's threshold cache is an opaque handle freed with
//!   `rgc_threshold_cache_free`;
//! * no function panics across the boundary.
//!
//! The matching header `include/rgc.h` is generated by cbindgen at build
//! time.

use rgc::codec::{self, SparseMessage, SparsePayload};
use rgc::cost::{self, BandwidthMode, CostParams};
use rgc::selection::{self, SelectionResult, SelectorConfig, ThresholdCache};
use rgc::tensor::DenseTensor;
use std::os::raw::c_char;

/// Status code of every C API call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RgcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    BufferTooSmall = 3,
    DecodeError = 4,
    InternalError = 5,
}

/// Selector tuning knobs, mirrored from the Rust configuration.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RgcSelectorConfig {
    /// Fraction of elements to keep, in (0, 1].
    pub ratio: f64,
    /// Threshold-lowering step of the trimmed selector.
    pub epsilon_trim: f32,
    /// Binary-search termination width.
    pub epsilon_bs: f32,
    /// Reuse period of the sampled selector.
    pub sample_interval: usize,
}

impl RgcSelectorConfig {
    fn to_config(self) -> SelectorConfig {
        SelectorConfig {
            ratio: self.ratio,
            epsilon_trim: self.epsilon_trim,
            epsilon_bs: self.epsilon_bs,
            sample_interval: self.sample_interval,
        }
    }
}

/// Returns the default selector configuration.
#[no_mangle]
pub extern "C" fn rgc_selector_config_default() -> RgcSelectorConfig {
    let cfg = SelectorConfig::default();
    RgcSelectorConfig {
        ratio: cfg.ratio,
        epsilon_trim: cfg.epsilon_trim,
        epsilon_bs: cfg.epsilon_bs,
        sample_interval: cfg.sample_interval,
    }
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn rgc_status_message(status: RgcStatus) -> *const c_char {
    let text: &'static [u8] = match status {
        RgcStatus::Ok => b"ok\0",
        RgcStatus::NullPointer => b"null pointer argument\0",
        RgcStatus::InvalidArgument => b"invalid argument\0",
        RgcStatus::BufferTooSmall => b"output buffer too small\0",
        RgcStatus::DecodeError => b"malformed frame\0",
        RgcStatus::InternalError => b"internal error\0",
    };
    text.as_ptr() as *const c_char
}

fn catch<F: FnOnce() -> RgcStatus>(f: F) -> RgcStatus {
    std::panic::catch_unwind(std::panic::AssertUnwindSafe(f)).unwrap_or(RgcStatus::InternalError)
}

/// Copies a selection into caller buffers of capacity `cap`; `out_count`
/// always receives the true count so callers can re-size and retry.
unsafe fn write_selection(
    sel: &SelectionResult,
    out_indices: *mut u32,
    out_values: *mut f32,
    cap: usize,
    out_count: *mut usize,
    out_threshold: *mut f32,
) -> RgcStatus {
    *out_count = sel.count();
    if !out_threshold.is_null() {
        *out_threshold = sel.threshold;
    }
    if sel.count() > cap {
        return RgcStatus::BufferTooSmall;
    }
    std::ptr::copy_nonoverlapping(sel.indices.as_ptr(), out_indices, sel.count());
    std::ptr::copy_nonoverlapping(sel.values.as_ptr(), out_values, sel.count());
    RgcStatus::Ok
}

/// Exact top-k by magnitude. `out_indices`/`out_values` must hold `k`
/// entries; ties break toward the lower index.
///
/// # Safety
/// `data` must point to `len` readable floats; out pointers must be valid
/// for `k` writes.
#[no_mangle]
pub unsafe extern "C" fn rgc_top_k_exact(
    data: *const f32,
    len: usize,
    k: usize,
    out_indices: *mut u32,
    out_values: *mut f32,
    out_count: *mut usize,
) -> RgcStatus {
    if data.is_null() || out_indices.is_null() || out_values.is_null() || out_count.is_null() {
        return RgcStatus::NullPointer;
    }
    catch(|| {
        let slice = std::slice::from_raw_parts(data, len);
        let tensor = DenseTensor::from_vec(slice.to_vec());
        match selection::exact_top_k(&tensor, k) {
            Ok(sel) => write_selection(
                &sel,
                out_indices,
                out_values,
                k,
                out_count,
                std::ptr::null_mut(),
            ),
            Err(_) => RgcStatus::InvalidArgument,
        }
    })
}

/// Trimmed top-k: identical element set to the exact selector, computed by
/// statistical trimming. Buffers must hold `k` entries.
///
/// # Safety
/// As `rgc_top_k_exact`.
#[no_mangle]
pub unsafe extern "C" fn rgc_top_k_trimmed(
    data: *const f32,
    len: usize,
    k: usize,
    cfg: RgcSelectorConfig,
    out_indices: *mut u32,
    out_values: *mut f32,
    out_count: *mut usize,
) -> RgcStatus {
    if data.is_null() || out_indices.is_null() || out_values.is_null() || out_count.is_null() {
        return RgcStatus::NullPointer;
    }
    catch(|| {
        let slice = std::slice::from_raw_parts(data, len);
        let tensor = DenseTensor::from_vec(slice.to_vec());
        match selection::trimmed_top_k(&tensor, k, &cfg.to_config()) {
            Ok(sel) => write_selection(
                &sel,
                out_indices,
                out_values,
                k,
                out_count,
                std::ptr::null_mut(),
            ),
            Err(_) => RgcStatus::InvalidArgument,
        }
    })
}

/// Threshold binary search: returns between k and 2k elements on the break
/// path, never fewer than k overall. `cap` is the caller buffer capacity;
/// on `BufferTooSmall` the required count is in `out_count`.
///
/// # Safety
/// `data` readable for `len` floats; out buffers writable for `cap` entries.
#[no_mangle]
pub unsafe extern "C" fn rgc_top_k_threshold_search(
    data: *const f32,
    len: usize,
    k: usize,
    cfg: RgcSelectorConfig,
    out_indices: *mut u32,
    out_values: *mut f32,
    cap: usize,
    out_count: *mut usize,
    out_threshold: *mut f32,
) -> RgcStatus {
    if data.is_null() || out_indices.is_null() || out_values.is_null() || out_count.is_null() {
        return RgcStatus::NullPointer;
    }
    catch(|| {
        let slice = std::slice::from_raw_parts(data, len);
        let tensor = DenseTensor::from_vec(slice.to_vec());
        match selection::threshold_binary_search(&tensor, k, &cfg.to_config()) {
            Ok(sel) => {
                write_selection(&sel, out_indices, out_values, cap, out_count, out_threshold)
            }
            Err(_) => RgcStatus::InvalidArgument,
        }
    })
}

/// Opaque threshold cache for the sampled selector.
pub struct RgcThresholdCache {
    inner: ThresholdCache,
}

/// Allocates a fresh threshold cache. Free with `rgc_threshold_cache_free`.
#[no_mangle]
pub extern "C" fn rgc_threshold_cache_new() -> *mut RgcThresholdCache {
    Box::into_raw(Box::new(RgcThresholdCache {
        inner: ThresholdCache::new(),
    }))
}

/// Frees a cache allocated by `rgc_threshold_cache_new`.
///
/// # Safety
/// `cache` must come from `rgc_threshold_cache_new` and not be used after.
#[no_mangle]
pub unsafe extern "C" fn rgc_threshold_cache_free(cache: *mut RgcThresholdCache) {
    if !cache.is_null() {
        drop(Box::from_raw(cache));
    }
}

/// Sampled threshold search: a full search every `sample_interval` calls on
/// this cache, threshold reuse in between.
///
/// # Safety
/// As `rgc_top_k_threshold_search`; `cache` must be a live cache handle.
#[no_mangle]
pub unsafe extern "C" fn rgc_top_k_sampled_search(
    cache: *mut RgcThresholdCache,
    data: *const f32,
    len: usize,
    k: usize,
    cfg: RgcSelectorConfig,
    out_indices: *mut u32,
    out_values: *mut f32,
    cap: usize,
    out_count: *mut usize,
    out_threshold: *mut f32,
) -> RgcStatus {
    if cache.is_null()
        || data.is_null()
        || out_indices.is_null()
        || out_values.is_null()
        || out_count.is_null()
    {
        return RgcStatus::NullPointer;
    }
    catch(|| {
        let slice = std::slice::from_raw_parts(data, len);
        let tensor = DenseTensor::from_vec(slice.to_vec());
        let cache = &mut (*cache).inner;
        match selection::sampled_threshold_search(&tensor, k, &cfg.to_config(), cache) {
            Ok(sel) => {
                write_selection(&sel, out_indices, out_values, cap, out_count, out_threshold)
            }
            Err(_) => RgcStatus::InvalidArgument,
        }
    })
}

// ---------------------------------------------------------------------------
// Wire format
// ---------------------------------------------------------------------------

/// Payload kind of a decoded message: per-element values.
pub const RGC_MODE_DENSE_VALUES: u8 = codec::MODE_DENSE_VALUES;
/// Payload kind of a decoded message: one shared quantized mean.
pub const RGC_MODE_QUANT_MEAN: u8 = codec::MODE_QUANT_MEAN;

/// Opaque decoded sparse message.
pub struct RgcMessage {
    inner: SparseMessage,
    /// Dense payload or the mean repeated once; keeps a stable pointer for
    /// `rgc_message_payload`.
    payload: Vec<f32>,
}

/// Exact wire size of a frame with `count` elements in the given mode, or
/// 0 for an unknown mode.
#[no_mangle]
pub extern "C" fn rgc_frame_len(count: usize, mode: u8) -> usize {
    codec::frame_len(count, mode).unwrap_or(0)
}

/// Encodes a dense-values frame into `out` (capacity `cap` bytes);
/// `out_written` receives the frame size.
///
/// # Safety
/// `indices`/`values` readable for `count` entries; `out` writable for `cap`.
#[no_mangle]
pub unsafe extern "C" fn rgc_encode_dense(
    indices: *const u32,
    values: *const f32,
    count: usize,
    out: *mut u8,
    cap: usize,
    out_written: *mut usize,
) -> RgcStatus {
    if (count > 0 && (indices.is_null() || values.is_null()))
        || out.is_null()
        || out_written.is_null()
    {
        return RgcStatus::NullPointer;
    }
    catch(|| {
        let idx = if count == 0 {
            Vec::new()
        } else {
            std::slice::from_raw_parts(indices, count).to_vec()
        };
        let vals = if count == 0 {
            Vec::new()
        } else {
            std::slice::from_raw_parts(values, count).to_vec()
        };
        let msg = match SparseMessage::dense(idx, vals) {
            Ok(m) => m,
            Err(_) => return RgcStatus::InvalidArgument,
        };
        let bytes = codec::encode(&msg);
        *out_written = bytes.len();
        if bytes.len() > cap {
            return RgcStatus::BufferTooSmall;
        }
        std::ptr::copy_nonoverlapping(bytes.as_ptr(), out, bytes.len());
        RgcStatus::Ok
    })
}

/// Encodes a quantized-mean frame.
///
/// # Safety
/// As `rgc_encode_dense`.
#[no_mangle]
pub unsafe extern "C" fn rgc_encode_quantized(
    indices: *const u32,
    count: usize,
    mean: f32,
    out: *mut u8,
    cap: usize,
    out_written: *mut usize,
) -> RgcStatus {
    if (count > 0 && indices.is_null()) || out.is_null() || out_written.is_null() {
        return RgcStatus::NullPointer;
    }
    catch(|| {
        let idx = if count == 0 {
            Vec::new()
        } else {
            std::slice::from_raw_parts(indices, count).to_vec()
        };
        let msg = match SparseMessage::quantized(idx, mean) {
            Ok(m) => m,
            Err(_) => return RgcStatus::InvalidArgument,
        };
        let bytes = codec::encode(&msg);
        *out_written = bytes.len();
        if bytes.len() > cap {
            return RgcStatus::BufferTooSmall;
        }
        std::ptr::copy_nonoverlapping(bytes.as_ptr(), out, bytes.len());
        RgcStatus::Ok
    })
}

/// Decodes one complete frame into an opaque handle. Free the handle with
/// `rgc_message_free`.
///
/// # Safety
/// `bytes` readable for `len`; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rgc_message_decode(
    bytes: *const u8,
    len: usize,
    out: *mut *mut RgcMessage,
) -> RgcStatus {
    if bytes.is_null() || out.is_null() {
        return RgcStatus::NullPointer;
    }
    catch(|| {
        let slice = std::slice::from_raw_parts(bytes, len);
        match codec::decode(slice) {
            Ok(inner) => {
                let payload = match inner.payload() {
                    SparsePayload::Dense(values) => values.clone(),
                    SparsePayload::QuantMean(mean) => vec![*mean],
                };
                *out = Box::into_raw(Box::new(RgcMessage { inner, payload }));
                RgcStatus::Ok
            }
            Err(_) => RgcStatus::DecodeError,
        }
    })
}

/// Frees a message handle.
///
/// # Safety
/// `msg` must come from `rgc_message_decode` and not be used after.
#[no_mangle]
pub unsafe extern "C" fn rgc_message_free(msg: *mut RgcMessage) {
    if !msg.is_null() {
        drop(Box::from_raw(msg));
    }
}

/// Element count of a decoded message.
///
/// # Safety
/// `msg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rgc_message_count(msg: *const RgcMessage) -> usize {
    if msg.is_null() {
        return 0;
    }
    (*msg).inner.count()
}

/// Mode byte (`RGC_MODE_*`) of a decoded message.
///
/// # Safety
/// `msg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rgc_message_mode(msg: *const RgcMessage) -> u8 {
    if msg.is_null() {
        return u8::MAX;
    }
    (*msg).inner.mode()
}

/// Borrowed pointer to the sorted indices; valid until the handle is freed.
///
/// # Safety
/// `msg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rgc_message_indices(msg: *const RgcMessage) -> *const u32 {
    if msg.is_null() {
        return std::ptr::null();
    }
    (*msg).inner.indices().as_ptr()
}

/// Borrowed pointer to the payload: `count` floats for dense messages, a
/// single float for quantized ones. `out_len` receives the payload length.
///
/// # Safety
/// `msg` must be a live handle; `out_len` writable.
#[no_mangle]
pub unsafe extern "C" fn rgc_message_payload(
    msg: *const RgcMessage,
    out_len: *mut usize,
) -> *const f32 {
    if msg.is_null() || out_len.is_null() {
        return std::ptr::null();
    }
    *out_len = (*msg).payload.len();
    (*msg).payload.as_ptr()
}

/// Scatter-adds a decoded message into `dst`:
/// `dst[idx[j]] += scale * value_j`.
///
/// # Safety
/// `msg` live; `dst` writable for `dst_len` floats.
#[no_mangle]
pub unsafe extern "C" fn rgc_message_apply(
    msg: *const RgcMessage,
    dst: *mut f32,
    dst_len: usize,
    scale: f32,
) -> RgcStatus {
    if msg.is_null() || dst.is_null() {
        return RgcStatus::NullPointer;
    }
    catch(|| {
        let slice = std::slice::from_raw_parts_mut(dst, dst_len);
        let mut tensor = DenseTensor::from_vec(slice.to_vec());
        match codec::decompress_apply(&mut tensor, &(*msg).inner, scale) {
            Ok(()) => {
                std::ptr::copy_nonoverlapping(tensor.as_slice().as_ptr(), dst, dst_len);
                RgcStatus::Ok
            }
            Err(_) => RgcStatus::InvalidArgument,
        }
    })
}

// ---------------------------------------------------------------------------
// Cost model
// ---------------------------------------------------------------------------

/// Bandwidth accounting of the cost model formulas.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RgcBandwidthMode {
    /// Literal element counts.
    Elements = 0,
    /// 8 bytes per element (index + value).
    Bytes = 1,
    /// 4 bytes per index plus one shared mean.
    BytesQuantized = 2,
}

impl RgcBandwidthMode {
    fn to_mode(self) -> BandwidthMode {
        match self {
            RgcBandwidthMode::Elements => BandwidthMode::Elements,
            RgcBandwidthMode::Bytes => BandwidthMode::Bytes,
            RgcBandwidthMode::BytesQuantized => BandwidthMode::BytesQuantized,
        }
    }
}

/// Inputs to the synchronization time formulas.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RgcCostParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub t_select: f64,
    pub p: u64,
    pub m: u64,
    pub d: f64,
}

impl RgcCostParams {
    fn to_params(self) -> CostParams {
        CostParams {
            alpha: self.alpha,
            beta: self.beta,
            gamma1: self.gamma1,
            gamma2: self.gamma2,
            t_select: self.t_select,
            p: self.p,
            m: self.m,
            d: self.d,
        }
    }
}

/// Predicted time of the allgather-based sparse allreduce.
#[no_mangle]
pub extern "C" fn rgc_cost_sparse(params: RgcCostParams, mode: RgcBandwidthMode) -> f64 {
    cost::t_sparse(&params.to_params(), mode.to_mode())
}

/// Predicted time of the dense allreduce.
#[no_mangle]
pub extern "C" fn rgc_cost_dense(params: RgcCostParams, mode: RgcBandwidthMode) -> f64 {
    cost::t_dense(&params.to_params(), mode.to_mode())
}

/// Largest power-of-two p (up to 65536) where the sparse path is strictly
/// faster, or 0 when it never is.
#[no_mangle]
pub extern "C" fn rgc_cost_crossover_p(params: RgcCostParams, mode: RgcBandwidthMode) -> u64 {
    cost::crossover_p(&params.to_params(), mode.to_mode()).unwrap_or(0)
}

/// Sparse-to-dense bandwidth ratio `(p - 1) * D`.
#[no_mangle]
pub extern "C" fn rgc_cost_bandwidth_ratio(p: u64, d: f64) -> f64 {
    cost::bandwidth_ratio(p, d)
}
