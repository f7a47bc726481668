//! Communication-set selection.
//!
//! Picking the k largest-magnitude residual entries is the expensive step of
//! the compression pipeline, so alongside the exact selector this module has
//! two approximations built entirely from reduction-style passes (mean, max,
//! count, compact):
//!
//! * trimmed selection: statistically prune the tensor with a descending
//!   threshold, then select exactly k among the few survivors;
//! * threshold binary search: bisect on a threshold until the number of
//!   surviving elements lands in `(k, 2k)`, accepting a slightly larger set
//!   instead of an exact one;
//! * a sampled variant that reuses the found threshold for several steps,
//!   paying the search only every `sample_interval` calls.
//!
//! All selectors order ties by lower index first so results are fully
//! deterministic and oracle-comparable.

use crate::tensor::DenseTensor;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SelectionError {
    #[error("k = {k} out of range for tensor of length {len}")]
    KOutOfRange { k: usize, len: usize },
    #[error("selection requires a non-empty tensor")]
    Empty,
}

/// Output of every selector: element indices in strictly increasing order,
/// the matching source values, the threshold that produced the set, and
/// whether the set is exactly the top k by magnitude.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub indices: Vec<u32>,
    pub values: Vec<f32>,
    pub threshold: f32,
    pub exact: bool,
}

impl SelectionResult {
    pub fn count(&self) -> usize {
        self.indices.len()
    }
}

/// Tuning knobs shared by the selectors.
#[derive(Debug, Clone, Copy)]
pub struct SelectorConfig {
    /// Fraction of elements to keep, in (0, 1].
    pub ratio: f64,
    /// Step by which the trimmed selector lowers its threshold ratio.
    pub epsilon_trim: f32,
    /// Binary-search termination width on the threshold ratio.
    pub epsilon_bs: f32,
    /// Reuse period of the sampled selector: a full search runs every
    /// `sample_interval` calls, the cached threshold is reused in between.
    pub sample_interval: usize,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        SelectorConfig {
            ratio: 0.001,
            epsilon_trim: 0.2,
            epsilon_bs: 0.01,
            sample_interval: 5,
        }
    }
}

/// Per-tensor state of the sampled selector.
#[derive(Debug, Clone, Default)]
pub struct ThresholdCache {
    threshold: Option<f32>,
    calls: u64,
}

impl ThresholdCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cached_threshold(&self) -> Option<f32> {
        self.threshold
    }
}

/// Number of elements kept for a tensor of `len` elements at compression
/// ratio `ratio`: never zero, so every tensor makes progress.
pub fn k_for_ratio(len: usize, ratio: f64) -> usize {
    ((len as f64 * ratio).floor() as usize).clamp(1, len.max(1))
}

/// Mean and max of absolute values, one pass, f64 accumulation.
pub fn stats_mean_max_abs(x: &DenseTensor) -> Result<(f32, f32), SelectionError> {
    if x.is_empty() {
        return Err(SelectionError::Empty);
    }
    let mut sum = 0.0f64;
    let mut max = 0.0f32;
    for &v in x.as_slice() {
        let a = v.abs();
        sum += a as f64;
        if a > max {
            max = a;
        }
    }
    Ok(((sum / x.len() as f64) as f32, max))
}

/// Number of elements with `|x[i]| > threshold` (strict).
pub fn count_above(x: &DenseTensor, threshold: f32) -> usize {
    x.as_slice().iter().filter(|v| v.abs() > threshold).count()
}

/// Stream compaction: indices and values of all elements with
/// `|x[i]| > threshold`, in increasing index order.
pub fn compact_above(x: &DenseTensor, threshold: f32) -> SelectionResult {
    let mut indices = Vec::new();
    let mut values = Vec::new();
    for (i, &v) in x.as_slice().iter().enumerate() {
        if v.abs() > threshold {
            indices.push(i as u32);
            values.push(v);
        }
    }
    SelectionResult {
        indices,
        values,
        threshold,
        exact: false,
    }
}

fn check_k(k: usize, len: usize) -> Result<(), SelectionError> {
    if k == 0 || k > len {
        return Err(SelectionError::KOutOfRange { k, len });
    }
    Ok(())
}

/// Descending-magnitude order with ties broken by lower index.
fn magnitude_order(a: &(u32, f32), b: &(u32, f32)) -> std::cmp::Ordering {
    b.1.abs().total_cmp(&a.1.abs()).then_with(|| a.0.cmp(&b.0))
}

/// Quickselect-based exact selection over an (index, value) list.
/// Returns the k entries with the largest magnitudes, indices ascending.
fn exact_top_k_entries(mut entries: Vec<(u32, f32)>, k: usize) -> SelectionResult {
    debug_assert!(k >= 1 && k <= entries.len());
    if k < entries.len() {
        entries.select_nth_unstable_by(k - 1, magnitude_order);
        entries.truncate(k);
    }
    // The k-th largest magnitude doubles as the reported threshold; kept
    // elements satisfy |v| >= threshold.
    let threshold = entries
        .iter()
        .map(|e| e.1.abs())
        .fold(f32::INFINITY, f32::min);
    entries.sort_unstable_by_key(|e| e.0);
    SelectionResult {
        indices: entries.iter().map(|e| e.0).collect(),
        values: entries.iter().map(|e| e.1).collect(),
        threshold,
        exact: true,
    }
}

/// Exact top-k by absolute value (the quickselect baseline the
/// approximations are judged against). Ties go to the lower index.
pub fn exact_top_k(x: &DenseTensor, k: usize) -> Result<SelectionResult, SelectionError> {
    check_k(k, x.len())?;
    let entries: Vec<(u32, f32)> = x
        .as_slice()
        .iter()
        .enumerate()
        .map(|(i, &v)| (i as u32, v))
        .collect();
    Ok(exact_top_k_entries(entries, k))
}

/// Trimmed selection: returns exactly the top-k element set using only
/// mean/max/count/compact passes plus a small exact selection among the
/// survivors. Also reports the number of full-tensor passes it made.
pub fn trimmed_top_k_counted(
    x: &DenseTensor,
    k: usize,
    cfg: &SelectorConfig,
) -> Result<(SelectionResult, usize), SelectionError> {
    check_k(k, x.len())?;
    let mut passes = 1usize;
    let (mean, max) = stats_mean_max_abs(x)?;
    if mean == max {
        // Degenerate: all magnitudes equal, a threshold cannot separate them.
        return Ok((exact_top_k(x, k)?, passes));
    }

    let eps = cfg.epsilon_trim;
    let mut ratio = 1.0 - eps;
    let mut threshold = mean + ratio * (max - mean);
    passes += 1;
    let mut survivors = count_above(x, threshold);
    while survivors < k {
        ratio -= eps;
        if ratio < 0.0 {
            // Even threshold == mean keeps fewer than k elements; the
            // distribution is too flat for trimming to help.
            return Ok((exact_top_k(x, k)?, passes));
        }
        threshold = mean + ratio * (max - mean);
        passes += 1;
        survivors = count_above(x, threshold);
    }

    passes += 1;
    let compacted = compact_above(x, threshold);
    let entries: Vec<(u32, f32)> = compacted
        .indices
        .into_iter()
        .zip(compacted.values)
        .collect();
    Ok((exact_top_k_entries(entries, k), passes))
}

/// Trimmed selection without the pass counter.
pub fn trimmed_top_k(
    x: &DenseTensor,
    k: usize,
    cfg: &SelectorConfig,
) -> Result<SelectionResult, SelectionError> {
    trimmed_top_k_counted(x, k, cfg).map(|(r, _)| r)
}

/// How a threshold binary search ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BsOutcome {
    /// The survivor count landed strictly inside `(k, 2k)`.
    BrokeInRange,
    /// The ratio interval shrank below epsilon first; the result is
    /// whatever the final (or best covering) threshold yields.
    EpsilonTerminated,
    /// Degenerate input or unreachable k: resolved by exact selection.
    ExactFallback,
}

/// Threshold binary search: bisects on `threshold = mean + ratio*(max-mean)`
/// until the survivor count lands strictly between k and 2k, then compacts.
/// Also reports which way the search terminated.
///
/// The result is approximate (`exact == false` unless the exact fallback
/// fired) but contains the whole strict top-k set whenever the break branch
/// is taken, and never fewer than k elements overall.
pub fn threshold_binary_search_detailed(
    x: &DenseTensor,
    k: usize,
    cfg: &SelectorConfig,
) -> Result<(SelectionResult, BsOutcome), SelectionError> {
    check_k(k, x.len())?;
    let (mean, max) = stats_mean_max_abs(x)?;
    if mean == max {
        // Degenerate: a threshold in [mean, max] cannot separate elements.
        return Ok((exact_top_k(x, k)?, BsOutcome::ExactFallback));
    }

    let mut left = 0.0f32;
    let mut right = 1.0f32;
    let mut threshold = 0.0f32;
    let mut count = usize::MAX;
    // Lowest threshold observed that kept at least k elements; used when
    // the epsilon termination ends below k.
    let mut best_covering: Option<f32> = None;
    let mut broke = false;

    while right - left > cfg.epsilon_bs {
        let ratio = left + (right - left) / 2.0;
        threshold = mean + ratio * (max - mean);
        count = count_above(x, threshold);
        if count >= k {
            best_covering = Some(match best_covering {
                Some(t) => t.min(threshold),
                None => threshold,
            });
        }
        if count > k && 2 * k > count {
            broke = true;
            break;
        } else if 2 * count < k {
            right = ratio;
        } else {
            left = ratio;
        }
    }

    if count == usize::MAX {
        // Loop never ran (epsilon >= 1): evaluate the initial threshold.
        count = count_above(x, threshold);
    }

    if broke {
        return Ok((compact_above(x, threshold), BsOutcome::BrokeInRange));
    }
    if count >= k {
        return Ok((compact_above(x, threshold), BsOutcome::EpsilonTerminated));
    }
    // Epsilon termination with too few survivors: reuse the widest covering
    // threshold seen, or give up and select exactly.
    match best_covering {
        Some(t) => Ok((compact_above(x, t), BsOutcome::EpsilonTerminated)),
        None => Ok((exact_top_k(x, k)?, BsOutcome::ExactFallback)),
    }
}

/// Threshold binary search without the outcome report.
pub fn threshold_binary_search(
    x: &DenseTensor,
    k: usize,
    cfg: &SelectorConfig,
) -> Result<SelectionResult, SelectionError> {
    threshold_binary_search_detailed(x, k, cfg).map(|(r, _)| r)
}

/// Sampled threshold search: runs the full binary search every
/// `sample_interval` calls (and whenever the cache is empty), otherwise
/// reuses the cached threshold in a single compaction pass.
pub fn sampled_threshold_search(
    x: &DenseTensor,
    k: usize,
    cfg: &SelectorConfig,
    cache: &mut ThresholdCache,
) -> Result<SelectionResult, SelectionError> {
    check_k(k, x.len())?;
    let step = cache.calls;
    cache.calls += 1;
    let interval = cfg.sample_interval.max(1) as u64;
    match cache.threshold {
        Some(threshold) if !step.is_multiple_of(interval) => Ok(compact_above(x, threshold)),
        _ => {
            let result = threshold_binary_search(x, k, cfg)?;
            cache.threshold = Some(result.threshold);
            Ok(result)
        }
    }
}
