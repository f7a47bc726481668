//! Analytic cost model for sparse vs dense synchronization.
//!
//! Message time is modeled as `alpha + n*beta` (startup latency plus
//! per-byte transfer); `gamma1` is the cost to decompress one collected
//! sparse message of size `M*D`, `gamma2` the cost of one size-M reduction.
//!
//! Sparse allreduce via recursive-doubling allgather:
//!
//! ```text
//! t_sparse = t_select + lg(p)*alpha + (p-1)*(M*D)*beta + p*gamma1
//! ```
//!
//! Dense allreduce via reduce-scatter + allgather:
//!
//! ```text
//! t_dense = 2*lg(p)*alpha + 2*((p-1)/p)*M*beta + ((p-1)/p)*gamma2
//! ```
//!
//! The bandwidth terms count elements in the literal model; the byte model
//! scales them by the actual frame sizes (8 bytes per element for
//! index+value pairs, 4 bytes plus one shared mean when quantized) so it
//! can be reconciled against instrumented transports.

use crate::collective::TransportStats;

/// Inputs to the two formulas. `p` must be a power of two, `d` in (0, 1].
#[derive(Debug, Clone, Copy)]
pub struct CostParams {
    /// Latency (startup time) per message, seconds.
    pub alpha: f64,
    /// Transfer time per byte (byte model) or per element (element model).
    pub beta: f64,
    /// Cost to decompress one collected sparse message.
    pub gamma1: f64,
    /// Cost of one size-M reduction.
    pub gamma2: f64,
    /// Communication-set selection time.
    pub t_select: f64,
    /// Number of ranks.
    pub p: u64,
    /// Elements in the layer.
    pub m: u64,
    /// Compression ratio.
    pub d: f64,
}

/// How the bandwidth terms are weighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandwidthMode {
    /// Literal element counts, exactly as the formulas are written.
    Elements,
    /// Frame bytes: 8 per element (u32 index + f32 value).
    Bytes,
    /// Frame bytes with a quantized payload: 4 per index plus one 4-byte mean.
    BytesQuantized,
}

fn lg(p: u64) -> f64 {
    (p as f64).log2()
}

/// Units transferred per rank contribution under the given mode.
fn sparse_frame_units(params: &CostParams, mode: BandwidthMode) -> f64 {
    let elems = params.m as f64 * params.d;
    match mode {
        BandwidthMode::Elements => elems,
        BandwidthMode::Bytes => 8.0 * elems,
        BandwidthMode::BytesQuantized => 4.0 * elems + 4.0,
    }
}

fn dense_units(params: &CostParams, mode: BandwidthMode) -> f64 {
    let m = params.m as f64;
    match mode {
        BandwidthMode::Elements => m,
        BandwidthMode::Bytes | BandwidthMode::BytesQuantized => 4.0 * m,
    }
}

/// Time of the allgather-based sparse allreduce.
pub fn t_sparse(params: &CostParams, mode: BandwidthMode) -> f64 {
    let p = params.p as f64;
    params.t_select
        + lg(params.p) * params.alpha
        + (p - 1.0) * sparse_frame_units(params, mode) * params.beta
        + p * params.gamma1
}

/// Time of the dense allreduce.
pub fn t_dense(params: &CostParams, mode: BandwidthMode) -> f64 {
    let p = params.p as f64;
    2.0 * lg(params.p) * params.alpha
        + 2.0 * ((p - 1.0) / p) * dense_units(params, mode) * params.beta
        + ((p - 1.0) / p) * params.gamma2
}

/// Ratio of the sparse bandwidth term to a full dense vector transfer:
/// `(p-1)*D`, linear in p. The model-level compression ratio is not the
/// bandwidth compression ratio.
pub fn bandwidth_ratio(p: u64, d: f64) -> f64 {
    (p as f64 - 1.0) * d
}

/// Largest power-of-two p in `{2, 4, ..., 2^16}` for which the sparse path
/// is strictly faster, or `None` if it never is.
pub fn crossover_p(params: &CostParams, mode: BandwidthMode) -> Option<u64> {
    let mut best = None;
    for exp in 1..=16u32 {
        let p = 1u64 << exp;
        let at_p = CostParams { p, ..*params };
        if t_sparse(&at_p, mode) < t_dense(&at_p, mode) {
            best = Some(p);
        }
    }
    best
}

/// Comparison of one measured collective against the model's step and byte
/// counts. Deviations are reported, not asserted; variable frame sizes make
/// the byte prediction a mean-frame estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconcileReport {
    pub steps_measured: u64,
    pub steps_predicted: u64,
    pub bytes_measured: u64,
    pub bytes_predicted: u64,
    pub bytes_deviation_pct: f64,
}

impl std::fmt::Display for ReconcileReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "steps {}/{} predicted, bytes {}/{} predicted ({:+.3}%)",
            self.steps_measured,
            self.steps_predicted,
            self.bytes_measured,
            self.bytes_predicted,
            self.bytes_deviation_pct
        )
    }
}

fn deviation_pct(measured: u64, predicted: u64) -> f64 {
    if predicted == 0 {
        if measured == 0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (measured as f64 - predicted as f64) / predicted as f64 * 100.0
    }
}

/// Reconciles a measured sparse allgather against `lg p` steps and
/// `(p-1) * frame_bytes` per-rank bytes.
pub fn reconcile_allgather(
    stats: &TransportStats,
    p: u64,
    mean_frame_bytes: f64,
) -> ReconcileReport {
    let steps_predicted = lg(p).round() as u64;
    let bytes_predicted = ((p as f64 - 1.0) * mean_frame_bytes).round() as u64;
    ReconcileReport {
        steps_measured: stats.steps,
        steps_predicted,
        bytes_measured: stats.bytes_sent,
        bytes_predicted,
        bytes_deviation_pct: deviation_pct(stats.bytes_sent, bytes_predicted),
    }
}

/// Reconciles a measured dense allreduce against `2 lg p` steps and
/// `2 ((p-1)/p) * 4 * m` per-rank bytes.
pub fn reconcile_allreduce(stats: &TransportStats, p: u64, m: u64) -> ReconcileReport {
    let steps_predicted = 2 * lg(p).round() as u64;
    let bytes_predicted = (2.0 * ((p as f64 - 1.0) / p as f64) * 4.0 * m as f64).round() as u64;
    ReconcileReport {
        steps_measured: stats.steps,
        steps_predicted,
        bytes_measured: stats.bytes_sent,
        bytes_predicted,
        bytes_deviation_pct: deviation_pct(stats.bytes_sent, bytes_predicted),
    }
}
