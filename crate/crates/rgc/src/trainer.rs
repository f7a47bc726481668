//! Synchronous data-parallel training with residual gradient compression.
//!
//! Per step, each worker: computes its local batch gradient, optionally
//! clips it, folds it into the per-tensor residual through the momentum
//! buffer, selects a communication-set from the residual, optionally
//! quantizes it to one alternating-sign mean, allgathers everyone's
//! messages, scatter-adds all of them into its replica scaled by
//! `-lr / (p * batch)`, and finally zeroes residual and momentum at the
//! transmitted coordinates. Untransmitted mass stays in the residual for
//! later steps.
//!
//! Tensors below a size floor, and every tensor during dense warm-up
//! epochs, skip compression and synchronize by dense allreduce instead;
//! momentum is not masked on that path, which reduces to ordinary
//! momentum SGD.
//!
//! All replicas assert bit-identical weights after every step via a hash
//! allgather.

use crate::codec::{self, AsqPhase, CodecError, SparseMessage};
use crate::collective::{
    self, allgather_sparse, allreduce_dense, CollectiveError, Communicator, InProcTransport,
    Transport,
};
use crate::data::{Dataset, ShardPlan};
use crate::model::{MlpModel, ModelError, ParamMeta, Targets};
use crate::selection::{self, k_for_ratio, SelectionError, SelectorConfig, ThresholdCache};
use crate::tensor::{self, DenseTensor};
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("rank {rank} diverged at step {step} (non-finite loss)")]
    Diverged { rank: usize, step: usize },
    #[error("replicas disagree on weights after step {step}")]
    ReplicaDivergence { step: usize },
    #[error("worker thread panicked")]
    WorkerPanic,
    #[error(transparent)]
    Collective(#[from] CollectiveError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectorKind {
    Exact,
    Trimmed,
    ThresholdBs,
    SampledBs,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Warmup {
    None,
    /// Per-epoch compression ratios for the first epochs, e.g.
    /// 25%, 6.25%, 1.5625%, 0.4%, 0.1%; afterwards the configured ratio.
    RatioSchedule(Vec<f64>),
    /// Fully dense synchronization for the first n epochs.
    DenseEpochs(usize),
}

/// Ratio in effect for an epoch: either a fraction or fully dense.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EffectiveRatio {
    Dense,
    Ratio(f64),
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// Steady-state compression ratio D.
    pub ratio: f64,
    /// Per-worker batch size.
    pub batch_size: usize,
    pub lr: f32,
    pub momentum: f32,
    /// Global-norm clip threshold before the per-worker `1/sqrt(p)` scaling;
    /// `None` disables clipping (the CNN-style default).
    pub clip_norm: Option<f32>,
    pub warmup: Warmup,
    /// Alternating-signs quantization of compressed tensors.
    pub quantize: bool,
    pub selector: SelectorKind,
    pub steps: usize,
    /// Derived from the shard plan when `None`.
    pub steps_per_epoch: Option<usize>,
    /// Tensors smaller than this synchronize densely.
    pub dense_floor: usize,
    pub epsilon_trim: f32,
    pub epsilon_bs: f32,
    pub sample_interval: usize,
    pub seed: u64,
    /// Record per-layer residual/selection traces and per-step weights.
    pub trace: bool,
    pub comm_timeout: Duration,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            ratio: 0.001,
            batch_size: 16,
            lr: 0.1,
            momentum: 0.9,
            clip_norm: None,
            warmup: Warmup::None,
            quantize: false,
            selector: SelectorKind::Trimmed,
            steps: 100,
            steps_per_epoch: None,
            dense_floor: 512,
            epsilon_trim: 0.2,
            epsilon_bs: 0.01,
            sample_interval: 5,
            seed: 0,
            trace: false,
            comm_timeout: Duration::from_secs(30),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return Err(TrainError::InvalidConfig(format!(
                "ratio must be in (0, 1], got {}",
                self.ratio
            )));
        }
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig(
                "batch_size must be positive".into(),
            ));
        }
        if self.steps == 0 {
            return Err(TrainError::InvalidConfig("steps must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(TrainError::InvalidConfig(format!(
                "lr must be positive and finite, got {}",
                self.lr
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(TrainError::InvalidConfig(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.selector == SelectorKind::SampledBs && self.quantize {
            return Err(TrainError::InvalidConfig(
                "sampled threshold search cannot be combined with quantization".into(),
            ));
        }
        if let Warmup::RatioSchedule(ratios) = &self.warmup {
            for &r in ratios {
                if !(r > 0.0 && r <= 1.0) {
                    return Err(TrainError::InvalidConfig(format!(
                        "warm-up ratio must be in (0, 1], got {r}"
                    )));
                }
            }
        }
        Ok(())
    }

    fn selector_cfg(&self, ratio: f64) -> SelectorConfig {
        SelectorConfig {
            ratio,
            epsilon_trim: self.epsilon_trim,
            epsilon_bs: self.epsilon_bs,
            sample_interval: self.sample_interval,
        }
    }
}

/// Compression ratio in effect for `epoch` under the configured warm-up.
pub fn warmup_ratio(epoch: usize, cfg: &TrainConfig) -> EffectiveRatio {
    match &cfg.warmup {
        Warmup::None => EffectiveRatio::Ratio(cfg.ratio),
        Warmup::RatioSchedule(ratios) => match ratios.get(epoch) {
            Some(&r) => EffectiveRatio::Ratio(r),
            None => EffectiveRatio::Ratio(cfg.ratio),
        },
        Warmup::DenseEpochs(n) => {
            if epoch < *n {
                EffectiveRatio::Dense
            } else {
                EffectiveRatio::Ratio(cfg.ratio)
            }
        }
    }
}

/// Scales all gradient tensors so their joint norm does not exceed
/// `clip_norm / sqrt(n_workers)`. Returns the pre-clip norm.
pub fn local_clip(grads: &mut [DenseTensor], clip_norm: f32, n_workers: usize) -> f32 {
    let threshold = clip_norm / (n_workers as f32).sqrt();
    let norm = tensor::l2_norm_all(grads);
    if norm > threshold && norm > 0.0 {
        let scale = threshold / norm;
        for g in grads.iter_mut() {
            g.scale(scale);
        }
    }
    norm
}

/// Momentum correction: `u = m*u + grad`, then `v += u`.
pub fn momentum_accumulate(u: &mut DenseTensor, v: &mut DenseTensor, grad: &DenseTensor, m: f32) {
    debug_assert_eq!(u.len(), grad.len());
    debug_assert_eq!(v.len(), grad.len());
    let u = u.as_mut_slice();
    let v = v.as_mut_slice();
    for i in 0..grad.len() {
        u[i] = m * u[i] + grad[i];
        v[i] += u[i];
    }
}

/// Momentum masking: zeroes momentum and residual at transmitted indices;
/// untransmitted residual entries carry over.
pub fn mask_selected(u: &mut DenseTensor, v: &mut DenseTensor, indices: &[u32]) {
    let u = u.as_mut_slice();
    let v = v.as_mut_slice();
    for &i in indices {
        u[i as usize] = 0.0;
        v[i as usize] = 0.0;
    }
}

/// Per-rank training state.
#[derive(Debug, Clone)]
pub struct WorkerState {
    pub model: MlpModel,
    pub residual: Vec<DenseTensor>,
    pub momentum: Vec<DenseTensor>,
    pub asq_phase: AsqPhase,
    pub threshold_caches: Vec<ThresholdCache>,
    pub step: u64,
}

impl WorkerState {
    pub fn new(model: MlpModel) -> WorkerState {
        let residual = model.zeros_like_params();
        let momentum = model.zeros_like_params();
        let caches = model
            .params()
            .iter()
            .map(|_| ThresholdCache::new())
            .collect();
        WorkerState {
            model,
            residual,
            momentum,
            asq_phase: AsqPhase::Positive,
            threshold_caches: caches,
            step: 0,
        }
    }
}

/// Synchronization footprint of one tensor in one step.
#[derive(Debug, Clone)]
pub struct TensorSyncStat {
    pub param: usize,
    pub len: usize,
    /// Elements each worker aimed to transmit (exact selectors hit this).
    pub k_target: usize,
    pub per_worker_counts: Vec<usize>,
    /// Distinct indices across all workers.
    pub union_count: usize,
    pub dense_path: bool,
}

/// Residual bookkeeping of one tensor in one step, for conservation checks.
#[derive(Debug, Clone)]
pub struct LayerTrace {
    pub param: usize,
    /// Residual after momentum accumulation, before masking.
    pub v_mid: Vec<f32>,
    /// Residual after masking.
    pub v_after: Vec<f32>,
    pub selected_indices: Vec<u32>,
    /// Pre-quantization selected values.
    pub selected_values: Vec<f32>,
    pub dense_path: bool,
}

#[derive(Debug, Clone)]
pub struct StepTrace {
    pub step: usize,
    pub layers: Vec<LayerTrace>,
    pub weights_after: Vec<Vec<f32>>,
}

/// One worker's view of one step. Losses and accuracies cover all workers
/// (exchanged alongside the consistency hash), so any single rank can emit
/// the full metrics row.
#[derive(Debug, Clone)]
pub struct WorkerStepRow {
    pub step: usize,
    pub mean_batch_loss: f64,
    pub batch_accuracy: f64,
    pub all_losses: Vec<f64>,
    pub mean_accuracy: f64,
    /// Payload bytes this rank pushed into collectives this step
    /// (consistency/stat exchanges excluded).
    pub bytes_sent: u64,
    pub weight_hash: u64,
    pub sync_stats: Vec<TensorSyncStat>,
}

impl WorkerStepRow {
    /// Distinct transmitted indices over total elements, compressed-path
    /// tensors only; 1.0 when everything went dense.
    pub fn union_ratio(&self) -> f64 {
        let mut distinct = 0usize;
        let mut total = 0usize;
        for s in &self.sync_stats {
            if !s.dense_path {
                distinct += s.union_count;
                total += s.len;
            }
        }
        if total == 0 {
            1.0
        } else {
            distinct as f64 / total as f64
        }
    }
}

/// Everything a worker produced over a run.
#[derive(Debug)]
pub struct WorkerRunOutput {
    pub rank: usize,
    pub rows: Vec<WorkerStepRow>,
    pub traces: Vec<StepTrace>,
    pub final_weights: Vec<DenseTensor>,
    /// Mean loss and accuracy over the full training set.
    pub final_loss: f64,
    pub final_accuracy: f64,
    /// Quantized messages emitted in (positive, negative) phases.
    pub phase_counts: (u64, u64),
    pub total_bytes: u64,
}

fn merge_union(gathered: &[SparseMessage]) -> usize {
    let mut all: Vec<u32> = gathered
        .iter()
        .flat_map(|m| m.indices().iter().copied())
        .collect();
    all.sort_unstable();
    all.dedup();
    all.len()
}

/// Per-step bookkeeping frame: weight hash for the replica-consistency
/// assertion plus this rank's batch loss and accuracy. 24 bytes on the wire.
#[derive(Debug, Clone, Copy)]
struct SyncFrame {
    weight_hash: u64,
    loss: f64,
    accuracy: f64,
}

impl collective::WireFrame for SyncFrame {
    fn encode_frame(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.weight_hash.to_le_bytes());
        out.extend_from_slice(&self.loss.to_le_bytes());
        out.extend_from_slice(&self.accuracy.to_le_bytes());
    }

    fn peek_frame_len(bytes: &[u8]) -> Result<usize, CodecError> {
        if bytes.len() < 24 {
            return Err(CodecError::Truncated {
                offset: 0,
                needed: 24,
                got: bytes.len(),
            });
        }
        Ok(24)
    }

    fn decode_frame(bytes: &[u8]) -> Result<Self, CodecError> {
        if bytes.len() != 24 {
            return Err(CodecError::TrailingBytes {
                expected: 24,
                got: bytes.len(),
            });
        }
        Ok(SyncFrame {
            weight_hash: u64::from_le_bytes(bytes[0..8].try_into().unwrap()),
            loss: f64::from_le_bytes(bytes[8..16].try_into().unwrap()),
            accuracy: f64::from_le_bytes(bytes[16..24].try_into().unwrap()),
        })
    }
}

struct StepOutcome {
    row: WorkerStepRow,
    trace: Option<StepTrace>,
    quant_phase: Option<AsqPhase>,
    emitted_quant: u64,
}

/// One training step on one rank. All ranks must call this in lockstep.
fn worker_step(
    state: &mut WorkerState,
    comm: &mut Communicator,
    cfg: &TrainConfig,
    metas: &[ParamMeta],
    plan: &ShardPlan,
    dataset: &Dataset,
) -> Result<StepOutcome, TrainError> {
    let step = state.step as usize;
    let rank = comm.rank();
    let p = comm.world_size();
    let bytes_before = comm.stats().bytes_sent;

    let batch = plan.batch_indices(rank, step);
    let (feats, labels) = dataset.gather(&batch);
    let (loss_sum, mut grads) = state
        .model
        .forward_backward(&feats, Targets::Labels(&labels))?;
    let mean_batch_loss = loss_sum / labels.len() as f64;
    if !mean_batch_loss.is_finite() {
        return Err(TrainError::Diverged { rank, step });
    }
    let (_, batch_accuracy) = state.model.evaluate(&feats, &labels)?;

    // Clip the fresh local gradient before it reaches the residuals.
    if let Some(clip) = cfg.clip_norm {
        local_clip(&mut grads, clip, p);
    }

    let steps_per_epoch = cfg
        .steps_per_epoch
        .unwrap_or_else(|| plan.steps_per_epoch());
    let epoch = step / steps_per_epoch.max(1);
    let effective = warmup_ratio(epoch, cfg);

    let lr_scale = cfg.lr / (p * cfg.batch_size) as f32;
    let mut sync_stats = Vec::with_capacity(metas.len());
    let mut layer_traces = cfg.trace.then(Vec::new);
    let mut quant_phase = None;
    let mut emitted_quant = 0u64;

    // Layer loop runs back to front, mirroring backpropagation order.
    for t in (0..metas.len()).rev() {
        let len = metas[t].len;
        momentum_accumulate(
            &mut state.momentum[t],
            &mut state.residual[t],
            &grads[t],
            cfg.momentum,
        );
        let v_mid = cfg.trace.then(|| state.residual[t].as_slice().to_vec());

        let dense_path = effective == EffectiveRatio::Dense || len < cfg.dense_floor;
        if dense_path {
            // Whole residual travels; momentum is left alone, so this is
            // plain momentum SGD for the tensor.
            let aggregate = allreduce_dense(comm, &state.residual[t])?;
            let selected = cfg.trace.then(|| {
                (
                    (0..len as u32).collect::<Vec<u32>>(),
                    state.residual[t].as_slice().to_vec(),
                )
            });
            state.model.params_mut()[t]
                .add_scaled(-lr_scale, &aggregate)
                .expect("aggregate matches parameter shape");
            state.residual[t].fill(0.0);

            sync_stats.push(TensorSyncStat {
                param: t,
                len,
                k_target: len,
                per_worker_counts: vec![len; p],
                union_count: len,
                dense_path: true,
            });
            if let (Some(traces), Some((idx, vals))) = (layer_traces.as_mut(), selected) {
                traces.push(LayerTrace {
                    param: t,
                    v_mid: v_mid.clone().unwrap(),
                    v_after: state.residual[t].as_slice().to_vec(),
                    selected_indices: idx,
                    selected_values: vals,
                    dense_path: true,
                });
            }
            continue;
        }

        let ratio = match effective {
            EffectiveRatio::Ratio(r) => r,
            EffectiveRatio::Dense => unreachable!(),
        };
        let k = k_for_ratio(len, ratio);
        let sel_cfg = cfg.selector_cfg(ratio);
        let quantize_this = cfg.quantize && metas[t].quantize_allowed;

        let sel = if quantize_this {
            codec::asq_select(&state.residual[t], k, state.asq_phase, &sel_cfg)?
        } else {
            match cfg.selector {
                SelectorKind::Exact => selection::exact_top_k(&state.residual[t], k)?,
                SelectorKind::Trimmed => selection::trimmed_top_k(&state.residual[t], k, &sel_cfg)?,
                SelectorKind::ThresholdBs => {
                    selection::threshold_binary_search(&state.residual[t], k, &sel_cfg)?
                }
                SelectorKind::SampledBs => selection::sampled_threshold_search(
                    &state.residual[t],
                    k,
                    &sel_cfg,
                    &mut state.threshold_caches[t],
                )?,
            }
        };

        let msg = if quantize_this {
            quant_phase = Some(state.asq_phase);
            emitted_quant += 1;
            codec::quantize_mean(&sel)?
        } else {
            SparseMessage::dense(sel.indices.clone(), sel.values.clone())?
        };

        let gathered = allgather_sparse(comm, &msg)?;
        for m in &gathered {
            codec::decompress_apply(&mut state.model.params_mut()[t], m, -lr_scale)?;
        }
        mask_selected(&mut state.momentum[t], &mut state.residual[t], &sel.indices);

        sync_stats.push(TensorSyncStat {
            param: t,
            len,
            k_target: k,
            per_worker_counts: gathered.iter().map(|m| m.count()).collect(),
            union_count: merge_union(&gathered),
            dense_path: false,
        });
        if let Some(traces) = layer_traces.as_mut() {
            traces.push(LayerTrace {
                param: t,
                v_mid: v_mid.unwrap(),
                v_after: state.residual[t].as_slice().to_vec(),
                selected_indices: sel.indices.clone(),
                selected_values: sel.values.clone(),
                dense_path: false,
            });
        }
    }

    let bytes_sent = comm.stats().bytes_sent - bytes_before;

    state.asq_phase = state.asq_phase.flipped();
    state.step += 1;

    // Replica consistency plus loss/accuracy exchange: all ranks must
    // agree on the weight bits.
    let weight_hash = tensor::bits_hash(state.model.params());
    let frames = collective::allgather(
        comm,
        &SyncFrame {
            weight_hash,
            loss: mean_batch_loss,
            accuracy: batch_accuracy,
        },
    )?;
    if frames.iter().any(|f| f.weight_hash != weight_hash) {
        return Err(TrainError::ReplicaDivergence { step });
    }
    let all_losses: Vec<f64> = frames.iter().map(|f| f.loss).collect();
    let mean_accuracy = frames.iter().map(|f| f.accuracy).sum::<f64>() / p as f64;

    let trace = layer_traces.map(|mut layers| {
        layers.sort_by_key(|l| l.param);
        StepTrace {
            step,
            layers,
            weights_after: state
                .model
                .params()
                .iter()
                .map(|t| t.as_slice().to_vec())
                .collect(),
        }
    });

    sync_stats.sort_by_key(|s| s.param);
    Ok(StepOutcome {
        row: WorkerStepRow {
            step,
            mean_batch_loss,
            batch_accuracy,
            all_losses,
            mean_accuracy,
            bytes_sent,
            weight_hash,
            sync_stats,
        },
        trace,
        quant_phase,
        emitted_quant,
    })
}

/// Streaming hook for per-step metrics (partial output on failure).
pub type StepObserver = Box<dyn FnMut(&WorkerStepRow) + Send>;

/// Runs the full training loop on one rank. The communicator's world
/// defines p; every rank must use identical `cfg`, `model` and `dataset`.
pub fn run_worker(
    model: MlpModel,
    comm: &mut Communicator,
    cfg: &TrainConfig,
    dataset: &Dataset,
    mut observer: Option<StepObserver>,
) -> Result<WorkerRunOutput, TrainError> {
    cfg.validate()?;
    let rank = comm.rank();
    let metas = model.param_metas();
    let plan = ShardPlan::new(dataset.len(), comm.world_size(), cfg.batch_size, cfg.seed);
    let mut state = WorkerState::new(model);

    let mut rows = Vec::with_capacity(cfg.steps);
    let mut traces = Vec::new();
    let mut positive = 0u64;
    let mut negative = 0u64;

    for _ in 0..cfg.steps {
        let outcome = worker_step(&mut state, comm, cfg, &metas, &plan, dataset)?;
        if let Some(phase) = outcome.quant_phase {
            match phase {
                AsqPhase::Positive => positive += outcome.emitted_quant,
                AsqPhase::Negative => negative += outcome.emitted_quant,
            }
        }
        if let Some(obs) = observer.as_mut() {
            obs(&outcome.row);
        }
        rows.push(outcome.row);
        if let Some(t) = outcome.trace {
            traces.push(t);
        }
    }

    let (final_loss, final_accuracy) =
        state.model.evaluate(dataset.features(), dataset.labels())?;
    Ok(WorkerRunOutput {
        rank,
        rows,
        traces,
        final_weights: state.model.params().to_vec(),
        final_loss,
        final_accuracy,
        phase_counts: (positive, negative),
        total_bytes: comm.stats().bytes_sent,
    })
}

/// Merged per-step view across workers.
#[derive(Debug, Clone)]
pub struct StepSummary {
    pub step: usize,
    pub losses: Vec<f64>,
    pub mean_accuracy: f64,
    pub union_ratio: f64,
    pub bytes_sent: u64,
}

#[derive(Debug)]
pub struct RunSummary {
    pub world_size: usize,
    pub steps: Vec<StepSummary>,
    pub final_loss: f64,
    pub final_accuracy: f64,
    pub total_bytes_rank0: u64,
    pub workers: Vec<WorkerRunOutput>,
}

impl RunSummary {
    pub fn mean_union_ratio(&self) -> f64 {
        if self.steps.is_empty() {
            return 0.0;
        }
        self.steps.iter().map(|s| s.union_ratio).sum::<f64>() / self.steps.len() as f64
    }
}

/// Runs `p` workers on threads connected by the in-process transport.
pub fn run_threads(
    model: &MlpModel,
    dataset: &Dataset,
    cfg: &TrainConfig,
    p: usize,
) -> Result<RunSummary, TrainError> {
    run_threads_with_observer(model, dataset, cfg, p, None)
}

/// `run_threads` with a streaming observer attached to rank 0.
pub fn run_threads_with_observer(
    model: &MlpModel,
    dataset: &Dataset,
    cfg: &TrainConfig,
    p: usize,
    observer: Option<StepObserver>,
) -> Result<RunSummary, TrainError> {
    cfg.validate()?;
    let mut observer = observer;
    let mut handles = Vec::new();
    for transport in InProcTransport::mesh(p, cfg.comm_timeout) {
        let model = model.clone();
        let dataset = dataset.clone();
        let cfg = cfg.clone();
        let obs = if transport.rank() == 0 {
            observer.take()
        } else {
            None
        };
        handles.push(std::thread::spawn(move || {
            let mut comm = Communicator::new(Box::new(transport))?;
            run_worker(model, &mut comm, &cfg, &dataset, obs)
        }));
    }

    let mut outputs: Vec<WorkerRunOutput> = Vec::with_capacity(p);
    let mut errors: Vec<TrainError> = Vec::new();
    for handle in handles {
        match handle.join() {
            Ok(Ok(output)) => outputs.push(output),
            Ok(Err(e)) => errors.push(e),
            Err(_) => errors.push(TrainError::WorkerPanic),
        }
    }
    if !errors.is_empty() {
        // Report the most specific failure: a diverging or inconsistent
        // worker, not the timeouts it caused on its peers.
        let idx = errors
            .iter()
            .position(|e| {
                matches!(
                    e,
                    TrainError::Diverged { .. } | TrainError::ReplicaDivergence { .. }
                )
            })
            .unwrap_or(0);
        return Err(errors.swap_remove(idx));
    }

    outputs.sort_by_key(|o| o.rank);
    let steps = outputs[0]
        .rows
        .iter()
        .map(|row| StepSummary {
            step: row.step,
            losses: row.all_losses.clone(),
            mean_accuracy: row.mean_accuracy,
            union_ratio: row.union_ratio(),
            bytes_sent: row.bytes_sent,
        })
        .collect();

    Ok(RunSummary {
        world_size: p,
        final_loss: outputs[0].final_loss,
        final_accuracy: outputs[0].final_accuracy,
        total_bytes_rank0: outputs[0].total_bytes,
        steps,
        workers: outputs,
    })
}
