//! Sparse message wire format and alternating-signs quantization.
//!
//! A communication-set travels as one self-delimiting frame so indices and
//! values need a single exchange:
//!
//! ```text
//! [count: u32 LE][mode: u8][indices: count x u32 LE][payload]
//! payload = count x f32 LE          (mode 0, dense values)
//!         | 1 x f32 LE              (mode 1, quantized mean)
//! ```
//!
//! Dense frames are `5 + 8*count` bytes; quantized frames are `9 + 4*count`
//! bytes, i.e. half the per-element payload. Quantization alternates each
//! iteration between the largest positive and the smallest negative
//! residuals, so one sign-free mean stands in for all transmitted values.

use crate::selection::{self, SelectionResult, SelectorConfig};
use crate::tensor::{self, DenseTensor, TensorError};
use thiserror::Error;

pub const MODE_DENSE_VALUES: u8 = 0;
pub const MODE_QUANT_MEAN: u8 = 1;

/// Frame header: count field plus mode byte.
pub const HEADER_BYTES: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum CodecError {
    #[error("frame truncated at offset {offset}: need {needed} bytes, have {got}")]
    Truncated {
        offset: usize,
        needed: usize,
        got: usize,
    },
    #[error("frame has {got} bytes, expected {expected}")]
    TrailingBytes { expected: usize, got: usize },
    #[error("unknown mode byte {mode} at offset {offset}")]
    UnknownMode { mode: u8, offset: usize },
    #[error("indices not strictly increasing at offset {offset}")]
    NonIncreasingIndices { offset: usize },
    #[error("selection values carry mixed signs; quantization requires one sign")]
    MixedSigns,
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Whether a worker currently transmits its largest positive or smallest
/// negative residuals. Flips exactly once per training iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AsqPhase {
    Positive,
    Negative,
}

impl AsqPhase {
    pub fn flipped(self) -> AsqPhase {
        match self {
            AsqPhase::Positive => AsqPhase::Negative,
            AsqPhase::Negative => AsqPhase::Positive,
        }
    }
}

/// One encoded communication-set: sorted element indices plus either the
/// per-element values or a single quantized mean.
#[derive(Debug, Clone, PartialEq)]
pub enum SparsePayload {
    Dense(Vec<f32>),
    QuantMean(f32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMessage {
    indices: Vec<u32>,
    payload: SparsePayload,
}

impl SparseMessage {
    /// Dense-values message. Indices must be strictly increasing and
    /// aligned with `values`.
    pub fn dense(indices: Vec<u32>, values: Vec<f32>) -> Result<Self, CodecError> {
        if indices.len() != values.len() {
            return Err(TensorError::LengthMismatch {
                expected: indices.len(),
                got: values.len(),
            }
            .into());
        }
        validate_increasing(&indices)?;
        Ok(SparseMessage {
            indices,
            payload: SparsePayload::Dense(values),
        })
    }

    /// Quantized message carrying one mean for every index.
    pub fn quantized(indices: Vec<u32>, mean: f32) -> Result<Self, CodecError> {
        validate_increasing(&indices)?;
        Ok(SparseMessage {
            indices,
            payload: SparsePayload::QuantMean(mean),
        })
    }

    pub fn empty_dense() -> Self {
        SparseMessage {
            indices: Vec::new(),
            payload: SparsePayload::Dense(Vec::new()),
        }
    }

    pub fn count(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn payload(&self) -> &SparsePayload {
        &self.payload
    }

    pub fn mode(&self) -> u8 {
        match self.payload {
            SparsePayload::Dense(_) => MODE_DENSE_VALUES,
            SparsePayload::QuantMean(_) => MODE_QUANT_MEAN,
        }
    }

    /// Exact size of this message on the wire.
    pub fn encoded_len(&self) -> usize {
        frame_len(self.count(), self.mode()).expect("mode is valid")
    }

    /// The value transmitted for slot `j`.
    pub fn value_at(&self, j: usize) -> f32 {
        match &self.payload {
            SparsePayload::Dense(values) => values[j],
            SparsePayload::QuantMean(mean) => *mean,
        }
    }
}

fn validate_increasing(indices: &[u32]) -> Result<(), CodecError> {
    for (pos, w) in indices.windows(2).enumerate() {
        if w[1] <= w[0] {
            return Err(TensorError::UnsortedIndices { position: pos + 1 }.into());
        }
    }
    Ok(())
}

/// Wire size of a frame with the given element count and mode byte.
/// Checked arithmetic: a hostile count cannot overflow.
pub fn frame_len(count: usize, mode: u8) -> Result<usize, CodecError> {
    let body = match mode {
        MODE_DENSE_VALUES => count.checked_mul(8),
        MODE_QUANT_MEAN => count.checked_mul(4).and_then(|b| b.checked_add(4)),
        other => {
            return Err(CodecError::UnknownMode {
                mode: other,
                offset: 4,
            })
        }
    };
    body.and_then(|b| b.checked_add(HEADER_BYTES))
        .ok_or(CodecError::Truncated {
            offset: 0,
            needed: usize::MAX,
            got: 0,
        })
}

/// Sign-restricted selection for alternating-signs quantization.
///
/// Positive phase keeps the k largest positive entries, negative phase the
/// k smallest negative entries. If fewer than k entries of the required
/// sign exist, all of them are returned (possibly none).
pub fn asq_select(
    x: &DenseTensor,
    k: usize,
    phase: AsqPhase,
    cfg: &SelectorConfig,
) -> Result<SelectionResult, selection::SelectionError> {
    if k == 0 || k > x.len() {
        return Err(selection::SelectionError::KOutOfRange { k, len: x.len() });
    }
    let keep = |v: f32| match phase {
        AsqPhase::Positive => v > 0.0,
        AsqPhase::Negative => v < 0.0,
    };
    let mut view_indices: Vec<u32> = Vec::new();
    let mut view_values: Vec<f32> = Vec::new();
    for (i, &v) in x.as_slice().iter().enumerate() {
        if keep(v) {
            view_indices.push(i as u32);
            view_values.push(v);
        }
    }
    if view_indices.len() <= k {
        return Ok(SelectionResult {
            indices: view_indices,
            values: view_values,
            threshold: 0.0,
            exact: true,
        });
    }
    // All view entries share one sign, so top-k by magnitude over the view
    // is exactly the k extreme signed values.
    let view = DenseTensor::from_vec(view_values.clone());
    let inner = selection::trimmed_top_k(&view, k, cfg)?;
    let indices: Vec<u32> = inner
        .indices
        .iter()
        .map(|&vi| view_indices[vi as usize])
        .collect();
    let values: Vec<f32> = inner
        .indices
        .iter()
        .map(|&vi| view_values[vi as usize])
        .collect();
    Ok(SelectionResult {
        indices,
        values,
        threshold: inner.threshold,
        exact: true,
    })
}

/// Replaces a single-signed selection by one mean value (f64 accumulate).
/// Mixed-sign selections are a contract violation.
pub fn quantize_mean(sel: &SelectionResult) -> Result<SparseMessage, CodecError> {
    if sel.values.is_empty() {
        return SparseMessage::quantized(Vec::new(), 0.0);
    }
    let positive = sel.values[0] > 0.0;
    if sel
        .values
        .iter()
        .any(|&v| if positive { v <= 0.0 } else { v >= 0.0 })
    {
        return Err(CodecError::MixedSigns);
    }
    let sum: f64 = sel.values.iter().map(|&v| v as f64).sum();
    let mean = (sum / sel.values.len() as f64) as f32;
    SparseMessage::quantized(sel.indices.clone(), mean)
}

/// Serializes a message into the little-endian frame layout.
pub fn encode(msg: &SparseMessage) -> Vec<u8> {
    let mut out = Vec::with_capacity(msg.encoded_len());
    encode_into(msg, &mut out);
    out
}

/// Appends the encoded frame to `out`.
pub fn encode_into(msg: &SparseMessage, out: &mut Vec<u8>) {
    out.extend_from_slice(&(msg.count() as u32).to_le_bytes());
    out.push(msg.mode());
    for &idx in &msg.indices {
        out.extend_from_slice(&idx.to_le_bytes());
    }
    match &msg.payload {
        SparsePayload::Dense(values) => {
            for &v in values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        SparsePayload::QuantMean(mean) => {
            out.extend_from_slice(&mean.to_le_bytes());
        }
    }
}

/// Reads the total frame length from a frame header without decoding the
/// body. Needs at least the 5 header bytes.
pub fn peek_frame_len(bytes: &[u8]) -> Result<usize, CodecError> {
    if bytes.len() < HEADER_BYTES {
        return Err(CodecError::Truncated {
            offset: 0,
            needed: HEADER_BYTES,
            got: bytes.len(),
        });
    }
    let count = u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as usize;
    frame_len(count, bytes[4])
}

/// Decodes one frame occupying the entire buffer.
pub fn decode(bytes: &[u8]) -> Result<SparseMessage, CodecError> {
    let (msg, used) = decode_prefix(bytes)?;
    if used != bytes.len() {
        return Err(CodecError::TrailingBytes {
            expected: used,
            got: bytes.len(),
        });
    }
    Ok(msg)
}

/// Decodes one frame from the front of the buffer, returning the message
/// and the number of bytes consumed.
pub fn decode_prefix(bytes: &[u8]) -> Result<(SparseMessage, usize), CodecError> {
    let total = peek_frame_len(bytes)?;
    if bytes.len() < total {
        return Err(CodecError::Truncated {
            offset: HEADER_BYTES,
            needed: total,
            got: bytes.len(),
        });
    }
    let count = u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as usize;
    let mode = bytes[4];

    let mut indices = Vec::with_capacity(count);
    let mut offset = HEADER_BYTES;
    let mut prev: Option<u32> = None;
    for _ in 0..count {
        let idx = u32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap());
        if let Some(p) = prev {
            if idx <= p {
                return Err(CodecError::NonIncreasingIndices { offset });
            }
        }
        prev = Some(idx);
        indices.push(idx);
        offset += 4;
    }

    let payload = match mode {
        MODE_DENSE_VALUES => {
            let mut values = Vec::with_capacity(count);
            for _ in 0..count {
                values.push(f32::from_le_bytes(
                    bytes[offset..offset + 4].try_into().unwrap(),
                ));
                offset += 4;
            }
            SparsePayload::Dense(values)
        }
        MODE_QUANT_MEAN => {
            let mean = f32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap());
            offset += 4;
            SparsePayload::QuantMean(mean)
        }
        _ => unreachable!("mode validated by peek_frame_len"),
    };
    debug_assert_eq!(offset, total);
    Ok((SparseMessage { indices, payload }, offset))
}

/// Applies a received message to a dense tensor:
/// `dst[idx[j]] += scale * value_j`, where quantized messages repeat their
/// single mean for every index.
pub fn decompress_apply(
    dst: &mut DenseTensor,
    msg: &SparseMessage,
    scale: f32,
) -> Result<(), CodecError> {
    match &msg.payload {
        SparsePayload::Dense(values) => {
            tensor::scatter_add(dst, &msg.indices, values, scale)?;
        }
        SparsePayload::QuantMean(mean) => {
            tensor::scatter_add_uniform(dst, &msg.indices, *mean, scale)?;
        }
    }
    Ok(())
}
