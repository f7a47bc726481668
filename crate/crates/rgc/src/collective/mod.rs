//! Collectives over a power-of-two communicator.
//!
//! * sparse synchronization: a recursive-doubling allgather of
//!   variable-length self-delimiting frames — `lg p` steps, each rank
//!   shipping `(p-1)` frames in total;
//! * dense synchronization: reduce-scatter by recursive halving followed by
//!   a recursive-doubling allgather (`2 lg p` steps, `2 (p-1)/p` of the
//!   vector through each rank).
//!
//! Every exchange is instrumented so measured steps and bytes can be held
//! against the analytic cost model.

pub mod transport;

use crate::codec::{self, CodecError, SparseMessage};
use crate::tensor::DenseTensor;
use thiserror::Error;
pub use transport::{InProcTransport, SocketTransport, Transport, TransportError};

#[derive(Debug, Error)]
pub enum CollectiveError {
    #[error("world size {0} is not a power of two")]
    WorldSizeNotPowerOfTwo(usize),
    #[error("rank {rank} step {step}: transport failure: {source}")]
    Transport {
        rank: usize,
        step: usize,
        #[source]
        source: TransportError,
    },
    #[error("rank {rank} step {step}: malformed frame: {source}")]
    Decode {
        rank: usize,
        step: usize,
        #[source]
        source: CodecError,
    },
    #[error("rank {rank} step {step}: expected {expected} bytes from peer, got {got}")]
    WrongLength {
        rank: usize,
        step: usize,
        expected: usize,
        got: usize,
    },
}

/// Counters accumulated across collective calls. Snapshot before a call and
/// diff afterwards to measure a single collective.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TransportStats {
    pub messages_sent: u64,
    pub bytes_sent: u64,
    pub steps: u64,
}

impl TransportStats {
    pub fn delta_since(&self, earlier: &TransportStats) -> TransportStats {
        TransportStats {
            messages_sent: self.messages_sent - earlier.messages_sent,
            bytes_sent: self.bytes_sent - earlier.bytes_sent,
            steps: self.steps - earlier.steps,
        }
    }
}

/// Anything that can travel through the frame allgather: encodes itself and
/// can report a frame's full length from its header, so concatenated frames
/// split without separators.
pub trait WireFrame: Sized {
    fn encode_frame(&self, out: &mut Vec<u8>);
    fn peek_frame_len(bytes: &[u8]) -> Result<usize, CodecError>;
    fn decode_frame(bytes: &[u8]) -> Result<Self, CodecError>;
}

impl WireFrame for SparseMessage {
    fn encode_frame(&self, out: &mut Vec<u8>) {
        codec::encode_into(self, out);
    }

    fn peek_frame_len(bytes: &[u8]) -> Result<usize, CodecError> {
        codec::peek_frame_len(bytes)
    }

    fn decode_frame(bytes: &[u8]) -> Result<Self, CodecError> {
        codec::decode(bytes)
    }
}

/// Fixed 8-byte frame used for cheap cross-rank agreement checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DigestFrame(pub u64);

impl WireFrame for DigestFrame {
    fn encode_frame(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.0.to_le_bytes());
    }

    fn peek_frame_len(bytes: &[u8]) -> Result<usize, CodecError> {
        if bytes.len() < 8 {
            return Err(CodecError::Truncated {
                offset: 0,
                needed: 8,
                got: bytes.len(),
            });
        }
        Ok(8)
    }

    fn decode_frame(bytes: &[u8]) -> Result<Self, CodecError> {
        if bytes.len() != 8 {
            return Err(CodecError::TrailingBytes {
                expected: 8,
                got: bytes.len(),
            });
        }
        Ok(DigestFrame(u64::from_le_bytes(bytes.try_into().unwrap())))
    }
}

/// A rank's endpoint into the collective group.
pub struct Communicator {
    transport: Box<dyn Transport>,
    stats: TransportStats,
}

impl Communicator {
    pub fn new(transport: Box<dyn Transport>) -> Result<Communicator, CollectiveError> {
        let p = transport.world_size();
        if p == 0 || !p.is_power_of_two() {
            return Err(CollectiveError::WorldSizeNotPowerOfTwo(p));
        }
        Ok(Communicator {
            transport,
            stats: TransportStats::default(),
        })
    }

    pub fn rank(&self) -> usize {
        self.transport.rank()
    }

    pub fn world_size(&self) -> usize {
        self.transport.world_size()
    }

    pub fn stats(&self) -> TransportStats {
        self.stats
    }

    pub fn send(&mut self, peer: usize, bytes: &[u8]) -> Result<(), TransportError> {
        self.stats.messages_sent += 1;
        self.stats.bytes_sent += bytes.len() as u64;
        self.transport.send(peer, bytes)
    }

    pub fn recv(&mut self, peer: usize) -> Result<Vec<u8>, TransportError> {
        self.transport.recv(peer)
    }

    /// One collective step: exchanges a buffer with `peer`. The lower rank
    /// sends first so socket pairs cannot write-deadlock.
    fn step_exchange(
        &mut self,
        peer: usize,
        bytes: &[u8],
        step: usize,
    ) -> Result<Vec<u8>, CollectiveError> {
        let rank = self.rank();
        self.stats.steps += 1;
        let wrap = |source| CollectiveError::Transport { rank, step, source };
        if rank < peer {
            self.send(peer, bytes).map_err(wrap)?;
            self.recv(peer).map_err(wrap)
        } else {
            let received = self.recv(peer).map_err(wrap)?;
            self.send(peer, bytes).map_err(wrap)?;
            Ok(received)
        }
    }
}

fn lg(p: usize) -> usize {
    debug_assert!(p.is_power_of_two());
    p.trailing_zeros() as usize
}

/// Recursive-doubling allgather of one frame per rank. Every rank returns
/// the identical rank-indexed list of all `p` frames in exactly `lg p`
/// exchange steps; concatenated payloads double each step and receivers
/// split them by the frames' own headers.
pub fn allgather<F: WireFrame>(
    comm: &mut Communicator,
    local: &F,
) -> Result<Vec<F>, CollectiveError> {
    let p = comm.world_size();
    let rank = comm.rank();

    let mut local_bytes = Vec::new();
    local.encode_frame(&mut local_bytes);
    // Held frames, kept sorted by owning rank; starts as just our own and
    // doubles into the aligned block containing `rank` each step.
    let mut held: Vec<(usize, Vec<u8>)> = vec![(rank, local_bytes)];

    for step in 0..lg(p) {
        let dist = 1usize << step;
        let peer = rank ^ dist;

        let mut send_buf = Vec::new();
        for (_, frame) in &held {
            send_buf.extend_from_slice(frame);
        }
        let recv_buf = comm.step_exchange(peer, &send_buf, step)?;

        // The peer holds exactly the adjacent aligned block of `dist`
        // ranks, serialized in ascending rank order.
        let peer_block = peer & !(dist - 1);
        let mut offset = 0usize;
        for i in 0..dist {
            let remaining = &recv_buf[offset..];
            let frame_len = F::peek_frame_len(remaining)
                .map_err(|source| CollectiveError::Decode { rank, step, source })?;
            if remaining.len() < frame_len {
                return Err(CollectiveError::WrongLength {
                    rank,
                    step,
                    expected: frame_len,
                    got: remaining.len(),
                });
            }
            held.push((peer_block + i, remaining[..frame_len].to_vec()));
            offset += frame_len;
        }
        if offset != recv_buf.len() {
            return Err(CollectiveError::WrongLength {
                rank,
                step,
                expected: offset,
                got: recv_buf.len(),
            });
        }
        held.sort_unstable_by_key(|(r, _)| *r);
    }

    debug_assert_eq!(held.len(), p);
    held.into_iter()
        .enumerate()
        .map(|(i, (r, frame))| {
            debug_assert_eq!(i, r);
            F::decode_frame(&frame).map_err(|source| CollectiveError::Decode {
                rank,
                step: lg(p),
                source,
            })
        })
        .collect()
}

/// Sparse synchronization: allgather of one communication-set per rank.
pub fn allgather_sparse(
    comm: &mut Communicator,
    local: &SparseMessage,
) -> Result<Vec<SparseMessage>, CollectiveError> {
    allgather(comm, local)
}

fn f32s_to_bytes(values: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 4);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn bytes_to_f32s(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect()
}

fn padded_len(len: usize, p: usize) -> usize {
    len.div_ceil(p) * p
}

/// Reduce-scatter by recursive halving: returns this rank's elementwise-sum
/// segment and its offset within the (zero-padded) vector. `lg p` steps with
/// the exchanged bytes halving each step.
pub fn reduce_scatter_halving(
    comm: &mut Communicator,
    x: &DenseTensor,
) -> Result<(DenseTensor, usize), CollectiveError> {
    let p = comm.world_size();
    let rank = comm.rank();
    if p == 1 {
        return Ok((x.clone(), 0));
    }

    let padded = padded_len(x.len(), p);
    let mut buf = x.as_slice().to_vec();
    buf.resize(padded, 0.0);

    let mut lo = 0usize;
    let mut hi = padded;
    let mut dist = p / 2;
    let mut step = 0usize;
    while dist >= 1 {
        let peer = rank ^ dist;
        let mid = lo + (hi - lo) / 2;
        // The half we keep reducing is the one our own final segment lives
        // in; the other half is what the peer's subtree needs.
        let (keep, send) = if rank & dist == 0 {
            ((lo, mid), (mid, hi))
        } else {
            ((mid, hi), (lo, mid))
        };
        let send_bytes = f32s_to_bytes(&buf[send.0..send.1]);
        let recv_bytes = comm.step_exchange(peer, &send_bytes, step)?;
        let received = bytes_to_f32s(&recv_bytes);
        if received.len() != keep.1 - keep.0 {
            return Err(CollectiveError::WrongLength {
                rank,
                step,
                expected: (keep.1 - keep.0) * 4,
                got: recv_bytes.len(),
            });
        }
        for (dst, src) in buf[keep.0..keep.1].iter_mut().zip(&received) {
            *dst += src;
        }
        lo = keep.0;
        hi = keep.1;
        dist /= 2;
        step += 1;
    }

    Ok((DenseTensor::from_vec(buf[lo..hi].to_vec()), lo))
}

/// Dense allreduce: reduce-scatter then allgather. All ranks return the
/// bit-identical elementwise sum in `2 lg p` steps, moving
/// `2 (p-1)/p * 4 * len` payload bytes per rank (padding aside).
pub fn allreduce_dense(
    comm: &mut Communicator,
    x: &DenseTensor,
) -> Result<DenseTensor, CollectiveError> {
    let p = comm.world_size();
    let rank = comm.rank();
    if p == 1 {
        return Ok(x.clone());
    }

    let padded = padded_len(x.len(), p);
    let seg_len = padded / p;
    let (segment, offset) = reduce_scatter_halving(comm, x)?;
    debug_assert_eq!(offset, rank * seg_len);
    debug_assert_eq!(segment.len(), seg_len);

    let mut buf = vec![0.0f32; padded];
    buf[offset..offset + seg_len].copy_from_slice(segment.as_slice());

    // Allgather the segments by recursive doubling; block positions are
    // implied by the rank arithmetic so no headers are needed.
    for s in 0..lg(p) {
        let dist = 1usize << s;
        let peer = rank ^ dist;
        let my_block = rank & !(dist - 1);
        let peer_block = peer & !(dist - 1);
        let my_range = my_block * seg_len..(my_block + dist) * seg_len;
        let peer_range = peer_block * seg_len..(peer_block + dist) * seg_len;

        let send_bytes = f32s_to_bytes(&buf[my_range]);
        let step = lg(p) + s;
        let recv_bytes = comm.step_exchange(peer, &send_bytes, step)?;
        let received = bytes_to_f32s(&recv_bytes);
        if received.len() != dist * seg_len {
            return Err(CollectiveError::WrongLength {
                rank,
                step,
                expected: dist * seg_len * 4,
                got: recv_bytes.len(),
            });
        }
        buf[peer_range].copy_from_slice(&received);
    }

    buf.truncate(x.len());
    Ok(DenseTensor::from_vec(buf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use std::time::Duration;

    /// Runs `f` on every rank of an in-process mesh and returns the
    /// rank-ordered results.
    pub(crate) fn run_ranks<T: Send + 'static>(
        p: usize,
        f: impl Fn(Communicator) -> T + Send + Sync + 'static,
    ) -> Vec<T> {
        let f = std::sync::Arc::new(f);
        let mut handles = Vec::new();
        for transport in InProcTransport::mesh(p, Duration::from_secs(10)) {
            let f = f.clone();
            handles.push(std::thread::spawn(move || {
                f(Communicator::new(Box::new(transport)).unwrap())
            }));
        }
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    }

    fn distinct_message(rank: usize) -> SparseMessage {
        SparseMessage::dense(vec![rank as u32 * 3], vec![rank as f32 + 0.5]).unwrap()
    }

    #[test]
    fn communicator_rejects_non_power_of_two() {
        let mut mesh = InProcTransport::mesh(3, Duration::from_secs(1));
        let t = mesh.pop().unwrap();
        assert!(matches!(
            Communicator::new(Box::new(t)),
            Err(CollectiveError::WorldSizeNotPowerOfTwo(3))
        ));
    }

    #[test]
    fn allgather_p4_all_ranks_hold_all_messages() {
        let results = run_ranks(4, |mut comm| {
            let msg = distinct_message(comm.rank());
            let gathered = allgather_sparse(&mut comm, &msg).unwrap();
            (gathered, comm.stats())
        });
        let expected: Vec<SparseMessage> = (0..4).map(distinct_message).collect();
        for (gathered, stats) in &results {
            assert_eq!(gathered, &expected);
            assert_eq!(stats.steps, 2);
        }
    }

    #[test]
    fn allgather_p2_empty_messages() {
        let results = run_ranks(2, |mut comm| {
            allgather_sparse(&mut comm, &SparseMessage::empty_dense()).unwrap()
        });
        for gathered in results {
            assert_eq!(gathered.len(), 2);
            assert!(gathered.iter().all(|m| m.count() == 0));
        }
    }

    #[test]
    fn allgather_bytes_match_closed_form_for_equal_frames() {
        // Equal-size frames of b bytes: per-rank bytes_sent == (p-1) * b.
        let p = 8;
        let results = run_ranks(p, |mut comm| {
            let msg = SparseMessage::dense(
                vec![comm.rank() as u32, comm.rank() as u32 + 100],
                vec![1.0, 2.0],
            )
            .unwrap();
            let frame_bytes = msg.encoded_len();
            let before = comm.stats();
            allgather_sparse(&mut comm, &msg).unwrap();
            (comm.stats().delta_since(&before), frame_bytes)
        });
        for (delta, frame_bytes) in results {
            assert_eq!(delta.steps, 3);
            assert_eq!(delta.bytes_sent, ((p - 1) * frame_bytes) as u64);
        }
    }

    #[test]
    fn allgather_variable_length_frames() {
        let results = run_ranks(8, |mut comm| {
            let rank = comm.rank();
            let indices: Vec<u32> = (0..rank as u32 * 2 + 1).collect();
            let values: Vec<f32> = indices.iter().map(|&i| i as f32 * 0.25).collect();
            let msg = SparseMessage::dense(indices, values).unwrap();
            allgather_sparse(&mut comm, &msg).unwrap()
        });
        for gathered in &results {
            assert_eq!(gathered, &results[0]);
            for (rank, msg) in gathered.iter().enumerate() {
                assert_eq!(msg.count(), rank * 2 + 1);
            }
        }
    }

    #[test]
    fn reduce_scatter_two_ranks() {
        let results = run_ranks(2, |mut comm| {
            let r = comm.rank() as f32;
            let x = DenseTensor::from_vec(vec![r, r + 10.0]);
            reduce_scatter_halving(&mut comm, &x).unwrap()
        });
        // Sum vector is [0+1, 10+11] = [1, 21]; rank 0 owns the first half.
        assert_eq!(results[0].0.as_slice(), &[1.0]);
        assert_eq!(results[0].1, 0);
        assert_eq!(results[1].0.as_slice(), &[21.0]);
        assert_eq!(results[1].1, 1);
    }

    #[test]
    fn reduce_scatter_zeros() {
        let results = run_ranks(4, |mut comm| {
            let x = DenseTensor::zeros(16);
            reduce_scatter_halving(&mut comm, &x).unwrap().0
        });
        for seg in results {
            assert_eq!(seg.as_slice(), &[0.0; 4]);
        }
    }

    #[test]
    fn reduce_scatter_matches_direct_sum_oracle() {
        let p = 4;
        let len = 64;
        let inputs: Vec<Vec<f32>> = (0..p)
            .map(|r| {
                let mut rng = Rng::new(r as u64 + 40);
                let mut v = vec![0.0f32; len];
                rng.fill_normal(&mut v);
                v
            })
            .collect();
        let oracle: Vec<f64> = (0..len)
            .map(|i| inputs.iter().map(|v| v[i] as f64).sum())
            .collect();

        let inputs_for_ranks = inputs.clone();
        let results = run_ranks(p, move |mut comm| {
            let x = DenseTensor::from_vec(inputs_for_ranks[comm.rank()].clone());
            reduce_scatter_halving(&mut comm, &x).unwrap()
        });
        for (segment, offset) in results {
            for (i, &v) in segment.as_slice().iter().enumerate() {
                let want = oracle[offset + i];
                assert!(
                    (v as f64 - want).abs() <= 1e-5 * want.abs().max(1.0),
                    "segment[{i}] = {v}, oracle {want}"
                );
            }
        }
    }

    #[test]
    fn allreduce_two_ranks_concrete() {
        let results = run_ranks(2, |mut comm| {
            let x = if comm.rank() == 0 {
                DenseTensor::from_vec(vec![1.0, 2.0])
            } else {
                DenseTensor::from_vec(vec![3.0, 4.0])
            };
            allreduce_dense(&mut comm, &x).unwrap()
        });
        for r in results {
            assert_eq!(r.as_slice(), &[4.0, 6.0]);
        }
    }

    #[test]
    fn allreduce_identical_inputs_scale_by_p() {
        let results = run_ranks(4, |mut comm| {
            let x = DenseTensor::from_vec(vec![0.5, -1.0, 2.0, 0.0, 1.25, 3.0, -0.5, 0.75]);
            allreduce_dense(&mut comm, &x).unwrap()
        });
        for r in results {
            assert_eq!(r.as_slice(), &[2.0, -4.0, 8.0, 0.0, 5.0, 12.0, -2.0, 3.0]);
        }
    }

    #[test]
    fn allreduce_p8_oracle_steps_and_agreement() {
        let p = 8;
        let len = 128;
        let inputs: Vec<Vec<f32>> = (0..p)
            .map(|r| {
                let mut rng = Rng::new(r as u64 + 500);
                let mut v = vec![0.0f32; len];
                rng.fill_normal(&mut v);
                v
            })
            .collect();
        let oracle: Vec<f64> = (0..len)
            .map(|i| inputs.iter().map(|v| v[i] as f64).sum())
            .collect();

        let inputs_for_ranks = inputs.clone();
        let results = run_ranks(p, move |mut comm| {
            let x = DenseTensor::from_vec(inputs_for_ranks[comm.rank()].clone());
            let before = comm.stats();
            let r = allreduce_dense(&mut comm, &x).unwrap();
            (r, comm.stats().delta_since(&before))
        });

        let first_bits: Vec<u32> = results[0]
            .0
            .as_slice()
            .iter()
            .map(|v| v.to_bits())
            .collect();
        for (r, delta) in &results {
            assert_eq!(delta.steps, 6, "2 lg 8 steps");
            let bits: Vec<u32> = r.as_slice().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits, first_bits, "ranks disagree bitwise");
            for (i, &v) in r.as_slice().iter().enumerate() {
                assert!((v as f64 - oracle[i]).abs() <= 1e-5 * oracle[i].abs().max(1.0));
            }
        }
    }

    #[test]
    fn allreduce_bytes_match_closed_form() {
        let p = 4;
        let len = 64; // divisible by p: no padding slack
        let results = run_ranks(p, move |mut comm| {
            let x = DenseTensor::from_vec(vec![1.0; len]);
            let before = comm.stats();
            allreduce_dense(&mut comm, &x).unwrap();
            comm.stats().delta_since(&before)
        });
        let expected = (2 * (p - 1) * len * 4 / p) as u64;
        for delta in results {
            assert_eq!(delta.bytes_sent, expected);
        }
    }

    #[test]
    fn allreduce_padding_when_not_divisible() {
        let results = run_ranks(4, |mut comm| {
            let r = comm.rank() as f32;
            let x = DenseTensor::from_vec(vec![r + 1.0; 7]);
            allreduce_dense(&mut comm, &x).unwrap()
        });
        for r in results {
            assert_eq!(r.len(), 7);
            assert_eq!(r.as_slice(), &[10.0; 7]);
        }
    }

    #[test]
    fn sparse_gather_equals_dense_allreduce_of_decompressed() {
        // Scatter-adding all gathered messages into zeros must equal the
        // dense allreduce over the per-rank decompressed tensors.
        let p = 4;
        let len = 32;
        let per_rank: Vec<(Vec<u32>, Vec<f32>)> = (0..p)
            .map(|r| {
                let idx: Vec<u32> = vec![r as u32, (r + 5) as u32, (r + 20) as u32];
                let val: Vec<f32> = idx.iter().map(|&i| i as f32 * 0.5 + r as f32).collect();
                (idx, val)
            })
            .collect();

        let per_rank_clone = per_rank.clone();
        let results = run_ranks(p, move |mut comm| {
            let (idx, val) = per_rank_clone[comm.rank()].clone();
            let msg = SparseMessage::dense(idx, val).unwrap();
            let gathered = allgather_sparse(&mut comm, &msg).unwrap();
            let mut acc = DenseTensor::zeros(len);
            for m in &gathered {
                codec::decompress_apply(&mut acc, m, 1.0).unwrap();
            }
            acc
        });

        let dense_results = run_ranks(p, move |mut comm| {
            let (idx, val) = per_rank[comm.rank()].clone();
            let mut dense = DenseTensor::zeros(len);
            crate::tensor::scatter_add(&mut dense, &idx, &val, 1.0).unwrap();
            allreduce_dense(&mut comm, &dense).unwrap()
        });

        for (sparse_acc, dense_acc) in results.iter().zip(&dense_results) {
            for (a, b) in sparse_acc.as_slice().iter().zip(dense_acc.as_slice()) {
                assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn world_size_one_collectives_are_identity() {
        let results = run_ranks(1, |mut comm| {
            let x = DenseTensor::from_vec(vec![1.0, 2.0, 3.0]);
            let sum = allreduce_dense(&mut comm, &x).unwrap();
            let gathered = allgather_sparse(&mut comm, &SparseMessage::empty_dense()).unwrap();
            (sum, gathered.len(), comm.stats())
        });
        let (sum, count, stats) = &results[0];
        assert_eq!(sum.as_slice(), &[1.0, 2.0, 3.0]);
        assert_eq!(*count, 1);
        assert_eq!(stats.steps, 0);
        assert_eq!(stats.bytes_sent, 0);
    }
}
