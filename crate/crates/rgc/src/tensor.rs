//! Flat dense tensors and the handful of primitives the compression
//! pipeline needs: axpy, sparse scatter-add, and an L2 norm.
//!
//! Accumulations (norms, sums, means) run in f64 and round to f32 once at
//! the end, so results do not drift with platform-specific vectorization.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TensorError {
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("index {index} out of range for tensor of length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("indices not strictly increasing at position {position}")]
    UnsortedIndices { position: usize },
    #[error("operation requires a non-empty tensor")]
    Empty,
}

/// A flat, contiguous array of f32 values. Gradients, residuals and
/// weights are all layer-scoped tensors of this shape.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    data: Vec<f32>,
}

impl DenseTensor {
    pub fn zeros(len: usize) -> Self {
        DenseTensor {
            data: vec![0.0; len],
        }
    }

    pub fn from_vec(data: Vec<f32>) -> Self {
        DenseTensor { data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    pub fn fill(&mut self, value: f32) {
        self.data.fill(value);
    }

    /// True iff every element is finite.
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Scales every element in place.
    pub fn scale(&mut self, factor: f32) {
        for v in &mut self.data {
            *v *= factor;
        }
    }

    /// `self[i] += alpha * x[i]` in place.
    pub fn add_scaled(&mut self, alpha: f32, x: &DenseTensor) -> Result<(), TensorError> {
        if x.len() != self.len() {
            return Err(TensorError::LengthMismatch {
                expected: self.len(),
                got: x.len(),
            });
        }
        for (dst, src) in self.data.iter_mut().zip(&x.data) {
            *dst += alpha * src;
        }
        Ok(())
    }
}

impl std::ops::Index<usize> for DenseTensor {
    type Output = f32;
    fn index(&self, i: usize) -> &f32 {
        &self.data[i]
    }
}

impl std::ops::IndexMut<usize> for DenseTensor {
    fn index_mut(&mut self, i: usize) -> &mut f32 {
        &mut self.data[i]
    }
}

/// Returns `alpha * x + y` as a new tensor.
pub fn axpy(alpha: f32, x: &DenseTensor, y: &DenseTensor) -> Result<DenseTensor, TensorError> {
    if x.len() != y.len() {
        return Err(TensorError::LengthMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    let data = x
        .as_slice()
        .iter()
        .zip(y.as_slice())
        .map(|(&xv, &yv)| alpha * xv + yv)
        .collect();
    Ok(DenseTensor::from_vec(data))
}

fn check_indices(indices: &[u32], dst_len: usize) -> Result<(), TensorError> {
    let mut prev: Option<u32> = None;
    for (pos, &idx) in indices.iter().enumerate() {
        if let Some(p) = prev {
            if idx <= p {
                return Err(TensorError::UnsortedIndices { position: pos });
            }
        }
        if idx as usize >= dst_len {
            return Err(TensorError::IndexOutOfRange {
                index: idx as usize,
                len: dst_len,
            });
        }
        prev = Some(idx);
    }
    Ok(())
}

/// `dst[indices[j]] += scale * values[j]`; other positions untouched.
/// Indices must be strictly increasing and in range.
pub fn scatter_add(
    dst: &mut DenseTensor,
    indices: &[u32],
    values: &[f32],
    scale: f32,
) -> Result<(), TensorError> {
    if indices.len() != values.len() {
        return Err(TensorError::LengthMismatch {
            expected: indices.len(),
            got: values.len(),
        });
    }
    check_indices(indices, dst.len())?;
    let data = dst.as_mut_slice();
    for (&idx, &val) in indices.iter().zip(values) {
        data[idx as usize] += scale * val;
    }
    Ok(())
}

/// `dst[indices[j]] += scale * value` for every index: the single repeated
/// value form used when a message carries one quantized mean.
pub fn scatter_add_uniform(
    dst: &mut DenseTensor,
    indices: &[u32],
    value: f32,
    scale: f32,
) -> Result<(), TensorError> {
    check_indices(indices, dst.len())?;
    let add = scale * value;
    let data = dst.as_mut_slice();
    for &idx in indices {
        data[idx as usize] += add;
    }
    Ok(())
}

/// Euclidean norm, accumulated in f64.
pub fn l2_norm(x: &DenseTensor) -> f32 {
    let sum: f64 = x.as_slice().iter().map(|&v| v as f64 * v as f64).sum();
    sum.sqrt() as f32
}

/// Euclidean norm over a list of tensors treated as one concatenated vector.
pub fn l2_norm_all(xs: &[DenseTensor]) -> f32 {
    let sum: f64 = xs
        .iter()
        .flat_map(|t| t.as_slice())
        .map(|&v| v as f64 * v as f64)
        .sum();
    sum.sqrt() as f32
}

/// FNV-1a over the raw bit patterns; used to cross-check replica equality.
pub fn bits_hash(tensors: &[DenseTensor]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for t in tensors {
        for &v in t.as_slice() {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn axpy_basic() {
        let x = DenseTensor::from_vec(vec![1.0, 2.0]);
        let y = DenseTensor::from_vec(vec![3.0, 4.0]);
        assert_eq!(axpy(1.0, &x, &y).unwrap().as_slice(), &[4.0, 6.0]);
    }

    #[test]
    fn axpy_zero_alpha_is_identity() {
        let x = DenseTensor::from_vec(vec![9.0, -3.0, 7.5]);
        let y = DenseTensor::from_vec(vec![0.25, 1.0, -2.0]);
        assert_eq!(axpy(0.0, &x, &y).unwrap(), y);
    }

    #[test]
    fn axpy_cancels() {
        let x = DenseTensor::from_vec(vec![5.0]);
        assert_eq!(axpy(-1.0, &x, &x).unwrap().as_slice(), &[0.0]);
    }

    #[test]
    fn axpy_length_mismatch() {
        let x = DenseTensor::zeros(2);
        let y = DenseTensor::zeros(3);
        assert!(matches!(
            axpy(1.0, &x, &y),
            Err(TensorError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn scatter_add_basic() {
        let mut dst = DenseTensor::zeros(3);
        scatter_add(&mut dst, &[1], &[5.0], 1.0).unwrap();
        assert_eq!(dst.as_slice(), &[0.0, 5.0, 0.0]);
    }

    #[test]
    fn scatter_add_negative_scale() {
        let mut dst = DenseTensor::from_vec(vec![1.0, 1.0]);
        scatter_add(&mut dst, &[0, 1], &[1.0, 1.0], -1.0).unwrap();
        assert_eq!(dst.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn scatter_add_rejects_out_of_range() {
        let mut dst = DenseTensor::zeros(3);
        let err = scatter_add(&mut dst, &[3], &[1.0], 1.0).unwrap_err();
        assert_eq!(err, TensorError::IndexOutOfRange { index: 3, len: 3 });
    }

    #[test]
    fn scatter_add_rejects_unsorted() {
        let mut dst = DenseTensor::zeros(4);
        let err = scatter_add(&mut dst, &[2, 1], &[1.0, 1.0], 1.0).unwrap_err();
        assert_eq!(err, TensorError::UnsortedIndices { position: 1 });
        // Duplicates count as non-increasing.
        let err = scatter_add(&mut dst, &[1, 1], &[1.0, 1.0], 1.0).unwrap_err();
        assert_eq!(err, TensorError::UnsortedIndices { position: 1 });
    }

    // Full-index scatter_add must match dense axpy exactly.
    #[test]
    fn scatter_add_full_index_equals_axpy() {
        let mut rng = Rng::new(17);
        let mut v = vec![0.0f32; 8];
        rng.fill_normal(&mut v);
        let values = DenseTensor::from_vec(v.clone());
        let indices: Vec<u32> = (0..8).collect();

        let mut via_scatter = DenseTensor::zeros(8);
        scatter_add(&mut via_scatter, &indices, &v, 1.0).unwrap();
        let via_axpy = axpy(1.0, &values, &DenseTensor::zeros(8)).unwrap();
        assert_eq!(via_scatter, via_axpy);
    }

    #[test]
    fn scatter_add_uniform_matches_repeated_value() {
        let mut rng = Rng::new(23);
        let mut base = vec![0.0f32; 32];
        rng.fill_normal(&mut base);
        let indices = [1u32, 4, 9, 30];

        let mut a = DenseTensor::from_vec(base.clone());
        scatter_add_uniform(&mut a, &indices, 0.75, 2.0).unwrap();
        let mut b = DenseTensor::from_vec(base);
        scatter_add(&mut b, &indices, &[0.75; 4], 2.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn l2_norm_three_four_five() {
        let x = DenseTensor::from_vec(vec![3.0, 4.0]);
        assert_eq!(l2_norm(&x), 5.0);
    }

    #[test]
    fn l2_norm_zeros() {
        assert_eq!(l2_norm(&DenseTensor::zeros(100)), 0.0);
    }

    // Random tensor against a straightforward f64 summation oracle.
    #[test]
    fn l2_norm_matches_f64_oracle() {
        let mut rng = Rng::new(5);
        let mut v = vec![0.0f32; 10_000];
        rng.fill_normal(&mut v);
        let x = DenseTensor::from_vec(v.clone());

        let mut oracle = 0.0f64;
        for &e in &v {
            oracle += (e as f64) * (e as f64);
        }
        let oracle = oracle.sqrt();
        let got = l2_norm(&x) as f64;
        assert!(
            ((got - oracle) / oracle).abs() < 1e-5,
            "got {got}, oracle {oracle}"
        );
    }

    #[test]
    fn deterministic_given_seed() {
        let run = || {
            let mut rng = Rng::new(99);
            let mut v = vec![0.0f32; 256];
            rng.fill_normal(&mut v);
            let mut t = DenseTensor::from_vec(v);
            t.scale(0.5);
            let other = t.clone();
            t.add_scaled(1.5, &other).unwrap();
            bits_hash(&[t])
        };
        assert_eq!(run(), run());
    }
}
