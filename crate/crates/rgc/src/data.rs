//! Datasets and deterministic sharding.
//!
//! Workloads are desk-scale: synthetic gaussian class blobs or a CSV table
//! (header row, float feature columns, integer label in the last column).
//! Sharding shuffles one global permutation per epoch from the seed and
//! deals disjoint batch slices to the workers, so every worker can derive
//! its own stream without coordination.

use crate::rng::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("dataset is empty")]
    Empty,
    #[error("csv line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A labeled dataset in row-major feature layout.
#[derive(Debug, Clone)]
pub struct Dataset {
    features: Vec<f32>,
    labels: Vec<u32>,
    dim: usize,
    classes: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn feature_row(&self, i: usize) -> &[f32] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    /// Two opposed gaussian blobs per class pair: class means sit at
    /// `+/- separation/2` along a random unit direction (multi-class uses
    /// one random direction per class), unit noise around them.
    pub fn gaussian_blobs(
        n: usize,
        dim: usize,
        classes: usize,
        separation: f32,
        seed: u64,
    ) -> Dataset {
        assert!(n > 0 && dim > 0 && classes >= 2);
        let mut rng = Rng::new(seed);

        let mut means = vec![vec![0.0f32; dim]; classes];
        if classes == 2 {
            let mut direction = vec![0.0f32; dim];
            rng.fill_normal(&mut direction);
            let norm = (direction.iter().map(|&v| (v as f64).powi(2)).sum::<f64>()).sqrt() as f32;
            let half: Vec<f32> = direction
                .iter()
                .map(|d| d / norm * separation / 2.0)
                .collect();
            means[1] = half.iter().map(|v| -v).collect();
            means[0] = half;
        } else {
            for mean in means.iter_mut() {
                let mut direction = vec![0.0f32; dim];
                rng.fill_normal(&mut direction);
                let norm =
                    (direction.iter().map(|&v| (v as f64).powi(2)).sum::<f64>()).sqrt() as f32;
                for (j, d) in direction.iter().enumerate() {
                    mean[j] = d / norm * separation / 2.0;
                }
            }
        }

        let mut features = Vec::with_capacity(n * dim);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let class = i % classes;
            for &m in &means[class] {
                features.push(m + rng.next_normal() as f32);
            }
            labels.push(class as u32);
        }
        Dataset {
            features,
            labels,
            dim,
            classes,
        }
    }

    /// Parses a CSV file: header row, f32 feature columns, integer label
    /// in the last column.
    pub fn from_csv(text: &str) -> Result<Dataset, DataError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(DataError::Empty)?;
        let columns = header.split(',').count();
        if columns < 2 {
            return Err(DataError::Csv {
                line: 1,
                message: "need at least one feature column and a label column".into(),
            });
        }
        let dim = columns - 1;

        let mut features = Vec::new();
        let mut labels = Vec::new();
        let mut max_label = 0u32;
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != columns {
                return Err(DataError::Csv {
                    line: idx + 1,
                    message: format!("expected {columns} fields, got {}", fields.len()),
                });
            }
            for field in &fields[..dim] {
                let v: f32 = field.trim().parse().map_err(|e| DataError::Csv {
                    line: idx + 1,
                    message: format!("bad feature {field:?}: {e}"),
                })?;
                features.push(v);
            }
            let label: u32 = fields[dim].trim().parse().map_err(|e| DataError::Csv {
                line: idx + 1,
                message: format!("bad label {:?}: {e}", fields[dim]),
            })?;
            max_label = max_label.max(label);
            labels.push(label);
        }
        if labels.is_empty() {
            return Err(DataError::Empty);
        }
        Ok(Dataset {
            features,
            labels,
            dim,
            classes: max_label as usize + 1,
        })
    }

    pub fn from_csv_path(path: &std::path::Path) -> Result<Dataset, DataError> {
        Dataset::from_csv(&std::fs::read_to_string(path)?)
    }

    /// Flattened features and labels for a list of sample indices.
    pub fn gather(&self, indices: &[usize]) -> (Vec<f32>, Vec<u32>) {
        let mut feats = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            feats.extend_from_slice(self.feature_row(i));
            labels.push(self.labels[i]);
        }
        (feats, labels)
    }
}

/// Deterministic epoch-shuffled batch plan shared by all workers.
#[derive(Debug, Clone)]
pub struct ShardPlan {
    n: usize,
    world: usize,
    batch: usize,
    seed: u64,
    steps_per_epoch: usize,
}

impl ShardPlan {
    pub fn new(n: usize, world: usize, batch: usize, seed: u64) -> ShardPlan {
        assert!(n > 0 && world > 0 && batch > 0);
        ShardPlan {
            n,
            world,
            batch,
            seed,
            steps_per_epoch: (n / (world * batch)).max(1),
        }
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.steps_per_epoch
    }

    pub fn epoch_of_step(&self, step: usize) -> usize {
        step / self.steps_per_epoch
    }

    fn permutation(&self, epoch: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.n).collect();
        let mut rng = Rng::new(self.seed).fork(epoch as u64 + 1);
        rng.shuffle(&mut order);
        order
    }

    /// Sample indices for `rank` at global `step`. Slices a fresh epoch
    /// permutation; wraps modulo n only when `world*batch` exceeds the
    /// dataset.
    pub fn batch_indices(&self, rank: usize, step: usize) -> Vec<usize> {
        assert!(rank < self.world);
        let epoch = self.epoch_of_step(step);
        let within = step % self.steps_per_epoch;
        let order = self.permutation(epoch);
        let start = (within * self.world + rank) * self.batch;
        (0..self.batch)
            .map(|j| order[(start + j) % self.n])
            .collect()
    }
}
