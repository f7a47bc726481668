//! Desk-scale multi-layer perceptron with exact analytic gradients.
//!
//! Parameters are exposed as an ordered list of flat layer tensors
//! (weight, bias, weight, bias, ...) so the trainer can treat them
//! uniformly: accumulate residuals per tensor, compress per tensor,
//! update per tensor.

use crate::rng::Rng;
use crate::tensor::DenseTensor;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("batch features length {got} is not a multiple of input dim {input_dim}")]
    BadBatchShape { got: usize, input_dim: usize },
    #[error("batch has {inputs} samples but {targets} targets")]
    TargetMismatch { inputs: usize, targets: usize },
    #[error("label {label} out of range for {classes} outputs")]
    LabelOutOfRange { label: u32, classes: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, z: f32) -> f32 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output.
    fn grad_from_output(self, a: f32) -> f32 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    SoftmaxCrossEntropy,
    MeanSquaredError,
}

/// Supervision for one batch: class labels for cross-entropy, dense target
/// rows for squared error.
#[derive(Debug, Clone, Copy)]
pub enum Targets<'a> {
    Labels(&'a [u32]),
    Values(&'a [f32]),
}

#[derive(Debug, Clone, Copy)]
struct LayerSpec {
    in_dim: usize,
    out_dim: usize,
    activation: Activation,
}

/// Name and compression policy of one parameter tensor.
#[derive(Debug, Clone)]
pub struct ParamMeta {
    pub name: String,
    pub len: usize,
    /// The output layer is never quantized so class scores stay exact.
    pub quantize_allowed: bool,
}

#[derive(Debug, Clone)]
pub struct MlpModel {
    specs: Vec<LayerSpec>,
    loss: Loss,
    /// weight, bias, weight, bias, ... — weights row-major `(out, in)`.
    params: Vec<DenseTensor>,
}

impl MlpModel {
    /// Builds a model with `dims = [input, hidden..., output]`, hidden
    /// activations as given, identity output. Weights start at
    /// N(0, 1/in_dim), biases at zero.
    pub fn new(dims: &[usize], hidden_activation: Activation, loss: Loss, rng: &mut Rng) -> Self {
        assert!(dims.len() >= 2, "need at least input and output dims");
        let mut specs = Vec::new();
        let mut params = Vec::new();
        for l in 0..dims.len() - 1 {
            let (in_dim, out_dim) = (dims[l], dims[l + 1]);
            let activation = if l + 2 == dims.len() {
                Activation::Identity
            } else {
                hidden_activation
            };
            specs.push(LayerSpec {
                in_dim,
                out_dim,
                activation,
            });
            let scale = 1.0 / (in_dim as f64).sqrt();
            let mut w = vec![0.0f32; in_dim * out_dim];
            for v in &mut w {
                *v = (rng.next_normal() * scale) as f32;
            }
            params.push(DenseTensor::from_vec(w));
            params.push(DenseTensor::zeros(out_dim));
        }
        MlpModel {
            specs,
            loss,
            params,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.specs[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.specs.last().unwrap().out_dim
    }

    pub fn params(&self) -> &[DenseTensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [DenseTensor] {
        &mut self.params
    }

    pub fn param_metas(&self) -> Vec<ParamMeta> {
        let last_layer = self.specs.len() - 1;
        let mut metas = Vec::new();
        for (l, spec) in self.specs.iter().enumerate() {
            let output_layer = l == last_layer;
            metas.push(ParamMeta {
                name: format!("layer{l}.weight"),
                len: spec.in_dim * spec.out_dim,
                quantize_allowed: !output_layer,
            });
            metas.push(ParamMeta {
                name: format!("layer{l}.bias"),
                len: spec.out_dim,
                quantize_allowed: !output_layer,
            });
        }
        metas
    }

    /// Zero tensors shaped like the parameter list.
    pub fn zeros_like_params(&self) -> Vec<DenseTensor> {
        self.params
            .iter()
            .map(|p| DenseTensor::zeros(p.len()))
            .collect()
    }

    fn batch_size(&self, inputs: &[f32]) -> Result<usize, ModelError> {
        let d = self.input_dim();
        if inputs.is_empty() || !inputs.len().is_multiple_of(d) {
            return Err(ModelError::BadBatchShape {
                got: inputs.len(),
                input_dim: d,
            });
        }
        Ok(inputs.len() / d)
    }

    /// Forward pass returning all layer activations per sample
    /// (`acts[l]` has shape `(batch, out_dim_l)` flattened).
    fn forward_acts(&self, inputs: &[f32], batch: usize) -> Vec<Vec<f32>> {
        let mut acts: Vec<Vec<f32>> = Vec::with_capacity(self.specs.len());
        for (l, spec) in self.specs.iter().enumerate() {
            let prev: &[f32] = if l == 0 { inputs } else { &acts[l - 1] };
            let w = self.params[2 * l].as_slice();
            let b = self.params[2 * l + 1].as_slice();
            let mut out = vec![0.0f32; batch * spec.out_dim];
            for s in 0..batch {
                let x = &prev[s * spec.in_dim..(s + 1) * spec.in_dim];
                for o in 0..spec.out_dim {
                    let row = &w[o * spec.in_dim..(o + 1) * spec.in_dim];
                    let mut z = b[o];
                    for (wv, xv) in row.iter().zip(x) {
                        z += wv * xv;
                    }
                    out[s * spec.out_dim + o] = spec.activation.apply(z);
                }
            }
            acts.push(out);
        }
        acts
    }

    /// Logits (final activations) for a batch.
    pub fn forward(&self, inputs: &[f32]) -> Result<Vec<f32>, ModelError> {
        let batch = self.batch_size(inputs)?;
        Ok(self.forward_acts(inputs, batch).pop().unwrap())
    }

    /// Forward and backward over one batch.
    ///
    /// Returns the summed per-sample loss and the gradient of that sum with
    /// respect to every parameter tensor (same order as `params()`). The
    /// caller divides by the global batch size to recover mean-gradient
    /// SGD semantics.
    pub fn forward_backward(
        &self,
        inputs: &[f32],
        targets: Targets<'_>,
    ) -> Result<(f64, Vec<DenseTensor>), ModelError> {
        let batch = self.batch_size(inputs)?;
        let out_dim = self.output_dim();
        match targets {
            Targets::Labels(labels) => {
                if labels.len() != batch {
                    return Err(ModelError::TargetMismatch {
                        inputs: batch,
                        targets: labels.len(),
                    });
                }
                for &l in labels {
                    if l as usize >= out_dim {
                        return Err(ModelError::LabelOutOfRange {
                            label: l,
                            classes: out_dim,
                        });
                    }
                }
            }
            Targets::Values(values) => {
                if values.len() != batch * out_dim {
                    return Err(ModelError::TargetMismatch {
                        inputs: batch,
                        targets: values.len() / out_dim.max(1),
                    });
                }
            }
        }

        let acts = self.forward_acts(inputs, batch);
        let logits = acts.last().unwrap();

        // dL/d(final activation) and the summed loss.
        let mut loss_sum = 0.0f64;
        let mut delta = vec![0.0f32; batch * out_dim];
        match (self.loss, targets) {
            (Loss::SoftmaxCrossEntropy, Targets::Labels(labels)) => {
                for s in 0..batch {
                    let row = &logits[s * out_dim..(s + 1) * out_dim];
                    let max = row.iter().fold(f32::NEG_INFINITY, |a, &b| a.max(b));
                    let mut denom = 0.0f64;
                    for &z in row {
                        denom += ((z - max) as f64).exp();
                    }
                    let label = labels[s] as usize;
                    let log_p = (row[label] - max) as f64 - denom.ln();
                    loss_sum -= log_p;
                    for o in 0..out_dim {
                        let p = (((row[o] - max) as f64).exp() / denom) as f32;
                        delta[s * out_dim + o] = p - if o == label { 1.0 } else { 0.0 };
                    }
                }
            }
            (Loss::MeanSquaredError, Targets::Values(values)) => {
                for (i, (&y_hat, &y)) in logits.iter().zip(values).enumerate() {
                    let d = y_hat - y;
                    loss_sum += (d as f64) * (d as f64);
                    delta[i] = 2.0 * d;
                }
            }
            (Loss::SoftmaxCrossEntropy, Targets::Values(_)) => {
                return Err(ModelError::TargetMismatch {
                    inputs: batch,
                    targets: 0,
                })
            }
            (Loss::MeanSquaredError, Targets::Labels(labels)) => {
                // One-hot targets for squared error over class scores.
                let mut values = vec![0.0f32; batch * out_dim];
                for (s, &l) in labels.iter().enumerate() {
                    values[s * out_dim + l as usize] = 1.0;
                }
                return self.forward_backward(inputs, Targets::Values(&values));
            }
        }

        // Backpropagate: delta holds dL/d(activation) of the current layer.
        let mut grads = self.zeros_like_params();
        for l in (0..self.specs.len()).rev() {
            let spec = &self.specs[l];
            let a = &acts[l];
            // dL/dz = dL/da * act'(a)
            for (d, &av) in delta.iter_mut().zip(a.iter()) {
                *d *= spec.activation.grad_from_output(av);
            }

            let prev: &[f32] = if l == 0 { inputs } else { &acts[l - 1] };
            {
                let (gw, gb) = grads.split_at_mut(2 * l + 1);
                let dw = gw[2 * l].as_mut_slice();
                let db = gb[0].as_mut_slice();
                for s in 0..batch {
                    let d_row = &delta[s * spec.out_dim..(s + 1) * spec.out_dim];
                    let x = &prev[s * spec.in_dim..(s + 1) * spec.in_dim];
                    for o in 0..spec.out_dim {
                        let d = d_row[o];
                        db[o] += d;
                        let w_row = &mut dw[o * spec.in_dim..(o + 1) * spec.in_dim];
                        for (wv, xv) in w_row.iter_mut().zip(x) {
                            *wv += d * xv;
                        }
                    }
                }
            }

            if l > 0 {
                let w = self.params[2 * l].as_slice();
                let mut next_delta = vec![0.0f32; batch * spec.in_dim];
                for s in 0..batch {
                    let d_row = &delta[s * spec.out_dim..(s + 1) * spec.out_dim];
                    let out = &mut next_delta[s * spec.in_dim..(s + 1) * spec.in_dim];
                    for o in 0..spec.out_dim {
                        let d = d_row[o];
                        let w_row = &w[o * spec.in_dim..(o + 1) * spec.in_dim];
                        for (dst, wv) in out.iter_mut().zip(w_row) {
                            *dst += d * wv;
                        }
                    }
                }
                delta = next_delta;
            }
        }

        Ok((loss_sum, grads))
    }

    /// Mean per-sample loss and classification accuracy over a labeled set.
    pub fn evaluate(&self, inputs: &[f32], labels: &[u32]) -> Result<(f64, f64), ModelError> {
        let batch = self.batch_size(inputs)?;
        if labels.len() != batch {
            return Err(ModelError::TargetMismatch {
                inputs: batch,
                targets: labels.len(),
            });
        }
        let out_dim = self.output_dim();
        let logits = self.forward(inputs)?;
        let mut loss_sum = 0.0f64;
        let mut correct = 0usize;
        for s in 0..batch {
            let row = &logits[s * out_dim..(s + 1) * out_dim];
            let label = labels[s] as usize;
            let max = row.iter().fold(f32::NEG_INFINITY, |a, &b| a.max(b));
            match self.loss {
                Loss::SoftmaxCrossEntropy => {
                    let mut denom = 0.0f64;
                    for &z in row {
                        denom += ((z - max) as f64).exp();
                    }
                    loss_sum -= (row[label] - max) as f64 - denom.ln();
                }
                Loss::MeanSquaredError => {
                    for (o, &z) in row.iter().enumerate() {
                        let y = if o == label { 1.0 } else { 0.0 };
                        loss_sum += ((z - y) as f64).powi(2);
                    }
                }
            }
            let argmax = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .unwrap();
            if argmax == label {
                correct += 1;
            }
        }
        Ok((loss_sum / batch as f64, correct as f64 / batch as f64))
    }
}
