//! Multinomial logistic regression and tanh MLPs with analytic gradients.
//!
//! Parameters are stored flat, layer by layer: the `out x in` weight matrix
//! (row-major) followed by the `out` biases. Logistic regression is the
//! zero-hidden-layer case, so `q = d C + C`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phy::{MvDecision, Sign, SignVector};
use crate::rng::RandomStream;

use super::Dataset;

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "arch", rename_all = "lowercase", deny_unknown_fields)]
pub enum Arch {
    #[default]
    Logistic,
    Mlp {
        hidden: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector(Vec<f64>);

impl GradientVector {
    pub fn new(g: Vec<f64>) -> Self {
        GradientVector(g)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    w: Vec<f64>,
    arch: Arch,
    /// Layer widths from input to logits.
    widths: Vec<usize>,
}

impl Model {
    /// All-zero parameters.
    pub fn zeros(arch: Arch, dim: usize, num_classes: usize) -> Result<Self> {
        if dim == 0 || num_classes == 0 {
            return Err(Error::usage("model needs dim >= 1 and num_classes >= 1"));
        }
        let mut widths = vec![dim];
        if let Arch::Mlp { hidden } = &arch {
            if hidden.is_empty() || hidden.contains(&0) {
                return Err(Error::usage(
                    "mlp hidden sizes must be non-empty and positive",
                ));
            }
            widths.extend_from_slice(hidden);
        }
        widths.push(num_classes);
        let q = widths.windows(2).map(|w| w[1] * w[0] + w[1]).sum();
        Ok(Model {
            w: vec![0.0; q],
            arch,
            widths,
        })
    }

    /// Standard initialization: zeros for logistic regression, Glorot-uniform
    /// weights and zero biases for MLPs.
    pub fn init(
        arch: Arch,
        dim: usize,
        num_classes: usize,
        rng: &mut RandomStream,
    ) -> Result<Self> {
        let mut m = Model::zeros(arch, dim, num_classes)?;
        if matches!(m.arch, Arch::Mlp { .. }) {
            let mut offset = 0;
            for k in 0..m.widths.len() - 1 {
                let (fan_in, fan_out) = (m.widths[k], m.widths[k + 1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                for v in &mut m.w[offset..offset + fan_in * fan_out] {
                    *v = limit * (2.0 * rng.uniform() - 1.0);
                }
                offset += fan_in * fan_out + fan_out;
            }
        }
        Ok(m)
    }

    /// Every parameter uniform in `[-scale, scale]`.
    pub fn random(
        arch: Arch,
        dim: usize,
        num_classes: usize,
        scale: f64,
        rng: &mut RandomStream,
    ) -> Result<Self> {
        let mut m = Model::zeros(arch, dim, num_classes)?;
        for v in &mut m.w {
            *v = scale * (2.0 * rng.uniform() - 1.0);
        }
        Ok(m)
    }

    pub fn arch(&self) -> &Arch {
        &self.arch
    }

    pub fn num_params(&self) -> usize {
        self.w.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.w
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.w
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.widths.last().unwrap()
    }

    fn check_data(&self, data: &Dataset) -> Result<()> {
        if data.dim() != self.input_dim() || data.num_classes() != self.num_classes() {
            return Err(Error::usage(format!(
                "model expects {}-dim inputs and {} classes, dataset has {} and {}",
                self.input_dim(),
                self.num_classes(),
                data.dim(),
                data.num_classes()
            )));
        }
        Ok(())
    }

    /// Activations of every layer; the last entry holds the logits.
    fn forward(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let layers = self.widths.len() - 1;
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(layers + 1);
        acts.push(x.to_vec());
        let mut offset = 0;
        for k in 0..layers {
            let (n_in, n_out) = (self.widths[k], self.widths[k + 1]);
            let weights = &self.w[offset..offset + n_in * n_out];
            let bias = &self.w[offset + n_in * n_out..offset + n_in * n_out + n_out];
            let input = &acts[k];
            let mut z: Vec<f64> = (0..n_out)
                .map(|o| {
                    let row = &weights[o * n_in..(o + 1) * n_in];
                    row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>() + bias[o]
                })
                .collect();
            if k + 1 < layers {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(z);
            offset += n_in * n_out + n_out;
        }
        acts
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x).pop().unwrap()
    }

    /// Mean cross-entropy over `batch`.
    pub fn loss(&self, data: &Dataset, batch: &[usize]) -> Result<f64> {
        self.check_data(data)?;
        if batch.is_empty() {
            return Err(Error::usage("empty batch"));
        }
        let total: f64 = batch
            .iter()
            .map(|&i| cross_entropy(&self.logits(data.row(i)), data.label(i)).0)
            .sum();
        Ok(total / batch.len() as f64)
    }

    /// Mean cross-entropy and its gradient over `batch` (backpropagation).
    pub fn loss_and_grad(&self, data: &Dataset, batch: &[usize]) -> Result<(f64, Vec<f64>)> {
        self.check_data(data)?;
        if batch.is_empty() {
            return Err(Error::usage("empty batch"));
        }
        let layers = self.widths.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut acc = 0;
        for k in 0..layers {
            offsets.push(acc);
            acc += self.widths[k] * self.widths[k + 1] + self.widths[k + 1];
        }
        let mut grad = vec![0.0; self.w.len()];
        let mut total = 0.0;
        for &i in batch {
            let acts = self.forward(data.row(i));
            let (loss, probs) = cross_entropy(&acts[layers], data.label(i));
            total += loss;
            let mut delta = probs;
            delta[data.label(i)] -= 1.0;
            for k in (0..layers).rev() {
                let (n_in, n_out) = (self.widths[k], self.widths[k + 1]);
                let off = offsets[k];
                let input = &acts[k];
                for o in 0..n_out {
                    let d = delta[o];
                    if d != 0.0 {
                        let row = &mut grad[off + o * n_in..off + (o + 1) * n_in];
                        row.iter_mut().zip(input).for_each(|(g, a)| *g += d * a);
                    }
                    grad[off + n_in * n_out + o] += d;
                }
                if k > 0 {
                    let weights = &self.w[off..off + n_in * n_out];
                    delta = (0..n_in)
                        .map(|j| {
                            let back: f64 =
                                (0..n_out).map(|o| weights[o * n_in + j] * delta[o]).sum();
                            back * (1.0 - input[j] * input[j])
                        })
                        .collect();
                }
            }
        }
        let scale = 1.0 / batch.len() as f64;
        grad.iter_mut().for_each(|g| *g *= scale);
        Ok((total * scale, grad))
    }

    /// `w <- w - eta v` for a majority-vote direction.
    pub fn step_signs(&mut self, mv: &MvDecision, eta: f64) -> Result<()> {
        if mv.len() != self.w.len() {
            return Err(Error::usage(format!(
                "MV has {} coordinates, model has {}",
                mv.len(),
                self.w.len()
            )));
        }
        for (w, v) in self.w.iter_mut().zip(mv.votes()) {
            *w -= eta * v.value();
        }
        Ok(())
    }

    /// `w <- w - eta g`.
    pub fn step_gradient(&mut self, g: &[f64], eta: f64) -> Result<()> {
        if g.len() != self.w.len() {
            return Err(Error::usage("gradient length does not match model"));
        }
        for (w, d) in self.w.iter_mut().zip(g) {
            *w -= eta * d;
        }
        Ok(())
    }
}

/// Returns `(loss, softmax probabilities)`.
fn cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() + max - logits[label];
    (loss, exps.iter().map(|e| e / sum).collect())
}

/// Mean gradient over a batch of `batch_size` rows drawn uniformly with
/// replacement from `indices`.
pub fn local_gradient(
    model: &Model,
    data: &Dataset,
    indices: &[usize],
    batch_size: usize,
    rng: &mut RandomStream,
) -> Result<GradientVector> {
    if batch_size == 0 {
        return Err(Error::usage("batch size must be at least 1"));
    }
    if indices.is_empty() {
        return Err(Error::usage("node holds no samples"));
    }
    let batch: Vec<usize> = (0..batch_size)
        .map(|_| indices[rng.below(indices.len())])
        .collect();
    let (_, g) = model.loss_and_grad(data, &batch)?;
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite gradient".into()));
    }
    Ok(GradientVector(g))
}

/// Runs `steps` local SGD steps and returns the accumulated gradient; with
/// one step this is just [`local_gradient`].
pub fn local_update(
    model: &Model,
    data: &Dataset,
    indices: &[usize],
    batch_size: usize,
    steps: usize,
    eta: f64,
    rng: &mut RandomStream,
) -> Result<GradientVector> {
    if steps == 0 {
        return Err(Error::usage("local_steps must be at least 1"));
    }
    let first = local_gradient(model, data, indices, batch_size, rng)?;
    if steps == 1 {
        return Ok(first);
    }
    let mut local = model.clone();
    let mut acc = first.0;
    local.step_gradient(&acc, eta)?;
    for _ in 1..steps {
        let g = local_gradient(&local, data, indices, batch_size, rng)?;
        local.step_gradient(&g.0, eta)?;
        acc.iter_mut().zip(&g.0).for_each(|(a, b)| *a += b);
    }
    Ok(GradientVector(acc))
}

/// Per-coordinate sign with `sign(0) = +1`.
pub fn sign_quantize(g: &GradientVector) -> Result<SignVector> {
    g.0.iter()
        .map(|&x| Sign::of(x))
        .collect::<Result<Vec<_>>>()
        .map(SignVector::new)
}

pub fn apply_mv_update(model: &Model, mv: &MvDecision, eta: f64) -> Result<Model> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::usage("learning rate must be positive"));
    }
    let mut next = model.clone();
    next.step_signs(mv, eta)?;
    Ok(next)
}

/// Mean cross-entropy and top-1 accuracy over the full dataset.
pub fn evaluate(model: &Model, data: &Dataset) -> Result<(f64, f64)> {
    model.check_data(data)?;
    // Fixed-size blocks reduced in order keep the sum independent of threads.
    const BLOCK: usize = 512;
    let blocks: Vec<usize> = (0..data.len().div_ceil(BLOCK)).collect();
    let partial: Vec<(f64, usize)> = blocks
        .par_iter()
        .map(|&b| {
            let mut loss = 0.0;
            let mut correct = 0usize;
            for i in b * BLOCK..((b + 1) * BLOCK).min(data.len()) {
                let logits = model.logits(data.row(i));
                loss += cross_entropy(&logits, data.label(i)).0;
                let mut best = 0;
                for (k, z) in logits.iter().enumerate() {
                    if *z > logits[best] {
                        best = k;
                    }
                }
                if best == data.label(i) {
                    correct += 1;
                }
            }
            (loss, correct)
        })
        .collect();
    let (loss, correct) = partial
        .into_iter()
        .fold((0.0, 0), |(l, c), (bl, bc)| (l + bl, c + bc));
    let n = data.len() as f64;
    Ok((loss / n, correct as f64 / n))
}
