//! Client-side predictors: multinomial logistic regression and a one-hidden-layer
//! tanh MLP, both trained with softmax cross-entropy and exact analytic gradients.
//!
//! Parameter layout (flat, row-major):
//! - logistic: `W[C×D]`, `b[C]`
//! - mlp: `W1[H×D]`, `b1[H]`, `W2[C×H]`, `b2[C]`

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::Batch;
use crate::error::{FlError, Result};
use crate::params::ParameterVector;
use crate::seed::rng_from;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    LogisticRegression,
    MlpOneHidden,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub input_dim: usize,
    /// Ignored for logistic regression.
    #[serde(default = "default_hidden")]
    pub hidden_dim: usize,
    pub num_classes: usize,
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
    #[serde(default)]
    pub init_seed: u64,
}

fn default_hidden() -> usize {
    16
}

fn default_init_scale() -> f64 {
    0.01
}

impl ModelSpec {
    pub fn logistic(input_dim: usize, num_classes: usize) -> Self {
        ModelSpec {
            kind: ModelKind::LogisticRegression,
            input_dim,
            hidden_dim: default_hidden(),
            num_classes,
            init_scale: default_init_scale(),
            init_seed: 0,
        }
    }

    pub fn mlp(input_dim: usize, hidden_dim: usize, num_classes: usize) -> Self {
        ModelSpec {
            kind: ModelKind::MlpOneHidden,
            hidden_dim,
            ..ModelSpec::logistic(input_dim, num_classes)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(FlError::config("model.input_dim", "must be positive"));
        }
        if self.num_classes < 2 {
            return Err(FlError::config("model.num_classes", "must be at least 2"));
        }
        if self.kind == ModelKind::MlpOneHidden && self.hidden_dim == 0 {
            return Err(FlError::config("model.hidden_dim", "must be positive"));
        }
        if !self.init_scale.is_finite() || self.init_scale < 0.0 {
            return Err(FlError::config(
                "model.init_scale",
                "must be finite and >= 0",
            ));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        let (d, h, c) = (self.input_dim, self.hidden_dim, self.num_classes);
        match self.kind {
            ModelKind::LogisticRegression => c * d + c,
            ModelKind::MlpOneHidden => h * d + h + c * h + c,
        }
    }
}

/// Deterministic Gaussian initialization scaled by `init_scale`.
pub fn init_model(spec: &ModelSpec) -> Result<ParameterVector> {
    spec.validate()?;
    let mut rng = rng_from(spec.init_seed);
    let values = (0..spec.param_count())
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            spec.init_scale * z
        })
        .collect();
    ParameterVector::new(values)
}

fn check_inputs(spec: &ModelSpec, params: &ParameterVector, batch: &Batch) -> Result<()> {
    params.ensure_dim(spec.param_count())?;
    if batch.input_dim != spec.input_dim {
        return Err(FlError::DimMismatch {
            expected: spec.input_dim,
            actual: batch.input_dim,
        });
    }
    if batch.is_empty() {
        return Err(FlError::usage("empty batch"));
    }
    if let Some(&l) = batch.labels.iter().find(|&&l| l >= spec.num_classes) {
        return Err(FlError::usage(format!("label {l} out of range")));
    }
    Ok(())
}

/// Replace logits by softmax probabilities in place; returns log-sum-exp.
fn softmax_in_place(z: &mut [f64]) -> f64 {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
    max + sum.ln()
}

/// Logits for one input row.
fn forward_row(spec: &ModelSpec, p: &[f64], x: &[f64], hidden: &mut [f64], logits: &mut [f64]) {
    let (d, h, c) = (spec.input_dim, spec.hidden_dim, spec.num_classes);
    match spec.kind {
        ModelKind::LogisticRegression => {
            let (w, b) = p.split_at(c * d);
            for k in 0..c {
                logits[k] = b[k] + dot(&w[k * d..(k + 1) * d], x);
            }
        }
        ModelKind::MlpOneHidden => {
            let (w1, rest) = p.split_at(h * d);
            let (b1, rest) = rest.split_at(h);
            let (w2, b2) = rest.split_at(c * h);
            for j in 0..h {
                hidden[j] = (b1[j] + dot(&w1[j * d..(j + 1) * d], x)).tanh();
            }
            for k in 0..c {
                logits[k] = b2[k] + dot(&w2[k * h..(k + 1) * h], hidden);
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Mean softmax cross-entropy over the batch and its gradient.
pub fn loss_and_grad(
    spec: &ModelSpec,
    params: &ParameterVector,
    batch: &Batch,
) -> Result<(f64, ParameterVector)> {
    check_inputs(spec, params, batch)?;
    let (d, h, c) = (spec.input_dim, spec.hidden_dim, spec.num_classes);
    let p = params.as_slice();
    let mut grad = vec![0.0; p.len()];
    let mut hidden = vec![0.0; h];
    let mut probs = vec![0.0; c];
    let mut dhidden = vec![0.0; h];
    let n = batch.len() as f64;
    let mut loss = 0.0;

    for i in 0..batch.len() {
        let x = batch.row(i);
        let y = batch.labels[i];
        forward_row(spec, p, x, &mut hidden, &mut probs);
        let logit_y = probs[y];
        let lse = softmax_in_place(&mut probs);
        loss += lse - logit_y;
        // dL/dlogits = softmax - onehot
        probs[y] -= 1.0;
        let delta = &probs;

        match spec.kind {
            ModelKind::LogisticRegression => {
                let (gw, gb) = grad.split_at_mut(c * d);
                for k in 0..c {
                    gb[k] += delta[k];
                    for (g, &xj) in gw[k * d..(k + 1) * d].iter_mut().zip(x) {
                        *g += delta[k] * xj;
                    }
                }
            }
            ModelKind::MlpOneHidden => {
                let w2 = &p[h * d + h..h * d + h + c * h];
                let (gw1, rest) = grad.split_at_mut(h * d);
                let (gb1, rest) = rest.split_at_mut(h);
                let (gw2, gb2) = rest.split_at_mut(c * h);
                dhidden.iter_mut().for_each(|v| *v = 0.0);
                for k in 0..c {
                    gb2[k] += delta[k];
                    for j in 0..h {
                        gw2[k * h + j] += delta[k] * hidden[j];
                        dhidden[j] += delta[k] * w2[k * h + j];
                    }
                }
                for j in 0..h {
                    let dz = dhidden[j] * (1.0 - hidden[j] * hidden[j]);
                    gb1[j] += dz;
                    for (g, &xj) in gw1[j * d..(j + 1) * d].iter_mut().zip(x) {
                        *g += dz * xj;
                    }
                }
            }
        }
    }
    grad.iter_mut().for_each(|g| *g /= n);
    Ok((loss / n, ParameterVector::new(grad)?))
}

/// Mean cross-entropy and accuracy, without gradients.
pub fn evaluate(spec: &ModelSpec, params: &ParameterVector, batch: &Batch) -> Result<(f64, f64)> {
    check_inputs(spec, params, batch)?;
    let p = params.as_slice();
    let mut hidden = vec![0.0; spec.hidden_dim];
    let mut logits = vec![0.0; spec.num_classes];
    let mut loss = 0.0;
    let mut correct = 0usize;
    for i in 0..batch.len() {
        forward_row(spec, p, batch.row(i), &mut hidden, &mut logits);
        let y = batch.labels[i];
        let argmax = logits
            .iter()
            .enumerate()
            .fold(0, |best, (k, &v)| if v > logits[best] { k } else { best });
        if argmax == y {
            correct += 1;
        }
        let logit_y = logits[y];
        loss += softmax_in_place(&mut logits) - logit_y;
    }
    let n = batch.len() as f64;
    Ok((loss / n, correct as f64 / n))
}
