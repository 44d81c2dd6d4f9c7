//! Client-side local training: mini-batch SGD with an optional FedProx
//! proximal term.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{FlError, Result};
use crate::model::{evaluate, loss_and_grad, ModelSpec};
use crate::params::ParameterVector;
use crate::seed::rng_from;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalTrainConfig {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    /// `0` is plain SGD; positive values add `(μ/2)‖θ − θ^g‖²` to the objective.
    #[serde(default)]
    pub proximal_mu: f64,
    /// Overwritten per (client, round) by the experiment driver.
    #[serde(default)]
    pub shuffle_seed: u64,
}

fn default_epochs() -> usize {
    3
}
fn default_batch_size() -> usize {
    32
}
fn default_lr() -> f64 {
    0.1
}

impl Default for LocalTrainConfig {
    fn default() -> Self {
        LocalTrainConfig {
            epochs: default_epochs(),
            batch_size: default_batch_size(),
            learning_rate: default_lr(),
            proximal_mu: 0.0,
            shuffle_seed: 0,
        }
    }
}

impl LocalTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(FlError::config("local.batch_size", "must be at least 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(FlError::config("local.learning_rate", "must be > 0"));
        }
        if !(self.proximal_mu.is_finite() && self.proximal_mu >= 0.0) {
            return Err(FlError::config("local.proximal_mu", "must be >= 0"));
        }
        Ok(())
    }
}

/// What a client sends back after local training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientReport {
    pub params: ParameterVector,
    /// Mean of the per-step training losses (`F_k`).
    pub mean_loss: f64,
    /// Raw sum of per-step losses, kept for telemetry.
    pub loss_sum: f64,
    pub steps: usize,
    pub sample_count: usize,
}

impl ClientReport {
    pub fn new(params: ParameterVector, mean_loss: f64, sample_count: usize) -> Result<Self> {
        if !mean_loss.is_finite() {
            return Err(FlError::usage("client loss must be finite"));
        }
        Ok(ClientReport {
            params,
            mean_loss,
            loss_sum: mean_loss,
            steps: 1,
            sample_count,
        })
    }
}

/// Run `cfg.epochs` epochs of mini-batch SGD from `global`.
///
/// Each epoch reshuffles the full index set with a single RNG seeded from
/// `cfg.shuffle_seed`; the final partial batch is kept.
pub fn local_train(
    spec: &ModelSpec,
    global: &ParameterVector,
    data: &Dataset,
    cfg: &LocalTrainConfig,
) -> Result<ClientReport> {
    global.ensure_dim(spec.param_count())?;
    cfg.validate()?;
    if data.is_empty() {
        return Err(FlError::usage("client has no data"));
    }

    if cfg.epochs == 0 {
        let (loss, _) = evaluate(spec, global, &data.full_batch())?;
        return Ok(ClientReport {
            params: global.clone(),
            mean_loss: loss,
            loss_sum: loss,
            steps: 0,
            sample_count: data.len(),
        });
    }

    let mut rng = rng_from(cfg.shuffle_seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut theta = global.as_slice().to_vec();
    let anchor = global.as_slice();
    let mut loss_sum = 0.0;
    let mut steps = 0usize;

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch = data.batch(chunk)?;
            let current = ParameterVector::new(theta)?;
            let (loss, grad) = loss_and_grad(spec, &current, &batch)?;
            theta = current.into_vec();
            if cfg.proximal_mu > 0.0 {
                for ((t, &g), &a) in theta.iter_mut().zip(grad.as_slice()).zip(anchor) {
                    *t -= cfg.learning_rate * (g + cfg.proximal_mu * (*t - a));
                }
            } else {
                for (t, &g) in theta.iter_mut().zip(grad.as_slice()) {
                    *t -= cfg.learning_rate * g;
                }
            }
            loss_sum += loss;
            steps += 1;
        }
    }

    Ok(ClientReport {
        params: ParameterVector::new(theta)?,
        mean_loss: loss_sum / steps as f64,
        loss_sum,
        steps,
        sample_count: data.len(),
    })
}
