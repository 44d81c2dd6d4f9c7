//! Reference-model server fine-tuning.
//!
//! After plain sample-weighted aggregation the server takes one gradient step
//! on
//!
//! ```text
//! L(θ) = Σ W_k F_k + λ_g ‖θ − θ_prev‖² + λ_ref ‖θ − θ_ref‖²
//! ```
//!
//! at `θ = θ_agg`, where `θ_ref` is a recency-weighted average of the last
//! `ρ` broadcast models. The client-loss term holds no server-side gradient
//! (the server has no data), so only the two anchors move the model.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{aggregate_loss, fedavg_aggregate, ServerStrategy, ServerUpdate};
use crate::error::{FlError, Result};
use crate::learner::ClientReport;
use crate::params::{weighted_sum, ParameterVector};

/// Ring buffer of the most recent global models, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceBuffer {
    capacity: usize,
    entries: VecDeque<ParameterVector>,
}

impl ReferenceBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(FlError::usage("reference buffer capacity must be >= 1"));
        }
        Ok(ReferenceBuffer {
            capacity,
            entries: VecDeque::with_capacity(capacity),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() == self.capacity
    }

    /// Append the newest model, evicting the oldest when full.
    pub fn push(&mut self, params: ParameterVector) -> Result<()> {
        if let Some(first) = self.entries.front() {
            params.ensure_dim(first.dim())?;
        }
        if self.is_full() {
            self.entries.pop_front();
        }
        self.entries.push_back(params);
        Ok(())
    }

    /// Entries from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &ParameterVector> {
        self.entries.iter()
    }
}

/// Recency weights for `rho` models, newest first: `(ρ − i + 1)/φ` with `φ = ρ(ρ+1)/2`.
pub fn ref_weights(rho: usize) -> Vec<f64> {
    let phi = (rho * (rho + 1) / 2) as f64;
    (1..=rho).map(|i| (rho - i + 1) as f64 / phi).collect()
}

/// Recency-weighted average of a full buffer; the newest model weighs `ρ/φ`.
pub fn ref_estimate(buffer: &ReferenceBuffer) -> Result<ParameterVector> {
    if !buffer.is_full() {
        return Err(FlError::usage(format!(
            "reference buffer holds {} of {} models",
            buffer.len(),
            buffer.capacity()
        )));
    }
    let newest_first: Vec<&ParameterVector> = buffer.entries.iter().rev().collect();
    weighted_sum(&newest_first, &ref_weights(buffer.capacity()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSchedule {
    pub lambda_ref_0: f64,
    pub lambda_ref_top: f64,
    /// Multiply every `sigma_r` rounds.
    pub sigma_r: usize,
    /// Growth factor applied on schedule rounds.
    pub sigma_w: f64,
    pub current: f64,
}

impl LambdaSchedule {
    pub fn new(
        lambda_ref_0: f64,
        lambda_ref_top: f64,
        sigma_r: usize,
        sigma_w: f64,
    ) -> Result<Self> {
        if !(lambda_ref_0.is_finite() && lambda_ref_0 >= 0.0) {
            return Err(FlError::config("fedref.lambda_ref_0", "must be >= 0"));
        }
        if !(lambda_ref_top.is_finite() && lambda_ref_top >= lambda_ref_0) {
            return Err(FlError::config(
                "fedref.lambda_ref_top",
                "must be >= lambda_ref_0",
            ));
        }
        if sigma_r == 0 {
            return Err(FlError::config("fedref.sigma_r", "must be >= 1"));
        }
        if !(sigma_w.is_finite() && sigma_w > 1.0) {
            return Err(FlError::config("fedref.sigma_w", "must be > 1"));
        }
        Ok(LambdaSchedule {
            lambda_ref_0,
            lambda_ref_top,
            sigma_r,
            sigma_w,
            current: lambda_ref_0,
        })
    }
}

/// Grow `λ_ref` by `σ_w` on rounds divisible by `σ_r`, capped at `λ_ref_top`.
pub fn lambda_tick(schedule: &LambdaSchedule, round: usize) -> LambdaSchedule {
    let mut next = schedule.clone();
    if round > 0 && round.is_multiple_of(schedule.sigma_r) {
        next.current = round_decimal(next.current * schedule.sigma_w);
        if schedule.lambda_ref_top <= next.current {
            next.current = schedule.lambda_ref_top;
        }
    }
    next
}

/// Round to 15 significant decimal digits, so that decade steps such as
/// `1e-6 × 10` land on the decimal value (`1e-5`) rather than a neighbour.
fn round_decimal(x: f64) -> f64 {
    format!("{x:.14e}").parse().unwrap_or(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FedRefConfig {
    #[serde(default = "default_lambda_g")]
    pub lambda_g: f64,
    #[serde(default = "default_lambda_ref_0")]
    pub lambda_ref_0: f64,
    #[serde(default = "default_lambda_ref_top")]
    pub lambda_ref_top: f64,
    #[serde(default = "default_sigma_r")]
    pub sigma_r: usize,
    #[serde(default = "default_sigma_w")]
    pub sigma_w: f64,
    #[serde(default = "default_rho")]
    pub rho: usize,
    /// Step size of the server fine-tuning step.
    #[serde(default = "default_server_eta")]
    pub server_eta: f64,
    /// Drop the reference anchor (the third loss term taken literally is
    /// constant in θ), leaving only the previous-global anchor.
    #[serde(default)]
    pub literal_l2: bool,
}

fn default_lambda_g() -> f64 {
    0.01
}
fn default_lambda_ref_0() -> f64 {
    1e-6
}
fn default_lambda_ref_top() -> f64 {
    5e-3
}
fn default_sigma_r() -> usize {
    10
}
fn default_sigma_w() -> f64 {
    10.0
}
fn default_rho() -> usize {
    3
}
fn default_server_eta() -> f64 {
    1.0
}

impl Default for FedRefConfig {
    fn default() -> Self {
        FedRefConfig {
            lambda_g: default_lambda_g(),
            lambda_ref_0: default_lambda_ref_0(),
            lambda_ref_top: default_lambda_ref_top(),
            sigma_r: default_sigma_r(),
            sigma_w: default_sigma_w(),
            rho: default_rho(),
            server_eta: default_server_eta(),
            literal_l2: false,
        }
    }
}

impl FedRefConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_g.is_finite() && self.lambda_g >= 0.0) {
            return Err(FlError::config("fedref.lambda_g", "must be >= 0"));
        }
        if self.rho == 0 {
            return Err(FlError::config("fedref.rho", "must be >= 1"));
        }
        if !(self.server_eta.is_finite() && self.server_eta >= 0.0) {
            return Err(FlError::config("fedref.server_eta", "must be >= 0"));
        }
        self.schedule().map(|_| ())
    }

    pub fn schedule(&self) -> Result<LambdaSchedule> {
        LambdaSchedule::new(
            self.lambda_ref_0,
            self.lambda_ref_top,
            self.sigma_r,
            self.sigma_w,
        )
    }
}

/// One gradient step on the anchored server objective, starting at `theta_agg`.
pub fn fedref_finetune(
    theta_agg: &ParameterVector,
    theta_prev_global: &ParameterVector,
    theta_ref: &ParameterVector,
    lambda_g: f64,
    lambda_ref: f64,
    server_eta: f64,
) -> Result<ParameterVector> {
    let dim = theta_agg.dim();
    theta_prev_global.ensure_dim(dim)?;
    theta_ref.ensure_dim(dim)?;
    if lambda_g < 0.0 || lambda_ref < 0.0 {
        return Err(FlError::usage("anchor strengths must be non-negative"));
    }
    let out = theta_agg
        .as_slice()
        .iter()
        .zip(theta_prev_global.as_slice())
        .zip(theta_ref.as_slice())
        .map(|((&a, &p), &r)| {
            let grad = 2.0 * lambda_g * (a - p) + 2.0 * lambda_ref * (a - r);
            a - server_eta * grad
        })
        .collect();
    ParameterVector::new(out)
}

/// Server state for the reference-model strategy.
#[derive(Debug, Clone)]
pub struct FedRefState {
    config: FedRefConfig,
    buffer: ReferenceBuffer,
    schedule: LambdaSchedule,
    last_reference: Option<ParameterVector>,
}

impl FedRefState {
    pub fn new(config: FedRefConfig) -> Result<Self> {
        config.validate()?;
        Ok(FedRefState {
            buffer: ReferenceBuffer::new(config.rho)?,
            schedule: config.schedule()?,
            config,
            last_reference: None,
        })
    }

    pub fn config(&self) -> &FedRefConfig {
        &self.config
    }

    pub fn buffer(&self) -> &ReferenceBuffer {
        &self.buffer
    }

    pub fn schedule(&self) -> &LambdaSchedule {
        &self.schedule
    }

    /// Reference model used by the most recent fine-tuning step.
    pub fn last_reference(&self) -> Option<&ParameterVector> {
        self.last_reference.as_ref()
    }

    /// One server round. Rounds `1..=ρ` are plain averaging while the buffer fills.
    pub fn round(
        &mut self,
        round: usize,
        prev_global: &ParameterVector,
        reports: &[ClientReport],
    ) -> Result<ServerUpdate> {
        let agg = fedavg_aggregate(reports)?;
        let f_g = aggregate_loss(reports)?;
        if round <= self.config.rho {
            self.buffer.push(agg.clone())?;
            return Ok(ServerUpdate {
                global: agg,
                aggregate_loss: f_g,
                lambda_ref: 0.0,
            });
        }

        self.schedule = lambda_tick(&self.schedule, round);
        let reference = ref_estimate(&self.buffer)?;
        let lambda_ref = if self.config.literal_l2 {
            0.0
        } else {
            self.schedule.current
        };
        let global = fedref_finetune(
            &agg,
            prev_global,
            &reference,
            self.config.lambda_g,
            lambda_ref,
            self.config.server_eta,
        )?;
        self.buffer.push(global.clone())?;
        self.last_reference = Some(reference);
        Ok(ServerUpdate {
            global,
            aggregate_loss: f_g,
            lambda_ref,
        })
    }
}

impl ServerStrategy for FedRefState {
    fn name(&self) -> &'static str {
        "fedref"
    }

    fn step(
        &mut self,
        round: usize,
        prev_global: &ParameterVector,
        reports: &[ClientReport],
    ) -> Result<ServerUpdate> {
        self.round(round, prev_global, reports)
    }
}
