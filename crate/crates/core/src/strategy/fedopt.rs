//! Server-side adaptive optimizers driven by the pseudo-gradient
//! `g = θ_prev − θ_agg`.

use serde::{Deserialize, Serialize};

use crate::error::{FlError, Result};
use crate::params::ParameterVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FedOptVariant {
    Adam,
    Yogi,
    Adagrad,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FedOptConfig {
    pub variant: FedOptVariant,
    #[serde(default = "default_eta")]
    pub eta_s: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
}

fn default_eta() -> f64 {
    0.01
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.99
}
fn default_tau() -> f64 {
    1e-4
}

impl FedOptConfig {
    pub fn new(variant: FedOptVariant) -> Self {
        FedOptConfig {
            variant,
            eta_s: default_eta(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            tau: default_tau(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta_s.is_finite() && self.eta_s > 0.0) {
            return Err(FlError::config("fedopt.eta_s", "must be > 0"));
        }
        // β = 0 is accepted so the optimizer can be reduced to a plain normalized step.
        for (name, b) in [("fedopt.beta1", self.beta1), ("fedopt.beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(FlError::config(name, "must lie in [0, 1)"));
            }
        }
        if !(self.tau.is_finite() && self.tau >= 0.0) {
            return Err(FlError::config("fedopt.tau", "must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FedOptState {
    pub config: FedOptConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step_count: u64,
}

impl FedOptState {
    pub fn new(config: FedOptConfig, dim: usize) -> Self {
        FedOptState {
            config,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            step_count: 0,
        }
    }
}

/// One adaptive server step. Returns the new global and the advanced state.
pub fn fedopt_step(
    state: &FedOptState,
    theta_prev: &ParameterVector,
    theta_agg: &ParameterVector,
) -> Result<(ParameterVector, FedOptState)> {
    let dim = theta_prev.dim();
    theta_agg.ensure_dim(dim)?;
    if state.m.len() != dim || state.v.len() != dim {
        return Err(FlError::DimMismatch {
            expected: dim,
            actual: state.m.len(),
        });
    }
    let cfg = &state.config;
    let t = state.step_count + 1;
    let mut next = state.clone();
    next.step_count = t;
    let bias1 = 1.0 - cfg.beta1.powi(t as i32);
    let bias2 = 1.0 - cfg.beta2.powi(t as i32);

    let mut theta = Vec::with_capacity(dim);
    for i in 0..dim {
        let prev = theta_prev.as_slice()[i];
        let g = prev - theta_agg.as_slice()[i];
        let g2 = g * g;
        let (m, v) = (&mut next.m[i], &mut next.v[i]);
        let step = match cfg.variant {
            FedOptVariant::Adagrad => {
                *v += g2;
                g / (v.sqrt() + cfg.tau)
            }
            FedOptVariant::Adam | FedOptVariant::Yogi => {
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                *v = if cfg.variant == FedOptVariant::Adam {
                    cfg.beta2 * *v + (1.0 - cfg.beta2) * g2
                } else {
                    *v - (1.0 - cfg.beta2) * (*v - g2).signum_or_zero() * g2
                };
                let m_hat = *m / bias1;
                let v_hat = *v / bias2;
                m_hat / (v_hat.sqrt() + cfg.tau)
            }
        };
        // g == 0 with tau == 0 gives 0/0; a zero pseudo-gradient never moves the model.
        let step = if step.is_nan() { 0.0 } else { step };
        theta.push(prev - cfg.eta_s * step);
    }
    Ok((ParameterVector::new(theta)?, next))
}

trait SignumOrZero {
    fn signum_or_zero(self) -> f64;
}

impl SignumOrZero for f64 {
    fn signum_or_zero(self) -> f64 {
        if self > 0.0 {
            1.0
        } else if self < 0.0 {
            -1.0
        } else {
            0.0
        }
    }
}
