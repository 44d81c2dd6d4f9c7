//! Server-side aggregation and optimization strategies.

mod fedopt;
mod fedref;

pub use fedopt::{fedopt_step, FedOptConfig, FedOptState, FedOptVariant};
pub use fedref::{
    fedref_finetune, lambda_tick, ref_estimate, ref_weights, FedRefConfig, FedRefState,
    LambdaSchedule, ReferenceBuffer,
};

use crate::error::{FlError, Result};
use crate::learner::ClientReport;
use crate::params::{weighted_sum, ParameterVector};

/// Result of one server step.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerUpdate {
    pub global: ParameterVector,
    /// `F^g = Σ (n_k/n)·F_k`.
    pub aggregate_loss: f64,
    /// Reference-anchor strength in effect this round (0 for non-FedRef strategies).
    pub lambda_ref: f64,
}

/// A server strategy consumes the reports of one round and produces the next global model.
pub trait ServerStrategy: Send {
    fn name(&self) -> &'static str;

    /// `round` is 1-based; `prev_global` is the model broadcast at the start of the round.
    fn step(
        &mut self,
        round: usize,
        prev_global: &ParameterVector,
        reports: &[ClientReport],
    ) -> Result<ServerUpdate>;
}

fn sample_weights(reports: &[ClientReport]) -> Result<Vec<f64>> {
    if reports.is_empty() {
        return Err(FlError::usage("no client reports to aggregate"));
    }
    let total: usize = reports.iter().map(|r| r.sample_count).sum();
    if total == 0 {
        return Err(FlError::usage("all clients report zero samples"));
    }
    Ok(reports
        .iter()
        .map(|r| r.sample_count as f64 / total as f64)
        .collect())
}

/// `Σ (n_k/n)·θ_k`.
pub fn fedavg_aggregate(reports: &[ClientReport]) -> Result<ParameterVector> {
    let weights = sample_weights(reports)?;
    let params: Vec<&ParameterVector> = reports.iter().map(|r| &r.params).collect();
    weighted_sum(&params, &weights)
}

/// `Σ (n_k/n)·F_k`.
pub fn aggregate_loss(reports: &[ClientReport]) -> Result<f64> {
    let weights = sample_weights(reports)?;
    Ok(reports
        .iter()
        .zip(&weights)
        .map(|(r, w)| w * r.mean_loss)
        .sum())
}

/// Plain sample-weighted averaging. FedProx uses this same server with μ > 0 clients.
#[derive(Debug, Default, Clone)]
pub struct FedAvg;

impl ServerStrategy for FedAvg {
    fn name(&self) -> &'static str {
        "fedavg"
    }

    fn step(
        &mut self,
        _round: usize,
        _prev_global: &ParameterVector,
        reports: &[ClientReport],
    ) -> Result<ServerUpdate> {
        Ok(ServerUpdate {
            global: fedavg_aggregate(reports)?,
            aggregate_loss: aggregate_loss(reports)?,
            lambda_ref: 0.0,
        })
    }
}

/// FedAdam / FedYogi / FedAdagrad.
#[derive(Debug, Clone)]
pub struct FedOpt {
    state: Option<FedOptState>,
    config: FedOptConfig,
}

impl FedOpt {
    pub fn new(config: FedOptConfig) -> Self {
        FedOpt {
            state: None,
            config,
        }
    }

    pub fn state(&self) -> Option<&FedOptState> {
        self.state.as_ref()
    }
}

impl ServerStrategy for FedOpt {
    fn name(&self) -> &'static str {
        match self.config.variant {
            FedOptVariant::Adam => "fedadam",
            FedOptVariant::Yogi => "fedyogi",
            FedOptVariant::Adagrad => "fedadagrad",
        }
    }

    fn step(
        &mut self,
        _round: usize,
        prev_global: &ParameterVector,
        reports: &[ClientReport],
    ) -> Result<ServerUpdate> {
        let agg = fedavg_aggregate(reports)?;
        let state = self
            .state
            .take()
            .unwrap_or_else(|| FedOptState::new(self.config.clone(), prev_global.dim()));
        let (global, state) = fedopt_step(&state, prev_global, &agg)?;
        self.state = Some(state);
        Ok(ServerUpdate {
            global,
            aggregate_loss: aggregate_loss(reports)?,
            lambda_ref: 0.0,
        })
    }
}
