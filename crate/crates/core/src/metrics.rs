//! Forgetting measures, drift telemetry, empirical drift probability and
//! rounds-to-target extraction.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{FlError, Result};
use crate::params::{l2_dist_sq, ParameterVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    LowerIsBetter,
    HigherIsBetter,
}

/// A per-round evaluation metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSeries {
    pub metric_name: String,
    pub orientation: Orientation,
    pub values: Vec<f64>,
}

impl EvalSeries {
    pub fn new(
        metric_name: impl Into<String>,
        orientation: Orientation,
        values: Vec<f64>,
    ) -> Result<Self> {
        if values.is_empty() {
            return Err(FlError::usage("evaluation series must be non-empty"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FlError::usage("evaluation series must be finite"));
        }
        Ok(EvalSeries {
            metric_name: metric_name.into(),
            orientation,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value at 1-based round `r`, negated for higher-is-better metrics so
    /// that smaller is always better.
    fn loss_like(&self, r: usize) -> f64 {
        match self.orientation {
            Orientation::LowerIsBetter => self.values[r - 1],
            Orientation::HigherIsBetter => -self.values[r - 1],
        }
    }
}

/// Which running best ψ subtracts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsiVariant {
    /// Best over rounds `1..=r`; always `>= 0`.
    Inclusive,
    /// Best over rounds `1..r`; negative when round `r` sets a new best.
    ExclusivePrior,
}

/// Forgetting at 1-based round `r`: current value minus the running best.
/// Round 1 is 0 by convention.
pub fn forgetting_psi(series: &EvalSeries, r: usize, variant: PsiVariant) -> Result<f64> {
    if r == 0 || r > series.len() {
        return Err(FlError::usage(format!(
            "round {r} outside series of length {}",
            series.len()
        )));
    }
    if r == 1 {
        return Ok(0.0);
    }
    let upto = match variant {
        PsiVariant::Inclusive => r,
        PsiVariant::ExclusivePrior => r - 1,
    };
    let best = (1..=upto)
        .map(|i| series.loss_like(i))
        .fold(f64::INFINITY, f64::min);
    Ok(series.loss_like(r) - best)
}

/// ψ for every round of the series.
pub fn psi_series(series: &EvalSeries, variant: PsiVariant) -> Vec<f64> {
    let mut out = Vec::with_capacity(series.len());
    let mut best = f64::INFINITY;
    for r in 1..=series.len() {
        let v = series.loss_like(r);
        let psi = if r == 1 {
            0.0
        } else {
            match variant {
                PsiVariant::ExclusivePrior => v - best,
                PsiVariant::Inclusive => v - best.min(v),
            }
        };
        best = best.min(v);
        out.push(psi);
    }
    out
}

/// `(ψ*, ψ̂) = (max(ψ, 0), max(−ψ, 0))`.
pub fn split_psi(psi: f64) -> (f64, f64) {
    if psi > 0.0 {
        (psi, 0.0)
    } else {
        (0.0, -psi + 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Zeta {
    /// `Σ(ψ* + ψ̂) = Σ|ψ|`.
    pub zeta_abs: f64,
    /// `Σψ`.
    pub zeta_signed: f64,
}

pub fn zeta(psis: &[f64]) -> Result<Zeta> {
    if psis.is_empty() {
        return Err(FlError::usage("zeta needs at least one psi value"));
    }
    let mut zeta_abs = 0.0;
    let mut zeta_signed = 0.0;
    for &psi in psis {
        let (star, hat) = split_psi(psi);
        zeta_abs += star + hat;
        zeta_signed += psi;
    }
    Ok(Zeta {
        zeta_abs,
        zeta_signed,
    })
}

/// `‖θ_next − θ‖`.
pub fn drift_magnitude(theta_next: &ParameterVector, theta: &ParameterVector) -> Result<f64> {
    Ok(l2_dist_sq(theta_next, theta)?.sqrt())
}

/// Natural log of an exceedance probability; `p = 0` has no finite log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum LogProb {
    Finite(f64),
    NeverExceeded,
}

impl LogProb {
    pub fn of(p: f64) -> Self {
        if p > 0.0 {
            LogProb::Finite(p.ln())
        } else {
            LogProb::NeverExceeded
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UdpEstimate {
    pub delta: f64,
    pub p: f64,
    pub log_p: LogProb,
}

/// Fraction of rounds whose drift exceeds `delta`.
pub fn empirical_udp(drifts: &[f64], delta: f64) -> Result<UdpEstimate> {
    if drifts.is_empty() {
        return Err(FlError::usage("no drifts recorded"));
    }
    if delta.is_nan() || delta <= 0.0 {
        return Err(FlError::usage("delta must be > 0"));
    }
    let exceed = drifts.iter().filter(|&&d| d > delta).count();
    let p = exceed as f64 / drifts.len() as f64;
    Ok(UdpEstimate {
        delta,
        p,
        log_p: LogProb::of(p),
    })
}

/// First 1-based round where the series meets or beats `target`.
pub fn rounds_to_target(series: &EvalSeries, target: f64) -> Option<usize> {
    series
        .values
        .iter()
        .position(|&v| match series.orientation {
            Orientation::LowerIsBetter => v <= target,
            Orientation::HigherIsBetter => v >= target,
        })
        .map(|i| i + 1)
}

/// Telemetry for one completed round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    /// Sample-weighted mean of client-reported losses.
    pub global_loss: f64,
    pub eval: BTreeMap<String, f64>,
    pub drift: f64,
    pub lambda_ref: f64,
    pub psi: f64,
    /// Sample-weighted mean of the raw per-client loss sums.
    pub global_loss_sum: f64,
}
