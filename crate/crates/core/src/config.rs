//! Declarative experiment configuration (TOML).
//!
//! Unknown keys are rejected; omitted keys take the defaults below. See the
//! README for a full annotated example.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::CsvSchema;
use crate::error::{FlError, Result};
use crate::learner::LocalTrainConfig;
use crate::model::ModelSpec;
use crate::partition::PartitionKind;
use crate::strategy::{FedOptConfig, FedOptVariant, FedRefConfig};
use crate::udp::DriftScenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Fedavg,
    Fedprox,
    Fedadam,
    Fedyogi,
    Fedadagrad,
    Fedref,
}

impl StrategyKind {
    pub fn fedopt_variant(self) -> Option<FedOptVariant> {
        match self {
            StrategyKind::Fedadam => Some(FedOptVariant::Adam),
            StrategyKind::Fedyogi => Some(FedOptVariant::Yogi),
            StrategyKind::Fedadagrad => Some(FedOptVariant::Adagrad),
            _ => None,
        }
    }
}

/// Where the training data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Synthetic {
        classes: usize,
        per_class: usize,
        input_dim: usize,
        separation: f64,
    },
    Csv {
        path: PathBuf,
        #[serde(flatten)]
        schema: CsvSchema,
    },
}

/// Server-optimizer hyperparameters; the variant follows from the strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FedOptSection {
    pub eta_s: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub tau: f64,
}

impl Default for FedOptSection {
    fn default() -> Self {
        let d = FedOptConfig::new(FedOptVariant::Adam);
        FedOptSection {
            eta_s: d.eta_s,
            beta1: d.beta1,
            beta2: d.beta2,
            tau: d.tau,
        }
    }
}

impl FedOptSection {
    pub fn to_config(&self, variant: FedOptVariant) -> FedOptConfig {
        FedOptConfig {
            variant,
            eta_s: self.eta_s,
            beta1: self.beta1,
            beta2: self.beta2,
            tau: self.tau,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Target {
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub strategy: StrategyKind,
    pub rounds: usize,
    #[serde(default = "default_clients")]
    pub clients: usize,
    /// Defaults to all clients.
    #[serde(default)]
    pub clients_per_round: Option<usize>,
    #[serde(default)]
    pub global_seed: u64,
    #[serde(default = "default_eval_fraction")]
    pub eval_split_fraction: f64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_true")]
    pub parallel_clients: bool,
    /// Metric whose ψ goes into the `psi` column.
    #[serde(default = "default_psi_metric")]
    pub psi_metric: String,
    /// Drift threshold for the empirical UDP; defaults to twice the median drift.
    #[serde(default)]
    pub udp_delta: Option<f64>,
    pub model: ModelSpec,
    pub data: DataSource,
    #[serde(default = "default_partition")]
    pub partition: PartitionKind,
    #[serde(default)]
    pub local: LocalTrainConfig,
    #[serde(default)]
    pub fedref: Option<FedRefConfig>,
    #[serde(default)]
    pub fedopt: Option<FedOptSection>,
    #[serde(default)]
    pub targets: Vec<Target>,
    /// Optional drift-probability scenario evaluated alongside the run.
    #[serde(default)]
    pub udp_scenario: Option<DriftScenario>,
}

fn default_clients() -> usize {
    10
}
fn default_eval_fraction() -> f64 {
    0.2
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_true() -> bool {
    true
}
fn default_psi_metric() -> String {
    "accuracy".into()
}
fn default_partition() -> PartitionKind {
    PartitionKind::Iid
}

pub const FEDPROX_DEFAULT_MU: f64 = 0.5;

/// Metrics the runner evaluates every round.
pub const EVAL_METRICS: [&str; 3] = ["accuracy", "loss", "train_loss"];

impl ExperimentConfig {
    /// Fill strategy-dependent defaults and validate every field.
    pub fn normalize(mut self) -> Result<Self> {
        match self.strategy {
            StrategyKind::Fedref => {
                self.fedref.get_or_insert_with(FedRefConfig::default);
            }
            StrategyKind::Fedadam | StrategyKind::Fedyogi | StrategyKind::Fedadagrad => {
                self.fedopt.get_or_insert_with(FedOptSection::default);
            }
            StrategyKind::Fedprox => {
                if self.local.proximal_mu == 0.0 {
                    self.local.proximal_mu = FEDPROX_DEFAULT_MU;
                }
            }
            StrategyKind::Fedavg => {}
        }
        self.clients_per_round.get_or_insert(self.clients);
        self.validate()?;
        Ok(self)
    }

    pub fn clients_per_round(&self) -> usize {
        self.clients_per_round.unwrap_or(self.clients)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(FlError::config("rounds", "must be >= 1"));
        }
        if self.clients == 0 {
            return Err(FlError::config("clients", "must be >= 1"));
        }
        let m = self.clients_per_round();
        if m == 0 || m > self.clients {
            return Err(FlError::config(
                "clients_per_round",
                format!("must lie in [1, {}], got {m}", self.clients),
            ));
        }
        if !(self.eval_split_fraction > 0.0 && self.eval_split_fraction < 1.0) {
            return Err(FlError::config("eval_split_fraction", "must lie in (0, 1)"));
        }
        if !EVAL_METRICS.contains(&self.psi_metric.as_str()) {
            return Err(FlError::config(
                "psi_metric",
                format!(
                    "unknown metric `{}`; expected one of {EVAL_METRICS:?}",
                    self.psi_metric
                ),
            ));
        }
        if let Some(d) = self.udp_delta {
            if !(d.is_finite() && d > 0.0) {
                return Err(FlError::config("udp_delta", "must be > 0"));
            }
        }
        self.model.validate()?;
        self.local.validate()?;
        match &self.data {
            DataSource::Synthetic {
                classes,
                per_class,
                input_dim,
                separation,
            } => {
                if *classes < 2 {
                    return Err(FlError::config("data.classes", "must be >= 2"));
                }
                if *per_class == 0 {
                    return Err(FlError::config("data.per_class", "must be >= 1"));
                }
                if *input_dim != self.model.input_dim {
                    return Err(FlError::config(
                        "data.input_dim",
                        "must equal model.input_dim",
                    ));
                }
                if *classes != self.model.num_classes {
                    return Err(FlError::config(
                        "data.classes",
                        "must equal model.num_classes",
                    ));
                }
                if !(separation.is_finite() && *separation >= 0.0) {
                    return Err(FlError::config("data.separation", "must be >= 0"));
                }
            }
            DataSource::Csv { schema, .. } => {
                if schema.feature_columns.len() != self.model.input_dim {
                    return Err(FlError::config(
                        "data.feature_columns",
                        "count must equal model.input_dim",
                    ));
                }
            }
        }
        match &self.partition {
            PartitionKind::LabelShards { shards_per_client } if *shards_per_client == 0 => {
                return Err(FlError::config(
                    "partition.shards_per_client",
                    "must be >= 1",
                ))
            }
            PartitionKind::Dirichlet { alpha } if !(alpha.is_finite() && *alpha > 0.0) => {
                return Err(FlError::config("partition.alpha", "must be > 0"))
            }
            _ => {}
        }

        let is_fedref = self.strategy == StrategyKind::Fedref;
        let is_fedopt = self.strategy.fedopt_variant().is_some();
        if self.fedref.is_some() != is_fedref {
            return Err(FlError::config(
                "fedref",
                "section present iff strategy = \"fedref\"",
            ));
        }
        if self.fedopt.is_some() != is_fedopt {
            return Err(FlError::config(
                "fedopt",
                "section present iff strategy is fedadam, fedyogi or fedadagrad",
            ));
        }
        if (self.local.proximal_mu > 0.0) != (self.strategy == StrategyKind::Fedprox) {
            return Err(FlError::config(
                "local.proximal_mu",
                "must be > 0 for fedprox and 0 otherwise",
            ));
        }
        if let Some(f) = &self.fedref {
            f.validate()?;
        }
        if let (Some(o), Some(v)) = (&self.fedopt, self.strategy.fedopt_variant()) {
            o.to_config(v).validate()?;
        }
        for (i, t) in self.targets.iter().enumerate() {
            if !EVAL_METRICS.contains(&t.metric.as_str()) {
                return Err(FlError::config(
                    format!("targets[{i}].metric"),
                    "unknown metric",
                ));
            }
            if !t.value.is_finite() {
                return Err(FlError::config(
                    format!("targets[{i}].value"),
                    "must be finite",
                ));
            }
        }
        if let Some(s) = &self.udp_scenario {
            s.validate().map_err(|e| match e {
                FlError::Config { path, reason } => {
                    FlError::config(format!("udp_scenario.{path}"), reason)
                }
                other => other,
            })?;
        }
        Ok(())
    }

    /// Resolve a relative CSV path against `base` (the config file's directory).
    pub fn resolve_paths(&mut self, base: &Path) {
        if let DataSource::Csv { path, .. } = &mut self.data {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| FlError::config("<root>", e.to_string()))
    }
}

/// Parse, apply defaults and validate.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let raw: ExperimentConfig = toml::from_str(text).map_err(|e| {
        let path = e
            .span()
            .map(|s| format!("bytes {}..{}", s.start, s.end))
            .unwrap_or_else(|| "<root>".into());
        FlError::config(path, e.message().to_string())
    })?;
    raw.normalize()
}

pub fn parse_scenario(text: &str) -> Result<DriftScenario> {
    let s: DriftScenario =
        toml::from_str(text).map_err(|e| FlError::config("<scenario>", e.message().to_string()))?;
    s.validate()?;
    Ok(s)
}
