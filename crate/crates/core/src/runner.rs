//! Multi-round experiment driver.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::{index, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{DataSource, ExperimentConfig, StrategyKind, EVAL_METRICS};
use crate::data::{gen_synthetic, load_csv, Dataset};
use crate::error::{FlError, Result};
use crate::learner::{local_train, ClientReport, LocalTrainConfig};
use crate::metrics::{
    drift_magnitude, empirical_udp, psi_series, rounds_to_target, zeta, EvalSeries, Orientation,
    PsiVariant, RoundRecord, UdpEstimate, Zeta,
};
use crate::model::{evaluate, init_model, ModelSpec};
use crate::params::ParameterVector;
use crate::partition::{partition, PartitionPlan};
use crate::seed::{self, derive_seed, rng_from};
use crate::strategy::{FedAvg, FedOpt, FedRefState, ServerStrategy};
use crate::udp::{verify_ordering, OrderingReport};

/// `m` distinct client ids drawn uniformly without replacement, sorted,
/// seeded by `(global_seed, round)`.
pub fn select_clients(k: usize, m: usize, round: usize, global_seed: u64) -> Result<Vec<usize>> {
    if m == 0 || m > k {
        return Err(FlError::usage(format!("cannot select {m} of {k} clients")));
    }
    let mut rng = rng_from(derive_seed(global_seed, &[seed::TAG_SELECT, round as u64]));
    let mut ids = index::sample(&mut rng, k, m).into_vec();
    ids.sort_unstable();
    Ok(ids)
}

pub fn orientation_of(metric: &str) -> Orientation {
    if metric == "accuracy" {
        Orientation::HigherIsBetter
    } else {
        Orientation::LowerIsBetter
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetResult {
    pub metric: String,
    pub value: f64,
    pub round: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: ExperimentConfig,
    pub rounds: Vec<RoundRecord>,
    pub final_metrics: BTreeMap<String, f64>,
    /// Forgetting aggregates per metric, from exclusive-prior ψ.
    pub zeta: BTreeMap<String, Zeta>,
    pub rounds_to_target: Vec<TargetResult>,
    pub udp: Option<UdpEstimate>,
    pub udp_analysis: Option<OrderingReport>,
    pub final_params: ParameterVector,
    pub wall_clock_seconds: f64,
}

impl RunSummary {
    pub fn series(&self, metric: &str) -> Result<EvalSeries> {
        let values = self
            .rounds
            .iter()
            .map(|r| {
                r.eval
                    .get(metric)
                    .copied()
                    .ok_or_else(|| FlError::usage(format!("no metric `{metric}` recorded")))
            })
            .collect::<Result<Vec<_>>>()?;
        EvalSeries::new(metric, orientation_of(metric), values)
    }

    pub fn drifts(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| r.drift).collect()
    }
}

struct Prepared {
    spec: ModelSpec,
    clients: Vec<Dataset>,
    train: Dataset,
    test: Dataset,
}

fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let full = match &cfg.data {
        DataSource::Synthetic {
            classes,
            per_class,
            input_dim,
            separation,
        } => gen_synthetic(
            *classes,
            *per_class,
            *input_dim,
            *separation,
            derive_seed(cfg.global_seed, &[seed::TAG_DATA]),
        )?,
        DataSource::Csv { path, schema } => load_csv(path, schema)?,
    };
    if full.class_count() > cfg.model.num_classes {
        return Err(FlError::config(
            "model.num_classes",
            "smaller than the data's class count",
        ));
    }

    // Held-out evaluation split, drawn before partitioning.
    let n = full.len();
    let n_test = ((n as f64 * cfg.eval_split_fraction).round() as usize).max(1);
    if n - n_test.min(n) < cfg.clients {
        return Err(FlError::usage(format!(
            "{n} samples cannot fill an evaluation split and {} clients",
            cfg.clients
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from(derive_seed(
        cfg.global_seed,
        &[seed::TAG_SPLIT],
    )));
    let (test_idx, train_idx) = order.split_at(n_test);
    let mut train_idx = train_idx.to_vec();
    train_idx.sort_unstable();
    let mut test_idx = test_idx.to_vec();
    test_idx.sort_unstable();
    let train = full.subset(&train_idx)?;
    let test = full.subset(&test_idx)?;

    let plan = PartitionPlan {
        kind: cfg.partition.clone(),
        clients: cfg.clients,
        seed: derive_seed(cfg.global_seed, &[seed::TAG_PARTITION]),
    };
    let clients = partition(&train, &plan)?;

    let spec = ModelSpec {
        init_seed: derive_seed(cfg.global_seed, &[seed::TAG_INIT, cfg.model.init_seed]),
        ..cfg.model.clone()
    };
    Ok(Prepared {
        spec,
        clients,
        train,
        test,
    })
}

fn build_strategy(cfg: &ExperimentConfig) -> Result<Box<dyn ServerStrategy>> {
    Ok(match cfg.strategy {
        StrategyKind::Fedavg | StrategyKind::Fedprox => Box::new(FedAvg),
        StrategyKind::Fedref => Box::new(FedRefState::new(
            cfg.fedref
                .clone()
                .ok_or_else(|| FlError::config("fedref", "missing section"))?,
        )?),
        kind => {
            let variant = kind.fedopt_variant().expect("fedopt strategy");
            let section = cfg
                .fedopt
                .as_ref()
                .ok_or_else(|| FlError::config("fedopt", "missing section"))?;
            Box::new(FedOpt::new(section.to_config(variant)))
        }
    })
}

fn train_clients(
    cfg: &ExperimentConfig,
    prepared: &Prepared,
    global: &ParameterVector,
    selected: &[usize],
    round: usize,
) -> Result<Vec<ClientReport>> {
    let job = |&client: &usize| {
        let local = LocalTrainConfig {
            shuffle_seed: derive_seed(
                cfg.global_seed,
                &[seed::TAG_CLIENT, client as u64, round as u64],
            ),
            ..cfg.local.clone()
        };
        local_train(&prepared.spec, global, &prepared.clients[client], &local)
    };
    if cfg.parallel_clients {
        selected.par_iter().map(job).collect()
    } else {
        selected.iter().map(job).collect()
    }
}

/// Run the experiment; `observe` sees every broadcast global model, starting
/// with the initialization (round 0).
pub fn run_experiment_with(
    cfg: &ExperimentConfig,
    mut observe: impl FnMut(usize, &ParameterVector),
) -> Result<RunSummary> {
    cfg.validate()?;
    let started = Instant::now();
    let prepared = prepare(cfg)?;
    let mut strategy = build_strategy(cfg)?;
    let mut global = init_model(&prepared.spec)?;
    observe(0, &global);

    let test_batch = prepared.test.full_batch();
    let train_batch = prepared.train.full_batch();
    let psi_orientation = orientation_of(&cfg.psi_metric);
    let mut psi_best = f64::INFINITY;
    let mut records = Vec::with_capacity(cfg.rounds);

    for round in 1..=cfg.rounds {
        let wrap = |e: FlError| FlError::Round {
            round,
            source: Box::new(e),
        };
        let selected = select_clients(cfg.clients, cfg.clients_per_round(), round, cfg.global_seed)
            .map_err(wrap)?;
        let reports = train_clients(cfg, &prepared, &global, &selected, round).map_err(wrap)?;
        let update = strategy.step(round, &global, &reports).map_err(wrap)?;
        let drift = drift_magnitude(&update.global, &global).map_err(wrap)?;

        let (test_loss, accuracy) =
            evaluate(&prepared.spec, &update.global, &test_batch).map_err(wrap)?;
        let (train_loss, _) =
            evaluate(&prepared.spec, &update.global, &train_batch).map_err(wrap)?;
        let eval = BTreeMap::from([
            ("accuracy".to_string(), accuracy),
            ("loss".to_string(), test_loss),
            ("train_loss".to_string(), train_loss),
        ]);

        let v = match psi_orientation {
            Orientation::LowerIsBetter => eval[&cfg.psi_metric],
            Orientation::HigherIsBetter => -eval[&cfg.psi_metric],
        };
        let psi = if round == 1 { 0.0 } else { v - psi_best };
        psi_best = psi_best.min(v);

        let total: usize = reports.iter().map(|r| r.sample_count).sum();
        let global_loss_sum = reports
            .iter()
            .map(|r| r.sample_count as f64 / total as f64 * r.loss_sum)
            .sum();

        records.push(RoundRecord {
            round,
            global_loss: update.aggregate_loss,
            eval,
            drift,
            lambda_ref: update.lambda_ref,
            psi,
            global_loss_sum,
        });
        global = update.global;
        observe(round, &global);
    }

    let mut summary = RunSummary {
        config: cfg.clone(),
        final_metrics: records.last().map(|r| r.eval.clone()).unwrap_or_default(),
        rounds: records,
        zeta: BTreeMap::new(),
        rounds_to_target: Vec::new(),
        udp: None,
        udp_analysis: None,
        final_params: global,
        wall_clock_seconds: 0.0,
    };
    for metric in EVAL_METRICS {
        let series = summary.series(metric)?;
        summary.zeta.insert(
            metric.to_string(),
            zeta(&psi_series(&series, PsiVariant::ExclusivePrior))?,
        );
    }
    for t in &cfg.targets {
        summary.rounds_to_target.push(TargetResult {
            metric: t.metric.clone(),
            value: t.value,
            round: rounds_to_target(&summary.series(&t.metric)?, t.value),
        });
    }
    let drifts = summary.drifts();
    let delta = cfg.udp_delta.unwrap_or_else(|| 2.0 * median(&drifts));
    if delta > 0.0 {
        summary.udp = Some(empirical_udp(&drifts, delta)?);
    }
    if let Some(s) = &cfg.udp_scenario {
        summary.udp_analysis = Some(verify_ordering(s)?);
    }
    summary.wall_clock_seconds = started.elapsed().as_secs_f64();
    Ok(summary)
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary> {
    run_experiment_with(cfg, |_, _| {})
}

fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}
