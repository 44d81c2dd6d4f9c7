mod common;

use fedref::config::{parse_config, StrategyKind};
use fedref::data::gen_synthetic;
use fedref::learner::local_train;
use fedref::metrics::Zeta;
use fedref::model::{init_model, ModelSpec};
use fedref::output::emit_outputs;
use fedref::partition::PartitionKind;
use fedref::runner::{run_experiment, run_experiment_with, RunSummary};
use fedref::seed::{derive_seed, rng_from, TAG_CLIENT, TAG_DATA, TAG_INIT, TAG_SPLIT};
use fedref::strategy::FedRefConfig;
use rand::seq::SliceRandom;

#[test]
fn single_client_single_round_is_local_training() {
    let mut cfg = common::small_task("fedavg", 1, 1, 21);
    cfg.partition = PartitionKind::Iid;
    let mut seen = Vec::new();
    run_experiment_with(&cfg, |_, p| seen.push(p.clone())).unwrap();

    // Rebuild the pipeline by hand from the documented seed streams.
    let full = gen_synthetic(2, 60, 2, 6.0, derive_seed(21, &[TAG_DATA])).unwrap();
    let n_test = (full.len() as f64 * cfg.eval_split_fraction).round() as usize;
    let mut order: Vec<usize> = (0..full.len()).collect();
    order.shuffle(&mut rng_from(derive_seed(21, &[TAG_SPLIT])));
    let mut train_idx = order[n_test..].to_vec();
    train_idx.sort_unstable();
    let train = full.subset(&train_idx).unwrap();
    let spec = ModelSpec {
        init_seed: derive_seed(21, &[TAG_INIT, cfg.model.init_seed]),
        ..cfg.model.clone()
    };
    let init = init_model(&spec).unwrap();
    let local = fedref::learner::LocalTrainConfig {
        shuffle_seed: derive_seed(21, &[TAG_CLIENT, 0, 1]),
        ..cfg.local.clone()
    };
    let expected = local_train(&spec, &init, &train, &local).unwrap();

    assert_eq!(seen[0], init);
    assert_eq!(seen[1], expected.params);
}

#[test]
fn zero_anchor_fedref_tracks_fedavg() {
    let avg = common::small_task("fedavg", 15, 4, 3);
    let mut rf = common::small_task("fedref", 15, 4, 3);
    rf.fedref = Some(FedRefConfig {
        lambda_g: 0.0,
        lambda_ref_0: 0.0,
        lambda_ref_top: 0.0,
        ..FedRefConfig::default()
    });
    let a = run_experiment(&avg).unwrap();
    let b = run_experiment(&rf).unwrap();
    assert_eq!(a.final_params, b.final_params);
    assert_eq!(a.drifts(), b.drifts());
}

#[test]
fn every_strategy_fits_a_separable_task() {
    for strategy in [
        "fedavg",
        "fedprox",
        "fedadam",
        "fedyogi",
        "fedadagrad",
        "fedref",
    ] {
        let mut cfg = common::small_task(strategy, 50, 4, 5);
        if let Some(opt) = cfg.fedopt.as_mut() {
            opt.eta_s = 0.1;
        }
        let s = run_experiment(&cfg).unwrap();
        let loss = s.final_metrics["train_loss"];
        assert!(loss < 0.1, "{strategy}: train loss {loss}");
    }
}

#[test]
fn partial_participation_uses_the_requested_cohort() {
    let mut cfg = common::small_task("fedref", 8, 6, 2);
    cfg.clients_per_round = Some(3);
    let s = run_experiment(&cfg).unwrap();
    assert_eq!(s.rounds.len(), 8);
    assert_eq!(cfg.strategy, StrategyKind::Fedref);
    // Warm-up rounds carry no anchor.
    assert!(s.rounds[..3].iter().all(|r| r.lambda_ref == 0.0));
    assert!(s.rounds[3..].iter().all(|r| r.lambda_ref > 0.0));
}

fn emitted(rounds: usize) -> (tempfile::TempDir, RunSummary) {
    let dir = tempfile::tempdir().unwrap();
    let s = run_experiment(&common::small_task("fedref", rounds, 3, 8)).unwrap();
    emit_outputs(&s, dir.path()).unwrap();
    (dir, s)
}

#[test]
fn rounds_csv_has_header_and_one_row_per_round() {
    let (dir, _) = emitted(3);
    let text = std::fs::read_to_string(dir.path().join("rounds.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(
        lines[0],
        "round,global_loss,accuracy,loss,train_loss,drift,lambda_ref,psi"
    );
    let mut reader = csv::Reader::from_path(dir.path().join("rounds.csv")).unwrap();
    for (i, row) in reader.records().enumerate() {
        let row = row.unwrap();
        assert_eq!(row[0].parse::<usize>().unwrap(), i + 1);
        assert!(row.iter().skip(1).all(|f| f.parse::<f64>().is_ok()));
    }
}

#[test]
fn summary_json_round_trips_zeta_exactly() {
    let (dir, s) = emitted(6);
    let text = std::fs::read_to_string(dir.path().join("summary.json")).unwrap();
    let back: RunSummary = serde_json::from_str(&text).unwrap();
    let zeta: &std::collections::BTreeMap<String, Zeta> = &back.zeta;
    assert_eq!(zeta, &s.zeta);
    assert_eq!(back.rounds, s.rounds);
    assert_eq!(back.final_params, s.final_params);
}

#[test]
fn charts_are_well_formed_svg() {
    let (dir, _) = emitted(5);
    for metric in ["accuracy", "loss", "train_loss"] {
        let svg = std::fs::read_to_string(dir.path().join(format!("{metric}.svg"))).unwrap();
        assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert_eq!(svg.matches('<').count(), svg.matches('>').count());
    }
}

#[test]
fn config_round_trips_through_toml() {
    let cfg = common::noniid_task("fedref", 12, 4);
    let back = parse_config(&cfg.to_toml().unwrap()).unwrap();
    assert_eq!(back, cfg);
}
