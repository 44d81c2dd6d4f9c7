#![allow(dead_code)]

use fedref::config::{parse_config, ExperimentConfig};

/// Synthetic non-IID logistic task: 10 classes on signed axes in 10-D,
/// Dirichlet(0.1) label skew over 10 clients.
pub fn noniid_task(strategy: &str, rounds: usize, seed: u64) -> ExperimentConfig {
    let text = format!(
        r#"
strategy = "{strategy}"
rounds = {rounds}
clients = 10
global_seed = {seed}

[model]
kind = "logistic_regression"
input_dim = 10
num_classes = 10

[data]
source = "synthetic"
classes = 10
per_class = 200
input_dim = 10
separation = 3.5

[partition]
kind = "dirichlet"
alpha = 0.1

[local]
epochs = 3
batch_size = 32
learning_rate = 0.1

[[targets]]
metric = "loss"
value = 0.3
"#
    );
    parse_config(&text).expect("valid task config")
}

/// Small, well-separated task for quick end-to-end tests.
pub fn small_task(strategy: &str, rounds: usize, clients: usize, seed: u64) -> ExperimentConfig {
    let text = format!(
        r#"
strategy = "{strategy}"
rounds = {rounds}
clients = {clients}
global_seed = {seed}

[model]
kind = "logistic_regression"
input_dim = 2
num_classes = 2

[data]
source = "synthetic"
classes = 2
per_class = 60
input_dim = 2
separation = 6.0

[partition]
kind = "dirichlet"
alpha = 0.5

[local]
epochs = 2
batch_size = 16
learning_rate = 0.2
"#
    );
    parse_config(&text).expect("valid task config")
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}
