//! Non-IID partitioning of a dataset across clients.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{FlError, Result};
use crate::seed::{derive_seed, rng_from, SimRng};

const MAX_DIRICHLET_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PartitionKind {
    /// Sort by label, cut into `clients × shards_per_client` contiguous shards
    /// and deal them out after a seeded shuffle of shard order.
    LabelShards { shards_per_client: usize },
    /// Per-class client proportions drawn from `Dirichlet(alpha)`.
    Dirichlet { alpha: f64 },
    /// Seeded uniform split; each class is dealt evenly across clients.
    Iid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionPlan {
    #[serde(flatten)]
    pub kind: PartitionKind,
    pub clients: usize,
    #[serde(default)]
    pub seed: u64,
}

impl PartitionPlan {
    pub fn validate(&self) -> Result<()> {
        if self.clients == 0 {
            return Err(FlError::config("partition.clients", "must be at least 1"));
        }
        match self.kind {
            PartitionKind::LabelShards {
                shards_per_client: 0,
            } => Err(FlError::config(
                "partition.shards_per_client",
                "must be at least 1",
            )),
            PartitionKind::Dirichlet { alpha } if !(alpha.is_finite() && alpha > 0.0) => {
                Err(FlError::config("partition.alpha", "must be > 0"))
            }
            _ => Ok(()),
        }
    }
}

/// Split `data` into `plan.clients` disjoint, covering, non-empty partitions.
pub fn partition(data: &Dataset, plan: &PartitionPlan) -> Result<Vec<Dataset>> {
    plan.validate()?;
    let k = plan.clients;
    if k == 1 {
        return Ok(vec![data.clone()]);
    }
    if data.len() < k {
        return Err(FlError::usage(format!(
            "cannot give {k} clients at least one sample each from {} samples",
            data.len()
        )));
    }
    let mut rng = rng_from(derive_seed(plan.seed, &[crate::seed::TAG_PARTITION]));
    let assignment = match plan.kind {
        PartitionKind::Iid => iid(data, k, &mut rng),
        PartitionKind::LabelShards { shards_per_client } => {
            label_shards(data, k, shards_per_client, &mut rng)?
        }
        PartitionKind::Dirichlet { alpha } => dirichlet(data, k, alpha, &mut rng)?,
    };
    assignment.iter().map(|idx| data.subset(idx)).collect()
}

/// Uniform split that deals every class evenly: shuffle, group by label,
/// then deal round-robin to a shuffled client order.
fn iid(data: &Dataset, k: usize, rng: &mut SimRng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(rng);
    order.sort_by_key(|&i| data.labels()[i]);
    let mut seats: Vec<usize> = (0..k).collect();
    seats.shuffle(rng);
    let mut clients = vec![Vec::new(); k];
    for (pos, &i) in order.iter().enumerate() {
        clients[seats[pos % k]].push(i);
    }
    for c in &mut clients {
        c.sort_unstable();
    }
    clients
}

/// Split into `k` contiguous chunks whose sizes differ by at most one.
fn even_chunks(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    let (base, extra) = (items.len() / k, items.len() % k);
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let len = base + usize::from(i < extra);
        out.push(items[start..start + len].to_vec());
        start += len;
    }
    out
}

fn label_shards(
    data: &Dataset,
    k: usize,
    shards_per_client: usize,
    rng: &mut SimRng,
) -> Result<Vec<Vec<usize>>> {
    let total = k * shards_per_client;
    if total > data.len() {
        return Err(FlError::usage(format!(
            "{total} shards requested but only {} samples",
            data.len()
        )));
    }
    let mut sorted: Vec<usize> = (0..data.len()).collect();
    sorted.sort_by_key(|&i| data.labels()[i]);
    let mut shards = even_chunks(&sorted, total);
    shards.shuffle(rng);
    Ok(shards
        .chunks(shards_per_client)
        .map(|group| group.concat())
        .collect())
}

fn dirichlet(data: &Dataset, k: usize, alpha: f64, rng: &mut SimRng) -> Result<Vec<Vec<usize>>> {
    let gamma = Gamma::new(alpha, 1.0).map_err(|e| FlError::usage(e.to_string()))?;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); data.class_count()];
    for (i, &l) in data.labels().iter().enumerate() {
        by_class[l].push(i);
    }

    for _ in 0..MAX_DIRICHLET_ATTEMPTS {
        let mut clients: Vec<Vec<usize>> = vec![Vec::new(); k];
        for members in &by_class {
            if members.is_empty() {
                continue;
            }
            let props = sample_simplex(&gamma, k, rng);
            let mut shuffled = members.clone();
            shuffled.shuffle(rng);
            // Cut points from cumulative proportions; the last client takes the remainder.
            let n = shuffled.len();
            let mut start = 0;
            let mut cum = 0.0;
            for (c, p) in props.iter().enumerate() {
                cum += p;
                let end = if c + 1 == k {
                    n
                } else {
                    ((cum * n as f64).round() as usize).clamp(start, n)
                };
                clients[c].extend_from_slice(&shuffled[start..end]);
                start = end;
            }
        }
        if clients.iter().all(|c| !c.is_empty()) {
            for c in &mut clients {
                c.sort_unstable();
            }
            return Ok(clients);
        }
    }
    Err(FlError::usage(format!(
        "dirichlet partition left a client empty after {MAX_DIRICHLET_ATTEMPTS} draws"
    )))
}

/// One draw from `Dirichlet(alpha, …, alpha)` via normalized Gamma variates.
fn sample_simplex(gamma: &Gamma<f64>, k: usize, rng: &mut SimRng) -> Vec<f64> {
    loop {
        let draws: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
        let sum: f64 = draws.iter().sum();
        if sum > 0.0 && sum.is_finite() {
            return draws.into_iter().map(|g| g / sum).collect();
        }
        // Every Gamma(alpha) draw underflowed to zero (tiny alpha): put all mass on one client.
        if sum == 0.0 {
            let mut v = vec![0.0; k];
            v[rng.random_range(0..k)] = 1.0;
            return v;
        }
    }
}

/// Mean total-variation distance between each client's label distribution
/// and the pooled label distribution.
pub fn heterogeneity_index(partitions: &[Dataset]) -> Result<f64> {
    if partitions.is_empty() {
        return Err(FlError::usage("need at least one partition"));
    }
    let classes = partitions
        .iter()
        .map(|p| p.class_count())
        .max()
        .unwrap_or(0);
    let mut pooled = vec![0.0; classes];
    let mut total = 0.0;
    let hists: Vec<Vec<usize>> = partitions.iter().map(|p| p.label_histogram()).collect();
    for h in &hists {
        for (c, &n) in h.iter().enumerate() {
            pooled[c] += n as f64;
            total += n as f64;
        }
    }
    pooled.iter_mut().for_each(|v| *v /= total);
    let tv_sum: f64 = hists
        .iter()
        .map(|h| {
            let n: usize = h.iter().sum();
            let mut tv = 0.0;
            for (c, &q) in pooled.iter().enumerate() {
                let p = h.get(c).copied().unwrap_or(0) as f64 / n as f64;
                tv += (p - q).abs();
            }
            0.5 * tv
        })
        .sum();
    Ok(tv_sum / partitions.len() as f64)
}
