//! In-memory datasets, the synthetic Gaussian-blob generator and CSV ingestion.

use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{FlError, Result};
use crate::seed::rng_from;

/// Row-major feature matrix plus class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    input_dim: usize,
    labels: Vec<usize>,
    class_count: usize,
}

/// A mini-batch gathered from a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub features: Vec<f64>,
    pub input_dim: usize,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn new(features: Vec<f64>, input_dim: usize, labels: Vec<usize>) -> Result<Self> {
        if labels.is_empty() {
            return Err(FlError::usage("batch must contain at least one row"));
        }
        if input_dim == 0 || features.len() != labels.len() * input_dim {
            return Err(FlError::DimMismatch {
                expected: labels.len() * input_dim,
                actual: features.len(),
            });
        }
        Ok(Batch {
            features,
            input_dim,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.input_dim..(i + 1) * self.input_dim]
    }
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        input_dim: usize,
        labels: Vec<usize>,
        class_count: usize,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(FlError::usage("dataset must contain at least one sample"));
        }
        if input_dim == 0 || features.len() != labels.len() * input_dim {
            return Err(FlError::DimMismatch {
                expected: labels.len() * input_dim,
                actual: features.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(FlError::usage(format!(
                "label {bad} out of range for {class_count} classes"
            )));
        }
        Ok(Dataset {
            features,
            input_dim,
            labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.input_dim..(i + 1) * self.input_dim]
    }

    /// Per-class sample counts.
    pub fn label_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.class_count];
        for &l in &self.labels {
            h[l] += 1;
        }
        h
    }

    /// Gather the given rows (in the given order) into a batch.
    pub fn batch(&self, indices: &[usize]) -> Result<Batch> {
        let mut features = Vec::with_capacity(indices.len() * self.input_dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Batch::new(features, self.input_dim, labels)
    }

    /// The whole dataset as one batch.
    pub fn full_batch(&self) -> Batch {
        Batch {
            features: self.features.clone(),
            input_dim: self.input_dim,
            labels: self.labels.clone(),
        }
    }

    /// Sub-dataset with the given rows; keeps the class count.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let b = self.batch(indices)?;
        Dataset::new(b.features, self.input_dim, b.labels, self.class_count)
    }
}

/// Gaussian blobs: one unit-variance cluster per class, every class mean at
/// distance `separation` from the origin.
///
/// Means sit on signed coordinate axes while `classes <= 2 * input_dim`
/// (class `c` on axis `c % input_dim`, negative side for the second sweep);
/// beyond that they are seeded random directions on the sphere.
pub fn gen_synthetic(
    classes: usize,
    per_class: usize,
    input_dim: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if classes < 2 {
        return Err(FlError::usage("need at least 2 classes"));
    }
    if per_class == 0 || input_dim == 0 {
        return Err(FlError::usage("per_class and input_dim must be positive"));
    }
    if !separation.is_finite() || separation < 0.0 {
        return Err(FlError::usage("separation must be finite and non-negative"));
    }
    let mut rng = rng_from(seed);
    let means: Vec<Vec<f64>> = (0..classes)
        .map(|c| {
            let mut m = vec![0.0; input_dim];
            if classes <= 2 * input_dim {
                let sign = if c / input_dim == 0 { 1.0 } else { -1.0 };
                m[c % input_dim] = sign * separation;
            } else {
                let dir: Vec<f64> = (0..input_dim)
                    .map(|_| StandardNormal.sample(&mut rng))
                    .collect();
                let n = dir
                    .iter()
                    .map(|v| v * v)
                    .sum::<f64>()
                    .sqrt()
                    .max(f64::MIN_POSITIVE);
                for (mi, di) in m.iter_mut().zip(&dir) {
                    *mi = separation * di / n;
                }
            }
            m
        })
        .collect();

    let mut features = Vec::with_capacity(classes * per_class * input_dim);
    let mut labels = Vec::with_capacity(classes * per_class);
    for (c, mean) in means.iter().enumerate() {
        for _ in 0..per_class {
            for &mu in mean {
                let z: f64 = StandardNormal.sample(&mut rng);
                features.push(mu + z);
            }
            labels.push(c);
        }
    }
    Dataset::new(features, input_dim, labels, classes)
}

/// Column selection for [`load_csv`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    pub label_column: String,
    pub feature_columns: Vec<String>,
    /// Number of classes; labels must be integers in `[0, classes)`.
    /// Inferred as `max label + 1` when absent.
    #[serde(default)]
    pub classes: Option<usize>,
}

/// Load a dataset from a headered CSV file, preserving row order.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
    let headers = reader.headers().map_err(|e| csv_io(path, e))?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| FlError::Ingestion {
                row: 0,
                column: name.to_string(),
                reason: "column not found in header".into(),
            })
    };
    let label_idx = find(&schema.label_column)?;
    let feature_idx = schema
        .feature_columns
        .iter()
        .map(|c| find(c))
        .collect::<Result<Vec<_>>>()?;
    if feature_idx.is_empty() {
        return Err(FlError::usage("schema lists no feature columns"));
    }

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        // 1-based data row numbers; the header is row 0.
        let row = i + 1;
        let record = record.map_err(|e| FlError::Ingestion {
            row,
            column: String::new(),
            reason: e.to_string(),
        })?;
        for (&idx, name) in feature_idx.iter().zip(&schema.feature_columns) {
            let cell = record.get(idx).unwrap_or("").trim();
            let v: f64 = cell.parse().map_err(|_| FlError::Ingestion {
                row,
                column: name.clone(),
                reason: format!("`{cell}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(FlError::Ingestion {
                    row,
                    column: name.clone(),
                    reason: "value is not finite".into(),
                });
            }
            features.push(v);
        }
        let cell = record.get(label_idx).unwrap_or("").trim();
        let label: usize = cell.parse().map_err(|_| FlError::Ingestion {
            row,
            column: schema.label_column.clone(),
            reason: format!("unknown label `{cell}`"),
        })?;
        if let Some(k) = schema.classes {
            if label >= k {
                return Err(FlError::Ingestion {
                    row,
                    column: schema.label_column.clone(),
                    reason: format!("unknown label `{label}` (expected < {k})"),
                });
            }
        }
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(FlError::Ingestion {
            row: 0,
            column: String::new(),
            reason: "file contains no data rows".into(),
        });
    }
    let classes = schema
        .classes
        .unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1).max(2));
    Dataset::new(features, feature_idx.len(), labels, classes)
}

/// Write a dataset as CSV with columns `x0..x{d-1}` and `label`.
pub fn write_csv(path: &Path, data: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    let mut header: Vec<String> = (0..data.input_dim()).map(|j| format!("x{j}")).collect();
    header.push("label".into());
    w.write_record(&header).map_err(|e| csv_io(path, e))?;
    for i in 0..data.len() {
        let mut rec: Vec<String> = data.row(i).iter().map(|v| v.to_string()).collect();
        rec.push(data.labels()[i].to_string());
        w.write_record(&rec).map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| FlError::io(path, e))
}

fn csv_io(path: &Path, e: csv::Error) -> FlError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => FlError::io(path, io),
        other => FlError::Ingestion {
            row: 0,
            column: String::new(),
            reason: format!("{other:?}"),
        },
    }
}
