//! Deterministic federated-learning simulator.
//!
//! Clients train small softmax models on partitioned synthetic (or CSV) data;
//! the server aggregates with FedAvg, FedProx, FedAdam/FedYogi/FedAdagrad, or
//! FedRef, which follows each averaging step with one gradient step toward
//! the previous global model and a recency-weighted reference model. Runs
//! record per-round drift and forgetting telemetry.

pub mod config;
pub mod data;
pub mod error;
pub mod learner;
pub mod metrics;
pub mod model;
pub mod output;
pub mod params;
pub mod partition;
pub mod runner;
pub mod seed;
pub mod strategy;
pub mod udp;

pub use error::{FlError, Result};
pub use params::ParameterVector;
