//! Deterministic single-process simulator of personalized federated
//! lottery-ticket learning.
//!
//! The crate trains a small feed-forward network under four federated
//! protocols — CELL (broadcast downlink, adaptive per-user validation
//! threshold), LotteryFL (unicast masked downlink, fixed threshold),
//! FedAvg, and Standalone — over non-IID label-shard client partitions,
//! and keeps a byte-exact uplink/downlink ledger for every round.
//!
//! Everything is seeded: one master seed derives independent streams for
//! weight init, data generation, partitioning, participant sampling, and
//! per-client SGD shuffling, so runs are reproducible bit for bit and
//! client work can execute in parallel without changing results.

pub mod comms;
pub mod config;
pub mod data;
pub mod error;
pub mod exec;
pub mod nn;
pub mod output;
pub mod protocols;
pub mod pruning;
pub mod seeds;

pub use config::{DatasetConfig, ExperimentConfig, MetricsRow, MetricsTable, ModelConfig};
pub use error::{Result, SimError};
pub use exec::ExecMode;
pub use protocols::{run_experiment, Protocol, RunReport};
