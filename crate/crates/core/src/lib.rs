//! Locally optimum detection of a weak radiation source by a network of
//! sensor nodes that agree on the global statistic through decentralized
//! ADMM, with a Byzantine falsification model and a trimmed robust variant.
//!
//! * [`model`]: signal model, LOD summand, clairvoyant log-likelihood ratio
//! * [`topology`]: random placements and communication graphs
//! * [`consensus`]: vanilla and robust ADMM, attack injection
//! * [`metrics`]: thresholds, ROC/AUC, convergence time
//! * [`experiment`]: Monte-Carlo drivers behind the `lodsim` CLI

use std::path::PathBuf;

use thiserror::Error;

pub mod config;
pub mod consensus;
pub mod experiment;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod topology;

pub use config::ExperimentConfig;
pub use consensus::{
    consensus_oracle, gamma_p, run_consensus, AttackConfig, ConsensusConfig, ConvergenceTrace,
    Variant,
};
pub use metrics::{empirical_roc, iterations_to_within, RocCurve};
pub use model::{Hypothesis, NodePosition, ScenarioParams};
pub use topology::{Topology, TopologyConfig};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Model(#[from] model::ModelError),
    #[error(transparent)]
    Topology(#[from] topology::TopologyError),
    #[error(transparent)]
    Consensus(#[from] consensus::ConsensusError),
    #[error(transparent)]
    Metrics(#[from] metrics::MetricsError),
    #[error("config error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
