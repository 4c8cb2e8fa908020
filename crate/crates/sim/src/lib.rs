//! Federated learning simulations around the secure aggregation protocol.

use thiserror::Error;

pub mod attack;
pub mod baseline;
pub mod data;
pub mod experiment;
pub mod model;

pub use attack::ClientBehavior;
pub use experiment::{run_experiment, Aggregation, ExperimentConfig, Metrics, TaskConfig};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Engine(#[from] rflpa_protocol::EngineError),
}
