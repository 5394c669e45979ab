//! Layers, parameter storage, initialization, and optimizers.

mod init;
mod layers;
mod optim;
mod params;

pub use init::{glorot_init, glorot_with};
pub use layers::{
    parse_layer_sizes, Activation, GinLayer, GraphOps, HetMpLayer, Linear, Mlp, ScoreNet, ScoreNetConfig,
};
pub use optim::{Adam, PlateauScheduler};
pub use params::{Bound, ParamId, ParamStore};

use thiserror::Error;

use crate::diff::DiffError;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch for parameter {name}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        name: String,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed checkpoint: {0}")]
    MalformedCheckpoint(String),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = NnError> = std::result::Result<T, E>;
