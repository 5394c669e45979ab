//! MAXCUT objective, auxiliary loss, trained cut model, and classical
//! baselines.

mod baselines;
mod model;
mod objective;

pub use baselines::{
    brute_force_maxcut, gw_partition, levs_partition, GwConfig, LevsConfig, LevsResult, BRUTE_FORCE_MAX_NODES,
};
pub use model::{cut_features, train_cut_model, CutModel, CutModelConfig, CutTrainingOutcome, TrainingHistory};
pub use objective::{cut_loss, cut_loss_value, cut_metrics, round_scores, CutAssignment, CutResult};

use thiserror::Error;

use crate::diff::DiffError;
use crate::nn::NnError;

#[derive(Debug, Error)]
pub enum CutError {
    #[error("graph has no edges")]
    EmptyGraph,
    #[error("assignment has {got} entries for {expected} nodes")]
    LengthMismatch { expected: usize, got: usize },
    #[error("entry {0} is not ±1")]
    InvalidAssignment(usize),
    #[error("brute force supports at most {max} nodes, got {n}")]
    TooLarge { n: usize, max: usize },
    #[error("loss diverged at epoch {epoch}")]
    DivergedLoss { epoch: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

pub type Result<T, E = CutError> = std::result::Result<T, E>;
