//! End-to-end experiment drivers: cut benchmarks, graph classification,
//! node classification, and the gradient-check suite.

mod experiment;
mod gradcheck;
mod graph_class;
mod node_class;

pub use experiment::{
    load_source, run_maxcut_experiment, write_csv, write_json, ExperimentConfig, GraphSource, Method, ResultRow,
    CSV_HEADER,
};
pub use gradcheck::{full_suite, GradcheckEntry};
pub use graph_class::{stratified_split, train_graph_classifier, Split};
pub use node_class::{train_node_classifier, NodeMasks};

use serde::Serialize;
use thiserror::Error;

use crate::diff::DiffError;
use crate::graph::GraphError;
use crate::maxcut::CutError;
use crate::nn::{NnError, ScoreNetConfig};
use crate::pool::{PoolError, ReduceVariant, UnpoolMode};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("source not found: {0}")]
    SourceNotFound(String),
    #[error("invalid graph source {0:?}")]
    InvalidSource(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("graph has no node labels")]
    MissingLabels,
    #[error("bad masks: {0}")]
    BadMasks(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Cut(#[from] CutError),
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

/// Hyperparameters shared by the classification pipelines.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskConfig {
    pub mp_width: usize,
    pub ratio: f64,
    /// Weight of the auxiliary cut loss.
    pub beta: f64,
    /// Drops the auxiliary loss entirely, as if `beta` were 0.
    pub no_loss: bool,
    pub lr: f64,
    pub epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub batch_size: usize,
    pub max_iter: usize,
    pub scorenet: ScoreNetConfig,
    pub variant: ReduceVariant,
    pub unpool: UnpoolMode,
    pub dropout: f64,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            mp_width: 32,
            ratio: 0.5,
            beta: 1.0,
            no_loss: false,
            lr: 1e-3,
            epochs: 300,
            patience: 50,
            batch_size: 32,
            max_iter: 3,
            scorenet: ScoreNetConfig::default(),
            variant: ReduceVariant::Plain,
            unpool: UnpoolMode::Broadcast,
            dropout: 0.1,
        }
    }
}

impl TaskConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PipelineError::InvalidConfig(m));
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be non-negative, got {}", self.beta));
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.lr));
        }
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return bad(format!("ratio must lie in (0, 1], got {}", self.ratio));
        }
        if self.batch_size == 0 || self.mp_width == 0 {
            return bad("batch size and width must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        Ok(())
    }

    /// Weight actually applied to the cut loss.
    pub fn effective_beta(&self) -> f64 {
        if self.no_loss {
            0.0
        } else {
            self.beta
        }
    }
}

/// Outcome of one classification training run.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunReport {
    pub task: String,
    pub seed: u64,
    pub epochs_run: usize,
    /// Mean training task loss per epoch.
    pub task_losses: Vec<f64>,
    /// Mean auxiliary cut loss per epoch.
    pub cut_losses: Vec<f64>,
    /// `task + beta * cut` per epoch.
    pub total_losses: Vec<f64>,
    /// Validation loss per epoch; empty without a validation set.
    pub val_losses: Vec<f64>,
    pub lr_trace: Vec<f64>,
    /// Epoch whose parameters produced the reported metrics.
    pub checkpoint_epoch: usize,
    pub best_val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
    /// Set when the training labels hold a single class.
    pub degenerate: bool,
    pub wall_time_s: f64,
}

/// Fraction of rows whose arg-max matches the target (ties to the lowest
/// column).
pub(crate) fn accuracy(logits: &ndarray::Array2<f64>, targets: &[usize]) -> f64 {
    if targets.is_empty() {
        return f64::NAN;
    }
    let hits = logits
        .rows()
        .into_iter()
        .zip(targets)
        .filter(|(row, &t)| {
            let best = row
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b })
                .0;
            best == t
        })
        .count();
    hits as f64 / targets.len() as f64
}
