//! Sweep training with one-site conjugate-gradient updates.

mod env;
mod init;
mod loss;
mod sweep;

pub use init::{init_model, InitKind, NEAR_PRODUCT_NOISE};
pub use loss::{local_gradient, loss, LossKind, LossSummary, DEGENERATE_PENALTY, PROBABILITY_FLOOR};
pub use sweep::{accuracy, train, SweepRecord, TrainReport};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ttn::{EncodedSample, ModelError};

/// Samples per partial sum in parallel reductions. Fixed so that results do
/// not depend on the thread count.
pub const REDUCTION_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample<T> {
    pub sample: EncodedSample<T>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub chi_max: usize,
    pub n_sweeps: usize,
    pub loss: LossKind,
    pub cg_iters_per_node: usize,
    pub cg_tolerance: f64,
    /// `None` trains each node on the full batch.
    pub batch_size: Option<usize>,
    pub seed: u64,
    pub init: InitKind,
    /// Sweeps without a validation improvement before stopping; 0 disables.
    pub early_stop_patience: usize,
    /// Weight of `||psi||^2` added to the objective while sweeping. Only
    /// meaningful for losses that depend on the network scale.
    pub l2_penalty: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            chi_max: 16,
            n_sweeps: 10,
            loss: LossKind::NegativeLogLikelihood,
            cg_iters_per_node: 5,
            cg_tolerance: 1e-6,
            batch_size: None,
            seed: 0,
            init: InitKind::RandomOrthogonal,
            early_stop_patience: 3,
            l2_penalty: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.chi_max == 0 {
            return Err(TrainError::Config("chi_max must be at least 1".into()));
        }
        if self.cg_iters_per_node == 0 {
            return Err(TrainError::Config("cg_iters_per_node must be at least 1".into()));
        }
        if !(self.cg_tolerance > 0.0 && self.cg_tolerance.is_finite()) {
            return Err(TrainError::Config("cg_tolerance must be positive".into()));
        }
        if !(self.l2_penalty >= 0.0 && self.l2_penalty.is_finite()) {
            return Err(TrainError::Config("l2_penalty must be finite and non-negative".into()));
        }
        if self.batch_size == Some(0) {
            return Err(TrainError::Config("batch_size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("sample {index} has label {label} but the model has {n_classes} classes")]
    Label { index: usize, label: usize, n_classes: usize },
    #[error("model is canonical at {center:?}, not at node {node}")]
    NotCanonical { node: usize, center: Option<usize> },
    #[error("non-finite loss in sweep {sweep} at node {node}: {state}")]
    NonFinite { sweep: usize, node: usize, state: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[cfg(test)]
mod tests;
