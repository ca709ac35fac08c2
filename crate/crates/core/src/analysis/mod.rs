//! Entanglement entropies, two-point correlations and feature selection on
//! a trained network.

mod correlation;
mod entropy;
mod quips;

pub use correlation::{correlation, correlations, CorrelationMatrix};
pub use entropy::{edge_entropies, entropy_report, feature_entropy, von_neumann, EdgeEntropy, EntropyReport, FeatureEntropy};
pub use quips::{quips, rank, restrict_dataset, EntropyAggregation, QuipsConfig, QuipsRanking, Selection};

use thiserror::Error;

use crate::data::DataError;
use crate::ttn::ModelError;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("label {label} has a zero-norm state")]
    ZeroNorm { label: usize },
    #[error("feature {feature} out of range for {n_features} features")]
    InvalidFeature { feature: usize, n_features: usize },
    #[error("cannot select {k} of {n_features} features")]
    SelectionSize { k: usize, n_features: usize },
    #[error("invalid analysis settings: {0}")]
    Config(String),
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
}
