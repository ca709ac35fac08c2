//! The tree tensor network classifier: topology, encoding, contraction and gauge.

mod encode;
pub mod io;
mod model;
mod topology;

pub use encode::{encode, encode_with, EncodedSample, FeatureEncoding, FeatureKind, FeatureMap, FeatureSpec, SpinMap};
pub use model::{
    bond_dimensions, decide, inner_products, normalize_overlaps, Decision, PredictionResult, TtnModel, Workspace,
    FULL_EXPAND_MAX_LEAVES,
};
pub(crate) use model::{absorb, contract_node, node_shape};
pub use topology::{Child, TreeTopology, LEFT, RIGHT, UP};

use thiserror::Error;

use crate::tensor::TensorError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid network structure: {0}")]
    Structure(String),
    #[error("expected {expected} features, got {actual}")]
    FeatureCount { expected: usize, actual: usize },
    #[error("feature {feature} is not finite ({value})")]
    NonFinite { feature: usize, value: f64 },
    #[error("invalid feature specification: {0}")]
    FeatureSpec(String),
    #[error("all label overlaps vanish for this input")]
    Degenerate,
    #[error("node {0} does not exist")]
    InvalidNode(usize),
    #[error("label {label} out of range for {n_classes} classes")]
    InvalidLabel { label: usize, n_classes: usize },
    #[error("full expansion refused for {n_leaves} leaves (limit {limit})")]
    TooManyLeaves { n_leaves: usize, limit: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[cfg(test)]
mod tests;
