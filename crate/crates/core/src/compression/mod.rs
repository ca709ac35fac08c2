//! Post-training bond-dimension reduction by SVD truncation, with fidelity,
//! parameter and latency bookkeeping.

mod latency;
mod truncate;

pub use latency::{chi_sweep, chi_sweep_table, tune_for_latency, ChiSweepRow, LatencyMeter, LatencyStats, WallClockProbe, MIN_PREDICTIONS};
pub use truncate::{label_fidelities, param_count, truncate, CompressionReport, EdgeTruncation};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ttn::ModelError;

#[derive(Debug, Error)]
pub enum CompressionError {
    #[error("bond dimension target {0} must be at least 1")]
    Chi(usize),
    #[error("invalid truncation plan: {0}")]
    Plan(String),
    #[error("latency budget {budget_us} us is below the chi = 1 floor of {floor_us} us")]
    Unachievable { budget_us: f64, floor_us: f64 },
    #[error("latency measurement needs at least one calibration sample")]
    NoCalibration,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// What the truncation aims for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TruncationTarget {
    /// Same cap on every internal edge.
    Uniform(usize),
    /// Cap per edge, keyed by the node below the edge. Unlisted edges keep
    /// their extent.
    PerEdge(BTreeMap<usize, usize>),
    /// Mean single-threaded prediction latency in microseconds; resolved by
    /// [`tune_for_latency`].
    LatencyBudget(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TruncationPlan {
    pub target: TruncationTarget,
    /// Singular values at or below `cutoff * largest` are dropped as well.
    pub cutoff: f64,
}

impl Default for TruncationPlan {
    fn default() -> Self {
        Self {
            target: TruncationTarget::Uniform(4),
            cutoff: 0.0,
        }
    }
}

impl TruncationPlan {
    pub fn uniform(chi: usize) -> Self {
        Self {
            target: TruncationTarget::Uniform(chi),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), CompressionError> {
        if !(self.cutoff >= 0.0 && self.cutoff < 1.0) {
            return Err(CompressionError::Plan(format!("cutoff {} outside [0, 1)", self.cutoff)));
        }
        match &self.target {
            TruncationTarget::Uniform(chi) if *chi < 1 => Err(CompressionError::Chi(*chi)),
            TruncationTarget::PerEdge(map) => match map.values().find(|&&c| c < 1) {
                Some(&c) => Err(CompressionError::Chi(c)),
                None => Ok(()),
            },
            TruncationTarget::LatencyBudget(b) if !(*b > 0.0 && b.is_finite()) => {
                Err(CompressionError::Plan(format!("latency budget {b} must be positive")))
            }
            _ => Ok(()),
        }
    }
}
