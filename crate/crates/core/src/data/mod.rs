//! Tabular datasets, the jet-feature schema, splits and synthetic events.

mod csvio;
mod physics;
mod split;
mod synth;

pub use csvio::{load_csv, read_csv, save_csv, write_csv, Schema};
pub use physics::{delta_r, jet_charge, pseudorapidity, wrap_phi, JetCharge};
pub use split::{split, Split, SplitSpec};
pub use synth::{synth_generate, ParticlePlan, SynthConfig, SynthDataset, PARTICLES};

use thiserror::Error;

use crate::scalar::Scalar;
use crate::training::LabeledSample;
use crate::ttn::{encode, FeatureEncoding, FeatureKind, FeatureSpec, ModelError, TreeTopology};

/// Column order of the 16 jet features.
pub const JET_FEATURES: [&str; 16] = [
    "mu_q", "mu_pt", "mu_dr", "k_q", "k_pt", "k_dr", "pi_q", "pi_pt", "pi_dr", "e_q", "e_pt", "e_dr", "p_q", "p_pt",
    "p_dr", "Q",
];

pub const LABEL_COLUMN: &str = "label";

/// Label 0 is `b`, label 1 is `bbar`.
pub const LABEL_NAMES: [&str; 2] = ["b", "bbar"];

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("file contains no data rows")]
    Empty,
    #[error("missing column '{0}'")]
    MissingColumn(String),
    #[error("duplicate column '{0}'")]
    DuplicateColumn(String),
    #[error("row {row}, column '{column}': cannot parse '{value}' as a number")]
    NonNumeric { row: usize, column: String, value: String },
    #[error("row {row}, column '{column}': value {value} is not finite")]
    NonFinite { row: usize, column: String, value: f64 },
    #[error("row {row}: unknown label '{value}'")]
    BadLabel { row: usize, value: String },
    #[error("row {row} has {actual} fields, header has {expected}")]
    RowLength { row: usize, expected: usize, actual: usize },
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error("invalid split: {0}")]
    Split(String),
    #[error("invalid generator plan: {0}")]
    Plan(String),
    #[error("{0}")]
    Domain(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Row-major feature table with integer labels and optional covariates that
/// are carried along but never encoded.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    feature_names: Vec<String>,
    features: Vec<f64>,
    labels: Vec<usize>,
    covariate_names: Vec<String>,
    covariates: Vec<f64>,
}

impl Dataset {
    pub fn new(feature_names: Vec<String>, features: Vec<f64>, labels: Vec<usize>) -> Result<Self, DataError> {
        Self::with_covariates(feature_names, features, labels, Vec::new(), Vec::new())
    }

    pub fn with_covariates(
        feature_names: Vec<String>,
        features: Vec<f64>,
        labels: Vec<usize>,
        covariate_names: Vec<String>,
        covariates: Vec<f64>,
    ) -> Result<Self, DataError> {
        if feature_names.is_empty() {
            return Err(DataError::Schema("a dataset needs at least one feature".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for n in feature_names.iter().chain(&covariate_names) {
            if !seen.insert(n.as_str()) {
                return Err(DataError::DuplicateColumn(n.clone()));
            }
        }
        if features.len() != labels.len() * feature_names.len()
            || covariates.len() != labels.len() * covariate_names.len()
        {
            return Err(DataError::Schema("table sizes disagree with the row count".into()));
        }
        Ok(Self {
            feature_names,
            features,
            labels,
            covariate_names,
            covariates,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.n_features();
        &self.features[i * n..(i + 1) * n]
    }

    pub fn covariate_row(&self, i: usize) -> &[f64] {
        let n = self.covariate_names.len();
        &self.covariates[i * n..(i + 1) * n]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |&m| m + 1).max(2)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_classes()];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|i| self.row(i)[j]).collect()
    }

    /// Covariate column by name.
    pub fn covariate(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.covariate_names.iter().position(|n| n == name)?;
        Some((0..self.n_rows()).map(|i| self.covariate_row(i)[j]).collect())
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut features = Vec::with_capacity(rows.len() * self.n_features());
        let mut covariates = Vec::with_capacity(rows.len() * self.covariate_names.len());
        let mut labels = Vec::with_capacity(rows.len());
        for &i in rows {
            features.extend_from_slice(self.row(i));
            covariates.extend_from_slice(self.covariate_row(i));
            labels.push(self.labels[i]);
        }
        Self {
            feature_names: self.feature_names.clone(),
            features,
            labels,
            covariate_names: self.covariate_names.clone(),
            covariates,
        }
    }

    /// Keeps the named feature columns, in the order given.
    pub fn select_features(&self, names: &[String]) -> Result<Self, DataError> {
        if names.is_empty() {
            return Err(DataError::Schema("cannot select an empty feature set".into()));
        }
        let idx: Vec<usize> = names
            .iter()
            .map(|n| self.feature_index(n).ok_or_else(|| DataError::MissingColumn(n.clone())))
            .collect::<Result<_, _>>()?;
        let mut features = Vec::with_capacity(self.n_rows() * idx.len());
        for i in 0..self.n_rows() {
            let r = self.row(i);
            features.extend(idx.iter().map(|&j| r[j]));
        }
        Self::with_covariates(
            names.to_vec(),
            features,
            self.labels.clone(),
            self.covariate_names.clone(),
            self.covariates.clone(),
        )
    }

    /// Encodes every row for a model with the given spec and topology.
    pub fn to_samples<T: Scalar>(
        &self,
        spec: &FeatureSpec,
        topology: &TreeTopology,
    ) -> Result<Vec<LabeledSample<T>>, DataError> {
        if spec.names() != self.feature_names.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(DataError::Schema(format!(
                "model features {:?} do not match dataset features {:?}",
                spec.names(),
                self.feature_names
            )));
        }
        (0..self.n_rows())
            .map(|i| {
                Ok(LabeledSample {
                    sample: encode(self.row(i), spec, topology)?,
                    label: self.labels[i],
                })
            })
            .collect()
    }
}

/// True for the charge columns of the jet schema (`*_q` and `Q`).
pub fn is_charge_column(name: &str) -> bool {
    name == "Q" || name.ends_with("_q")
}

/// Fits per-feature rescaling on `rows` only. Columns for which `is_charge`
/// holds use the shifted charge encoding; the others use the largest value
/// seen in `rows` (1 if that is not positive).
pub fn fit_feature_spec(
    data: &Dataset,
    rows: &[usize],
    is_charge: impl Fn(&str) -> bool,
) -> Result<FeatureSpec, DataError> {
    let features = data
        .feature_names()
        .iter()
        .enumerate()
        .map(|(j, name)| {
            if is_charge(name) {
                FeatureEncoding {
                    name: name.clone(),
                    kind: FeatureKind::Charge,
                    x_max: 1.0,
                }
            } else {
                let m = rows.iter().map(|&i| data.row(i)[j]).fold(f64::NEG_INFINITY, f64::max);
                FeatureEncoding {
                    name: name.clone(),
                    kind: FeatureKind::Continuous,
                    x_max: if m > 0.0 && m.is_finite() { m } else { 1.0 },
                }
            }
        })
        .collect();
    Ok(FeatureSpec::new(features)?)
}
