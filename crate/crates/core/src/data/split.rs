use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub train_fraction: f64,
    /// Share of the training part held out for validation.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.6,
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

/// Row indices of each part, ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified by label: each class is shuffled on its own and cut with the
/// same fractions.
pub fn split(data: &Dataset, spec: &SplitSpec) -> Result<Split, DataError> {
    let in_unit = |f: f64| f > 0.0 && f < 1.0;
    if !in_unit(spec.train_fraction) {
        return Err(DataError::Split(format!("train_fraction {} not in (0, 1)", spec.train_fraction)));
    }
    if !(spec.validation_fraction == 0.0 || in_unit(spec.validation_fraction)) {
        return Err(DataError::Split(format!(
            "validation_fraction {} not in [0, 1)",
            spec.validation_fraction
        )));
    }
    if data.n_rows() < 10 {
        return Err(DataError::Split(format!("{} rows are too few to split", data.n_rows())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Split {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    for class in 0..data.n_classes() {
        let mut rows: Vec<usize> = (0..data.n_rows()).filter(|&i| data.labels()[i] == class).collect();
        rows.shuffle(&mut rng);
        let n_train = (rows.len() as f64 * spec.train_fraction).round() as usize;
        let n_val = (n_train as f64 * spec.validation_fraction).round() as usize;
        out.validation.extend_from_slice(&rows[..n_val]);
        out.train.extend_from_slice(&rows[n_val..n_train]);
        out.test.extend_from_slice(&rows[n_train..]);
    }
    out.train.sort_unstable();
    out.validation.sort_unstable();
    out.test.sort_unstable();
    Ok(out)
}
