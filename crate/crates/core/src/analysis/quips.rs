use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{correlations, entropy_report, AnalysisError, CorrelationMatrix, EntropyReport};
use crate::data::Dataset;
use crate::scalar::Scalar;
use crate::ttn::{FeatureSpec, TtnModel};

/// Which per-feature entropy orders the features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntropyAggregation {
    /// Mean over labels of the single-label entropies.
    LabelMean,
    /// Entropy of the whole network, label leg included.
    #[default]
    Pooled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    /// The `k` highest-ranked non-redundant features.
    Top(usize),
    /// Every non-redundant feature with at least this entropy.
    EntropyFloor(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuipsConfig {
    pub selection: Selection,
    /// A pair is redundant when `|C^l_ij|` exceeds this for every label.
    pub redundancy_threshold: f64,
    pub aggregation: EntropyAggregation,
}

impl Default for QuipsConfig {
    fn default() -> Self {
        Self {
            selection: Selection::Top(8),
            redundancy_threshold: 0.99,
            aggregation: EntropyAggregation::default(),
        }
    }
}

impl QuipsConfig {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        if !(self.redundancy_threshold > 0.0 && self.redundancy_threshold <= 1.0) {
            return Err(AnalysisError::Config("redundancy_threshold must lie in (0, 1]".into()));
        }
        if let Selection::EntropyFloor(f) = self.selection {
            if !(f.is_finite() && f >= 0.0) {
                return Err(AnalysisError::Config("entropy floor must be finite and non-negative".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuipsRanking {
    /// Encodings of the analysed model, in feature order.
    pub spec: FeatureSpec,
    pub aggregation: EntropyAggregation,
    /// Aggregated entropy per feature.
    pub entropies: Vec<f64>,
    /// Feature indices by descending entropy, ties by index.
    pub ranking: Vec<usize>,
    /// For redundant features, the higher-ranked partner that covers them.
    pub redundant_with: Vec<Option<usize>>,
    /// Kept features in their original order.
    pub selected: Vec<usize>,
    pub discarded: Vec<usize>,
}

impl QuipsRanking {
    pub fn selected_names(&self) -> Vec<String> {
        let names = self.spec.names();
        self.selected.iter().map(|&i| names[i].to_string()).collect()
    }

    pub fn to_table(&self) -> String {
        let names = self.spec.names();
        let mut s = String::from("rank\tfeature\tname\tentropy\tredundant_with\tselected\n");
        for (r, &i) in self.ranking.iter().enumerate() {
            let red = self.redundant_with[i].map_or_else(|| "-".to_string(), |j| names[j].to_string());
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{:.10}\t{}\t{}",
                r + 1,
                i,
                names[i],
                self.entropies[i],
                red,
                self.selected.contains(&i)
            );
        }
        s
    }
}

pub fn quips<T: Scalar>(model: &TtnModel<T>, config: &QuipsConfig) -> Result<QuipsRanking, AnalysisError> {
    config.validate()?;
    if let Selection::Top(k) = config.selection {
        check_k(k, model.topology().n_features())?;
    }
    let entropy = entropy_report(model)?;
    let corr = correlations(model)?;
    rank(&entropy, &corr, model.feature_spec(), config)
}

fn check_k(k: usize, n: usize) -> Result<(), AnalysisError> {
    if k == 0 || k > n {
        return Err(AnalysisError::SelectionSize { k, n_features: n });
    }
    Ok(())
}

/// Ranking and selection from precomputed entropies and correlations.
pub fn rank(
    entropy: &EntropyReport,
    corr: &[CorrelationMatrix],
    spec: &FeatureSpec,
    config: &QuipsConfig,
) -> Result<QuipsRanking, AnalysisError> {
    config.validate()?;
    let n = spec.len();
    if entropy.features.len() != n || corr.iter().any(|c| c.n() != n) || corr.is_empty() {
        return Err(AnalysisError::Schema("entropies and correlations do not cover the feature set".into()));
    }
    let mut entropies = vec![0.0; n];
    for f in &entropy.features {
        entropies[f.feature] = match config.aggregation {
            EntropyAggregation::LabelMean => f.label_mean,
            EntropyAggregation::Pooled => f.pooled,
        };
    }
    let mut ranking: Vec<usize> = (0..n).collect();
    ranking.sort_by(|&a, &b| entropies[b].total_cmp(&entropies[a]).then(a.cmp(&b)));

    let mut redundant_with = vec![None; n];
    for (a, &i) in ranking.iter().enumerate() {
        if redundant_with[i].is_some() {
            continue;
        }
        for &j in &ranking[a + 1..] {
            if redundant_with[j].is_some() {
                continue;
            }
            let weakest = corr.iter().map(|c| c.get(i, j).abs()).fold(f64::INFINITY, f64::min);
            if weakest > config.redundancy_threshold {
                redundant_with[j] = Some(i);
            }
        }
    }

    let candidates = ranking.iter().copied().filter(|&i| redundant_with[i].is_none());
    let mut selected: Vec<usize> = match config.selection {
        Selection::Top(k) => {
            check_k(k, n)?;
            candidates.take(k).collect()
        }
        Selection::EntropyFloor(f) => candidates.filter(|&i| entropies[i] >= f).collect(),
    };
    selected.sort_unstable();
    let discarded = (0..n).filter(|i| !selected.contains(i)).collect();
    Ok(QuipsRanking {
        spec: spec.clone(),
        aggregation: config.aggregation,
        entropies,
        ranking,
        redundant_with,
        selected,
        discarded,
    })
}

/// Keeps the selected columns and returns the matching sub-specification.
pub fn restrict_dataset(data: &Dataset, ranking: &QuipsRanking) -> Result<(Dataset, FeatureSpec), AnalysisError> {
    let model_names = ranking.spec.names();
    if data.feature_names().iter().map(String::as_str).ne(model_names.iter().copied()) {
        return Err(AnalysisError::Schema(format!(
            "dataset features {:?} differ from the ranked features {:?}",
            data.feature_names(),
            model_names
        )));
    }
    if ranking.selected.is_empty() {
        return Err(AnalysisError::Schema("the ranking selects no features".into()));
    }
    let restricted = data.select_features(&ranking.selected_names())?;
    let spec = FeatureSpec::new(ranking.selected.iter().map(|&i| ranking.spec.features[i].clone()).collect())?;
    Ok((restricted, spec))
}
