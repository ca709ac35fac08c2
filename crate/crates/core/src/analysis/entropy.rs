use std::fmt::Write as _;

use super::AnalysisError;
use crate::scalar::Scalar;
use crate::tensor::svd_split;
use crate::ttn::{TtnModel, UP};

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureEntropy {
    pub feature: usize,
    pub name: String,
    /// `S^l` of the normalized label state, one entry per label.
    pub per_label: Vec<f64>,
    /// Unweighted mean of `per_label`.
    pub label_mean: f64,
    /// Entropy of the whole normalized network, label leg included on the
    /// far side of the cut.
    pub pooled: f64,
}

/// Entropy across the bond above `node` (its subtree against the rest).
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeEntropy {
    pub node: usize,
    pub bond_dim: usize,
    pub per_label: Vec<f64>,
    pub pooled: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntropyReport {
    pub features: Vec<FeatureEntropy>,
    pub edges: Vec<EdgeEntropy>,
}

/// `-sum p ln p` with `p = s^2 / sum s^2`, in nats.
pub fn von_neumann<T: Scalar>(singular_values: &[T]) -> f64 {
    let total: T = singular_values.iter().map(|&s| s * s).sum();
    if !(total > T::zero()) {
        return 0.0;
    }
    let mut s = T::zero();
    let mut support = 0usize;
    for &x in singular_values {
        let p = x * x / total;
        if p > T::zero() {
            s -= p * p.ln();
            support += 1;
        }
    }
    let bound = (support.max(1) as f64).ln();
    s.to_f64_lossy().clamp(0.0, bound)
}

/// Normalized label states and the normalized full network, all
/// canonical at the root.
pub(crate) struct States<T> {
    pub labels: Vec<TtnModel<T>>,
    pub pooled: TtnModel<T>,
}

pub(crate) fn normalized_states<T: Scalar>(model: &TtnModel<T>) -> Result<States<T>, AnalysisError> {
    let base = model.canonicalize(0)?;
    let mut labels = Vec::with_capacity(model.n_classes());
    for l in 0..model.n_classes() {
        labels.push(normalized(base.label_state(l)?, l)?);
    }
    let pooled = normalized(base, 0)?;
    Ok(States { labels, pooled })
}

fn normalized<T: Scalar>(mut m: TtnModel<T>, label: usize) -> Result<TtnModel<T>, AnalysisError> {
    let n = m.tensor(0).frobenius_norm();
    if !(n > T::zero()) || !n.is_finite() {
        return Err(AnalysisError::ZeroNorm { label });
    }
    let root = m.tensor(0).scaled(T::one() / n);
    m.set_tensor(0, root)?;
    Ok(m)
}

fn leaf_entropy<T: Scalar>(m: &mut TtnModel<T>, leaf: usize) -> Result<f64, AnalysisError> {
    let topo = m.topology().clone();
    let p = topo.leaf_parent(leaf);
    m.canonicalize_in_place(p)?;
    let svd = svd_split(m.tensor(p), &[topo.leaf_side(leaf)], None, T::zero()).map_err(crate::ttn::ModelError::from)?;
    Ok(von_neumann(&svd.full_spectrum))
}

fn bond_entropy<T: Scalar>(m: &mut TtnModel<T>, node: usize) -> Result<f64, AnalysisError> {
    m.canonicalize_in_place(node)?;
    let svd = svd_split(m.tensor(node), &[UP], None, T::zero()).map_err(crate::ttn::ModelError::from)?;
    Ok(von_neumann(&svd.full_spectrum))
}

fn check_feature<T: Scalar>(model: &TtnModel<T>, feature: usize) -> Result<(), AnalysisError> {
    let n = model.topology().n_features();
    if feature >= n {
        return Err(AnalysisError::InvalidFeature { feature, n_features: n });
    }
    Ok(())
}

fn features_from<T: Scalar>(
    model: &TtnModel<T>,
    states: &mut States<T>,
    features: &[usize],
) -> Result<Vec<FeatureEntropy>, AnalysisError> {
    let topo = model.topology().clone();
    let names = model.feature_spec().names();
    let mut out = Vec::with_capacity(features.len());
    for &f in features {
        check_feature(model, f)?;
        let leaf = topo.feature_leaf(f);
        let per_label = states
            .labels
            .iter_mut()
            .map(|m| leaf_entropy(m, leaf))
            .collect::<Result<Vec<_>, _>>()?;
        let label_mean = per_label.iter().sum::<f64>() / per_label.len() as f64;
        let pooled = leaf_entropy(&mut states.pooled, leaf)?;
        out.push(FeatureEntropy {
            feature: f,
            name: names[f].to_string(),
            per_label,
            label_mean,
            pooled,
        });
    }
    Ok(out)
}

/// Schmidt entropy of the cut separating one feature from everything else.
pub fn feature_entropy<T: Scalar>(model: &TtnModel<T>, feature: usize) -> Result<FeatureEntropy, AnalysisError> {
    check_feature(model, feature)?;
    let mut states = normalized_states(model)?;
    Ok(features_from(model, &mut states, &[feature])?.remove(0))
}

/// Entropies across every bond that joins a node to its parent. Subtrees
/// holding only padded leaves are skipped.
pub fn edge_entropies<T: Scalar>(model: &TtnModel<T>) -> Result<Vec<EdgeEntropy>, AnalysisError> {
    let mut states = normalized_states(model)?;
    edges_from(model, &mut states)
}

fn edges_from<T: Scalar>(model: &TtnModel<T>, states: &mut States<T>) -> Result<Vec<EdgeEntropy>, AnalysisError> {
    let topo = model.topology().clone();
    let mut out = Vec::new();
    for n in topo.preorder() {
        if n == topo.root() || topo.fully_padded(n) {
            continue;
        }
        let per_label = states
            .labels
            .iter_mut()
            .map(|m| bond_entropy(m, n))
            .collect::<Result<Vec<_>, _>>()?;
        out.push(EdgeEntropy {
            node: n,
            bond_dim: model.tensor(n).shape()[UP],
            per_label,
            pooled: bond_entropy(&mut states.pooled, n)?,
        });
    }
    Ok(out)
}

/// Every feature and every internal bond.
pub fn entropy_report<T: Scalar>(model: &TtnModel<T>) -> Result<EntropyReport, AnalysisError> {
    let mut states = normalized_states(model)?;
    let all: Vec<usize> = (0..model.topology().n_features()).collect();
    let features = features_from(model, &mut states, &all)?;
    let edges = edges_from(model, &mut states)?;
    Ok(EntropyReport { features, edges })
}

impl EntropyReport {
    /// Tab-separated: feature id, name, one column per label, mean, pooled.
    pub fn feature_table(&self) -> String {
        let nl = self.features.first().map_or(0, |f| f.per_label.len());
        let mut s = String::from("feature\tname");
        for l in 0..nl {
            let _ = write!(s, "\tS_label{l}");
        }
        s.push_str("\tS_mean\tS_pooled\n");
        for f in &self.features {
            let _ = write!(s, "{}\t{}", f.feature, f.name);
            for v in &f.per_label {
                let _ = write!(s, "\t{v:.10}");
            }
            let _ = writeln!(s, "\t{:.10}\t{:.10}", f.label_mean, f.pooled);
        }
        s
    }

    pub fn edge_table(&self) -> String {
        let nl = self.edges.first().map_or(0, |e| e.per_label.len());
        let mut s = String::from("node\tbond_dim");
        for l in 0..nl {
            let _ = write!(s, "\tS_label{l}");
        }
        s.push_str("\tS_pooled\n");
        for e in &self.edges {
            let _ = write!(s, "{}\t{}", e.node, e.bond_dim);
            for v in &e.per_label {
                let _ = write!(s, "\t{v:.10}");
            }
            let _ = writeln!(s, "\t{:.10}", e.pooled);
        }
        s
    }
}
