use std::fmt::Write as _;

use super::{CompressionError, LatencyStats, TruncationPlan, TruncationTarget};
use crate::scalar::Scalar;
use crate::tensor::svd_split;
use crate::ttn::{absorb, inner_products, TtnModel, LEFT, UP};

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeTruncation {
    /// Node below the edge.
    pub node: usize,
    pub chi_before: usize,
    pub chi_after: usize,
    /// Discarded singular-value weight, relative to the norm of the input
    /// network.
    pub truncation_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressionReport {
    pub edges: Vec<EdgeTruncation>,
    /// `<psi_l|psi'_l> / (|psi_l| |psi'_l|)` per label, in `[0, 1]`.
    pub fidelity: Vec<f64>,
    /// `|psi_l|^2 / sum_m |psi_m|^2` of the input network.
    pub label_weights: Vec<f64>,
    pub params_before: usize,
    pub params_after: usize,
    pub latency_before: Option<LatencyStats>,
    pub latency_after: Option<LatencyStats>,
}

impl CompressionReport {
    /// Root-sum-square of the per-edge errors.
    pub fn accounted_error(&self) -> f64 {
        self.edges.iter().map(|e| e.truncation_error.powi(2)).sum::<f64>().sqrt()
    }

    /// `sqrt(sum_l w_l (1 - F_l^2))`. Equals [`Self::accounted_error`] when a
    /// single edge was cut.
    pub fn fidelity_error(&self) -> f64 {
        self.fidelity
            .iter()
            .zip(&self.label_weights)
            .map(|(f, w)| w * (1.0 - f * f).max(0.0))
            .sum::<f64>()
            .sqrt()
    }

    pub fn min_fidelity(&self) -> f64 {
        self.fidelity.iter().copied().fold(1.0, f64::min)
    }

    /// Tab-separated sections. Latency lines are tagged `wall-clock`.
    pub fn to_table(&self) -> String {
        let mut s = String::from("node\tchi_before\tchi_after\ttruncation_error\n");
        for e in &self.edges {
            let _ = writeln!(s, "{}\t{}\t{}\t{:.6e}", e.node, e.chi_before, e.chi_after, e.truncation_error);
        }
        s.push_str("\nlabel\tweight\tfidelity\n");
        for (l, (f, w)) in self.fidelity.iter().zip(&self.label_weights).enumerate() {
            let _ = writeln!(s, "{l}\t{w:.10}\t{f:.10}");
        }
        let _ = writeln!(s, "\nparams_before\t{}\nparams_after\t{}", self.params_before, self.params_after);
        for (name, lat) in [("before", &self.latency_before), ("after", &self.latency_after)] {
            if let Some(l) = lat {
                let _ = writeln!(
                    s,
                    "wall-clock latency_{name}_us\tmean {:.3}\tp50 {:.3}\tp99 {:.3}",
                    l.mean_us, l.p50_us, l.p99_us
                );
            }
        }
        s
    }
}

/// Entry count over every node tensor that touches at least one real leaf.
pub fn param_count<T: Scalar>(model: &TtnModel<T>) -> usize {
    let topo = model.topology();
    (0..topo.n_nodes()).filter(|&n| !topo.fully_padded(n)).map(|n| model.tensor(n).len()).sum()
}

/// Per-label fidelity between two networks on the same topology.
pub fn label_fidelities<T: Scalar>(a: &TtnModel<T>, b: &TtnModel<T>) -> Result<Vec<f64>, CompressionError> {
    let ab = inner_products(a, b)?;
    let aa = inner_products(a, a)?;
    let bb = inner_products(b, b)?;
    Ok((0..a.n_classes())
        .map(|l| {
            let na = aa[l][l].to_f64_lossy().max(0.0);
            let nb = bb[l][l].to_f64_lossy().max(0.0);
            if na == 0.0 && nb == 0.0 {
                1.0
            } else if na == 0.0 || nb == 0.0 {
                0.0
            } else {
                (ab[l][l].to_f64_lossy().abs() / (na * nb).sqrt()).min(1.0)
            }
        })
        .collect())
}

/// Cuts every internal edge in pre-order. Each cut is an SVD of the parent
/// tensor taken as canonical center, so it is the optimal cut for that edge
/// given the edges already cut. The singular values stay on the parent;
/// the result is not renormalized. Returned in canonical form about the root.
pub fn truncate<T: Scalar>(
    model: &TtnModel<T>,
    plan: &TruncationPlan,
) -> Result<(TtnModel<T>, CompressionReport), CompressionError> {
    plan.validate()?;
    let topo = model.topology().clone();
    let target = |n: usize, current: usize| match &plan.target {
        TruncationTarget::Uniform(chi) => Ok(*chi),
        TruncationTarget::PerEdge(map) => Ok(map.get(&n).copied().unwrap_or(current)),
        TruncationTarget::LatencyBudget(_) => Err(CompressionError::Plan(
            "a latency budget is resolved by tune_for_latency, not truncate".into(),
        )),
    };
    if let TruncationTarget::PerEdge(map) = &plan.target {
        if let Some(&n) = map.keys().find(|&&n| n == 0 || n >= topo.n_nodes()) {
            return Err(CompressionError::Plan(format!("no internal edge above node {n}")));
        }
    }

    let mut m = model.canonicalize(0)?;
    let norm = m.norm()?.to_f64_lossy();
    let cutoff = T::of(plan.cutoff);
    let mut edges = Vec::new();
    for n in topo.preorder().into_iter().filter(|&n| n != 0) {
        let chi_before = model.tensor(n).shape()[UP];
        let cap = target(n, chi_before)?;
        if topo.fully_padded(n) {
            continue;
        }
        let p = topo.parent(n).expect("non-root");
        m.canonicalize_in_place(p)?;
        let leg = topo.leg_toward(p, n);
        let others: Vec<usize> = (0..3).filter(|&l| l != leg).collect();
        let svd = svd_split(m.tensor(p), &others, Some(cap), cutoff).map_err(crate::ttn::ModelError::from)?;
        let k = svd.rank();
        // [others.., k] scaled by the singular values, k moved onto `leg`.
        let mut us = svd.left_isometry.clone();
        for row in us.data_mut().chunks_mut(k) {
            for (x, &s) in row.iter_mut().zip(&svd.singular_values) {
                *x *= s;
            }
        }
        let perm = if leg == LEFT { [2, 0, 1] } else { [0, 2, 1] };
        let parent = us.permute(&perm).map_err(crate::ttn::ModelError::from)?;
        let child = absorb(&svd.right_isometry, m.tensor(n), UP)?;
        let mut tensors = m.tensors().to_vec();
        tensors[p] = parent;
        tensors[n] = child;
        m.replace_tensors(tensors, Some(p))?;
        edges.push(EdgeTruncation {
            node: n,
            chi_before,
            chi_after: k,
            truncation_error: if norm > 0.0 {
                svd.truncation_error.to_f64_lossy() / norm
            } else {
                0.0
            },
        });
    }
    // Moving the center back can shrink bonds whose children were cut
    // (losslessly); report the final extents.
    m.canonicalize_in_place(0)?;
    for e in &mut edges {
        e.chi_after = m.tensor(e.node).shape()[UP];
    }

    let g = inner_products(model, model)?;
    let diag: Vec<f64> = (0..model.n_classes()).map(|l| g[l][l].to_f64_lossy().max(0.0)).collect();
    let total: f64 = diag.iter().sum();
    let report = CompressionReport {
        edges,
        fidelity: label_fidelities(model, &m)?,
        label_weights: diag.iter().map(|d| if total > 0.0 { d / total } else { 0.0 }).collect(),
        params_before: param_count(model),
        params_after: param_count(&m),
        latency_before: None,
        latency_after: None,
    };
    Ok((m, report))
}
