use std::fmt::Write as _;

use super::entropy::normalized_states;
use super::AnalysisError;
use crate::scalar::Scalar;
use crate::tensor::{contract, DenseTensor};
use crate::ttn::{Child, ModelError, TtnModel};

/// `C_ij = <psi_l| Z_i Z_j |psi_l> / <psi_l|psi_l>` for one label, with
/// `Z = diag(1, -1)` in the encoding basis.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub label: usize,
    pub names: Vec<String>,
    /// Row-major `n x n`.
    pub values: Vec<f64>,
}

impl CorrelationMatrix {
    pub fn n(&self) -> usize {
        self.names.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n() + j]
    }

    /// Tab-separated grid with a header row of feature names.
    pub fn to_table(&self) -> String {
        let mut s = format!("label{}", self.label);
        for name in &self.names {
            let _ = write!(s, "\t{name}");
        }
        s.push('\n');
        for (i, name) in self.names.iter().enumerate() {
            s.push_str(name);
            for j in 0..self.n() {
                let _ = write!(s, "\t{:.10}", self.get(i, j));
            }
            s.push('\n');
        }
        s
    }
}

pub fn correlation<T: Scalar>(model: &TtnModel<T>, label: usize) -> Result<CorrelationMatrix, AnalysisError> {
    if label >= model.n_classes() {
        return Err(ModelError::InvalidLabel {
            label,
            n_classes: model.n_classes(),
        }
        .into());
    }
    let base = model.canonicalize(0)?;
    let state = base.label_state(label)?;
    let norm2 = state.tensor(0).dot(state.tensor(0));
    if !(norm2 > T::zero()) || !norm2.is_finite() {
        return Err(AnalysisError::ZeroNorm { label });
    }
    Ok(matrix(&state, label, norm2)?)
}

/// One matrix per label.
pub fn correlations<T: Scalar>(model: &TtnModel<T>) -> Result<Vec<CorrelationMatrix>, AnalysisError> {
    // Fails early with the offending label if any state vanishes.
    normalized_states(model)?;
    (0..model.n_classes()).map(|l| correlation(model, l)).collect()
}

fn matrix<T: Scalar>(state: &TtnModel<T>, label: usize, norm2: T) -> Result<CorrelationMatrix, ModelError> {
    let topo = state.topology();
    let n = topo.n_features();
    let mut values = vec![1.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let ops = [topo.feature_leaf(i), topo.feature_leaf(j)];
            let c = (expectation(state, &ops)? / norm2).to_f64_lossy();
            values[i * n + j] = c;
            values[j * n + i] = c;
        }
    }
    Ok(CorrelationMatrix {
        label,
        names: state.feature_spec().names().iter().map(|s| s.to_string()).collect(),
        values,
    })
}

/// `<psi| prod_{leaf in ops} Z_leaf |psi>` for a single-label state whose
/// non-root tensors are isometric toward the root. Subtrees without an
/// operator reduce to the identity and are never contracted.
fn expectation<T: Scalar>(state: &TtnModel<T>, ops: &[usize]) -> Result<T, ModelError> {
    let e = environment(state, 0, ops)?;
    Ok(match e {
        Some(e) => e.data().iter().copied().sum(),
        None => state.tensor(0).dot(state.tensor(0)),
    })
}

fn pauli_z<T: Scalar>(d: usize) -> DenseTensor<T> {
    DenseTensor::from_fn(&[d, d], |ix| {
        if ix[0] != ix[1] {
            T::zero()
        } else if ix[0] == 0 {
            T::one()
        } else {
            -T::one()
        }
    })
}

fn environment<T: Scalar>(state: &TtnModel<T>, node: usize, ops: &[usize]) -> Result<Option<DenseTensor<T>>, ModelError> {
    let topo = state.topology();
    let child = |c: Child| -> Result<Option<DenseTensor<T>>, ModelError> {
        match c {
            Child::Leaf(l) if ops.contains(&l) => Ok(Some(pauli_z(topo.phys_dim(l)))),
            Child::Leaf(_) => Ok(None),
            Child::Node(m) if ops.iter().any(|&l| topo.in_subtree(topo.leaf_parent(l), m)) => environment(state, m, ops),
            Child::Node(_) => Ok(None),
        }
    };
    let [lc, rc] = topo.children(node);
    let (el, er) = (child(lc)?, child(rc)?);
    if el.is_none() && er.is_none() {
        return Ok(None);
    }
    let t = state.tensor(node);
    let el = el.unwrap_or_else(|| DenseTensor::identity(t.shape()[0]));
    let er = er.unwrap_or_else(|| DenseTensor::identity(t.shape()[1]));
    // x[a, b', p'] = sum_a' el[a, a'] t[a', b', p']
    let x = contract(&el, t, &[(1, 0)])?;
    // y[a, p', b] = sum_b' x[a, b', p'] er[b, b']
    let y = contract(&x, &er, &[(1, 1)])?;
    // e[p, p'] = sum_ab t[a, b, p] y[a, p', b]
    Ok(Some(contract(t, &y, &[(0, 0), (1, 2)])?))
}
