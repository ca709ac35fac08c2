use rand::Rng;

use super::topology::{Child, TreeTopology, LEFT, RIGHT, UP};
use super::{EncodedSample, FeatureSpec, ModelError};
use crate::scalar::Scalar;
use crate::tensor::{contract, qr_split, DenseTensor};

/// Largest leaf count accepted by [`TtnModel::full_expand`].
pub const FULL_EXPAND_MAX_LEAVES: usize = 12;

/// Outcome of the abstention rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Class(usize),
    Abstain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionResult<T> {
    /// One normalized probability per class.
    pub confidences: Vec<T>,
    pub decision: Decision,
    /// `|<Phi(x)|psi_l>|` before normalization.
    pub raw_overlaps: Vec<T>,
}

/// Applies the symmetric abstention band `delta` around 0.5.
///
/// Binary models decide on `P_0` alone: class 0 iff `P_0 > 0.5 + delta/2`,
/// class 1 iff `P_0 < 0.5 - delta/2`. With more classes the arg-max class is
/// returned when its confidence exceeds `0.5 + delta/2`.
pub fn decide<T: Scalar>(confidences: &[T], delta: f64) -> Decision {
    let hi = 0.5 + 0.5 * delta;
    let lo = 0.5 - 0.5 * delta;
    if confidences.len() == 2 {
        let p = confidences[0].to_f64_lossy();
        if p > hi {
            Decision::Class(0)
        } else if p < lo {
            Decision::Class(1)
        } else {
            Decision::Abstain
        }
    } else {
        let (best, p) = confidences
            .iter()
            .enumerate()
            .fold((0, T::neg_infinity()), |acc, (i, &p)| if p > acc.1 { (i, p) } else { acc });
        if p.to_f64_lossy() > hi {
            Decision::Class(best)
        } else {
            Decision::Abstain
        }
    }
}

/// Scratch buffers for repeated predictions without allocation.
#[derive(Debug, Clone, Default)]
pub struct Workspace<T> {
    node_vectors: Vec<Vec<T>>,
}

/// The tree tensor network classifier.
///
/// Node tensors have legs `[left child, right child, parent]`; the root's
/// parent leg is the label leg. Padded leaves carry a physical extent of 1.
#[derive(Debug, Clone, PartialEq)]
pub struct TtnModel<T> {
    topology: TreeTopology,
    tensors: Vec<DenseTensor<T>>,
    n_classes: usize,
    center: Option<usize>,
    feature_spec: FeatureSpec,
}

impl<T: Scalar> TtnModel<T> {
    pub fn from_parts(
        topology: TreeTopology,
        tensors: Vec<DenseTensor<T>>,
        n_classes: usize,
        feature_spec: FeatureSpec,
        center: Option<usize>,
    ) -> Result<Self, ModelError> {
        let m = Self {
            topology,
            tensors,
            n_classes,
            center,
            feature_spec,
        };
        m.validate()?;
        Ok(m)
    }

    /// Gaussian entries with the given edge dimensions; no gauge is imposed.
    pub fn random<R: Rng + ?Sized>(
        topology: TreeTopology,
        feature_spec: FeatureSpec,
        n_classes: usize,
        chi_max: usize,
        rng: &mut R,
    ) -> Result<Self, ModelError> {
        let dims = bond_dimensions(&topology, n_classes, chi_max);
        let tensors = (0..topology.n_nodes())
            .map(|n| DenseTensor::random_normal(&node_shape(&topology, &dims, n, n_classes), rng))
            .collect();
        Self::from_parts(topology, tensors, n_classes, feature_spec, None)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let topo = &self.topology;
        if self.n_classes == 0 {
            return Err(ModelError::Structure("n_classes must be positive".into()));
        }
        if self.tensors.len() != topo.n_nodes() {
            return Err(ModelError::Structure(format!(
                "{} tensors for {} internal nodes",
                self.tensors.len(),
                topo.n_nodes()
            )));
        }
        if self.feature_spec.len() != topo.n_features() {
            return Err(ModelError::Structure(format!(
                "feature spec has {} entries, topology {}",
                self.feature_spec.len(),
                topo.n_features()
            )));
        }
        for (n, t) in self.tensors.iter().enumerate() {
            if t.order() != 3 {
                return Err(ModelError::Structure(format!("node {n} tensor has order {}", t.order())));
            }
            for (leg, c) in topo.children(n).into_iter().enumerate() {
                let expected = match c {
                    Child::Leaf(l) => topo.phys_dim(l),
                    Child::Node(m) => self.tensors[m].shape()[UP],
                };
                if t.shape()[leg] != expected {
                    return Err(ModelError::Structure(format!(
                        "node {n} leg {leg} has extent {} but its neighbour expects {expected}",
                        t.shape()[leg]
                    )));
                }
            }
            if n == 0 && t.shape()[UP] != self.n_classes {
                return Err(ModelError::Structure(format!(
                    "root label leg has extent {} for {} classes",
                    t.shape()[UP],
                    self.n_classes
                )));
            }
            if n > 0 && t.shape()[UP] > topo.phys_product_below(n) {
                return Err(ModelError::Structure(format!(
                    "bond above node {n} exceeds the physical dimension below it"
                )));
            }
        }
        if let Some(c) = self.center {
            if c >= topo.n_nodes() {
                return Err(ModelError::InvalidNode(c));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn topology(&self) -> &TreeTopology {
        &self.topology
    }

    #[inline]
    pub fn feature_spec(&self) -> &FeatureSpec {
        &self.feature_spec
    }

    #[inline]
    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    #[inline]
    pub fn canonical_center(&self) -> Option<usize> {
        self.center
    }

    #[inline]
    pub fn tensors(&self) -> &[DenseTensor<T>] {
        &self.tensors
    }

    #[inline]
    pub fn tensor(&self, node: usize) -> &DenseTensor<T> {
        &self.tensors[node]
    }

    /// Replaces one node tensor (same shape). The canonical center survives
    /// only if `node` is the center itself.
    pub fn set_tensor(&mut self, node: usize, tensor: DenseTensor<T>) -> Result<(), ModelError> {
        if node >= self.tensors.len() {
            return Err(ModelError::InvalidNode(node));
        }
        if tensor.shape() != self.tensors[node].shape() {
            return Err(ModelError::Structure(format!(
                "replacement for node {node} has shape {:?}, expected {:?}",
                tensor.shape(),
                self.tensors[node].shape()
            )));
        }
        self.tensors[node] = tensor;
        if self.center != Some(node) {
            self.center = None;
        }
        Ok(())
    }

    pub(crate) fn replace_tensors(&mut self, tensors: Vec<DenseTensor<T>>, center: Option<usize>) -> Result<(), ModelError> {
        self.tensors = tensors;
        self.center = center;
        self.validate()
    }

    pub fn set_feature_spec(&mut self, spec: FeatureSpec) -> Result<(), ModelError> {
        if spec.len() != self.topology.n_features() {
            return Err(ModelError::FeatureCount {
                expected: self.topology.n_features(),
                actual: spec.len(),
            });
        }
        self.feature_spec = spec;
        Ok(())
    }

    /// Extent of the bond above each internal node, indexed by node
    /// (entry 0 is the label leg).
    pub fn bond_dims(&self) -> Vec<usize> {
        self.tensors.iter().map(|t| t.shape()[UP]).collect()
    }

    pub fn max_bond(&self) -> usize {
        self.tensors.iter().skip(1).map(|t| t.shape()[UP]).max().unwrap_or(1)
    }

    pub fn cast<U: Scalar>(&self) -> TtnModel<U> {
        TtnModel {
            topology: self.topology.clone(),
            tensors: self.tensors.iter().map(|t| t.cast()).collect(),
            n_classes: self.n_classes,
            center: self.center,
            feature_spec: self.feature_spec.clone(),
        }
    }

    /// Multiplies every node tensor by `factor`. The gauge is dropped
    /// unless that leaves the isometries intact.
    pub fn scaled_all(&self, factor: T) -> Self {
        let mut m = self.clone();
        for t in &mut m.tensors {
            t.scale(factor);
        }
        if factor.abs() != T::one() && m.tensors.len() > 1 {
            m.center = None;
        }
        m
    }

    pub fn encode(&self, features: &[f64]) -> Result<EncodedSample<T>, ModelError> {
        super::encode(features, &self.feature_spec, &self.topology)
    }

    pub fn workspace(&self) -> Workspace<T> {
        Workspace {
            node_vectors: self.tensors.iter().map(|t| vec![T::zero(); t.shape()[UP]]).collect(),
        }
    }

    /// Signed overlaps `<Phi(x)|psi_l>` for every label.
    pub fn overlaps(&self, sample: &EncodedSample<T>) -> Result<Vec<T>, ModelError> {
        let mut ws = self.workspace();
        Ok(self.overlaps_with(sample, &mut ws)?.to_vec())
    }

    /// Allocation-free form of [`Self::overlaps`].
    pub fn overlaps_with<'w>(&self, sample: &EncodedSample<T>, ws: &'w mut Workspace<T>) -> Result<&'w [T], ModelError> {
        if sample.n_leaves() != self.topology.n_leaves() {
            return Err(ModelError::FeatureCount {
                expected: self.topology.n_leaves(),
                actual: sample.n_leaves(),
            });
        }
        if ws.node_vectors.len() != self.tensors.len()
            || ws.node_vectors.iter().zip(&self.tensors).any(|(v, t)| v.len() != t.shape()[UP])
        {
            *ws = self.workspace();
        }
        for n in (0..self.tensors.len()).rev() {
            let (lower, upper) = ws.node_vectors.split_at_mut(n + 1);
            let out = &mut lower[n];
            let [lc, rc] = self.topology.children(n);
            let left: &[T] = match lc {
                Child::Leaf(l) => &sample.local_states[l][..self.topology.phys_dim(l)],
                Child::Node(m) => &upper[m - n - 1],
            };
            let right: &[T] = match rc {
                Child::Leaf(l) => &sample.local_states[l][..self.topology.phys_dim(l)],
                Child::Node(m) => &upper[m - n - 1],
            };
            contract_node(&self.tensors[n], left, right, out);
        }
        Ok(&ws.node_vectors[0])
    }

    pub fn classify(&self, sample: &EncodedSample<T>, delta: f64) -> Result<PredictionResult<T>, ModelError> {
        let mut ws = self.workspace();
        self.classify_with(sample, delta, &mut ws)
    }

    pub fn classify_with(
        &self,
        sample: &EncodedSample<T>,
        delta: f64,
        ws: &mut Workspace<T>,
    ) -> Result<PredictionResult<T>, ModelError> {
        let overlaps = self.overlaps_with(sample, ws)?;
        let confidences = normalize_overlaps(overlaps)?;
        let decision = decide(&confidences, delta);
        Ok(PredictionResult {
            confidences,
            decision,
            raw_overlaps: overlaps.iter().map(|x| x.abs()).collect(),
        })
    }

    /// Returns a copy in canonical form around `center`.
    pub fn canonicalize(&self, center: usize) -> Result<Self, ModelError> {
        let mut m = self.clone();
        m.canonicalize_in_place(center)?;
        Ok(m)
    }

    pub fn canonicalize_in_place(&mut self, center: usize) -> Result<(), ModelError> {
        if center >= self.topology.n_nodes() {
            return Err(ModelError::InvalidNode(center));
        }
        self.validate()?;
        match self.center {
            Some(c) if c == center => Ok(()),
            Some(c) => {
                let path = self.topology.path(c, center);
                for w in path.windows(2) {
                    self.move_center(w[1])?;
                }
                Ok(())
            }
            None => {
                self.full_canonicalize(center)?;
                Ok(())
            }
        }
    }

    fn full_canonicalize(&mut self, center: usize) -> Result<(), ModelError> {
        let topo = self.topology.clone();
        let mut order: Vec<usize> = (0..topo.n_nodes()).filter(|&n| n != center).collect();
        order.sort_by_key(|&n| std::cmp::Reverse(topo.path(n, center).len()));
        for n in order {
            let toward = topo.leg_toward(n, center);
            let neighbour = topo.neighbour(n, toward).expect("path to center runs through internal nodes");
            self.push_gauge(n, toward, neighbour)?;
        }
        self.center = Some(center);
        Ok(())
    }

    /// Moves the canonical center to an adjacent node with one QR step.
    pub fn move_center(&mut self, to: usize) -> Result<(), ModelError> {
        let from = self.center.ok_or_else(|| ModelError::Structure("model is not canonical".into()))?;
        if self.topology.parent(to) != Some(from) && self.topology.parent(from) != Some(to) {
            return Err(ModelError::Structure(format!("nodes {from} and {to} are not adjacent")));
        }
        let leg = self.topology.leg_toward(from, to);
        self.push_gauge(from, leg, to)?;
        self.center = Some(to);
        Ok(())
    }

    /// Makes node `n` isometric toward `leg` and absorbs the remainder into
    /// the internal neighbour on that leg. Returns the changed node ids.
    pub(crate) fn push_gauge(&mut self, n: usize, leg: usize, neighbour: usize) -> Result<(), ModelError> {
        let others: Vec<usize> = (0..3).filter(|&l| l != leg).collect();
        let (q, r) = qr_split(&self.tensors[n], &others)?;
        // q has legs [others.., k]; restore [left, right, up] with k on `leg`.
        let perm = match leg {
            UP => [0, 1, 2],
            LEFT => [2, 0, 1],
            _ => [0, 2, 1],
        };
        self.tensors[n] = q.permute(&perm)?;
        let nleg = self.topology.leg_toward(neighbour, n);
        self.tensors[neighbour] = absorb(&r, &self.tensors[neighbour], nleg)?;
        Ok(())
    }

    /// Checks that node `n` is isometric toward `leg` within `tol`.
    pub fn is_isometric_toward(&self, n: usize, leg: usize, tol: f64) -> bool {
        let t = &self.tensors[n];
        let others: Vec<(usize, usize)> = (0..3).filter(|&l| l != leg).map(|l| (l, l)).collect();
        let Ok(g) = contract(t, t, &others) else { return false };
        let k = t.shape()[leg];
        g.max_abs_diff(&DenseTensor::identity(k)).to_f64_lossy() <= tol
    }

    /// Verifies the gauge claimed by `canonical_center`.
    pub fn check_canonical(&self, tol: f64) -> bool {
        let Some(c) = self.center else { return false };
        (0..self.topology.n_nodes())
            .filter(|&n| n != c)
            .all(|n| self.is_isometric_toward(n, self.topology.leg_toward(n, c), tol))
    }

    /// Frobenius norm of the full network (all labels).
    pub fn norm(&self) -> Result<T, ModelError> {
        if let Some(c) = self.center {
            return Ok(self.tensors[c].frobenius_norm());
        }
        let g = inner_products(self, self)?;
        Ok((0..self.n_classes).map(|l| g[l][l]).sum::<T>().max(T::zero()).sqrt())
    }

    /// Norm of each label state `|psi_l>`.
    pub fn label_norms(&self) -> Result<Vec<T>, ModelError> {
        let g = inner_products(self, self)?;
        Ok((0..self.n_classes).map(|l| g[l][l].max(T::zero()).sqrt()).collect())
    }

    /// The single-label network `|psi_l>` (label leg of extent 1).
    pub fn label_state(&self, label: usize) -> Result<Self, ModelError> {
        if label >= self.n_classes {
            return Err(ModelError::InvalidLabel {
                label,
                n_classes: self.n_classes,
            });
        }
        let root = &self.tensors[0];
        let [dl, dr, dp] = [root.shape()[0], root.shape()[1], root.shape()[2]];
        let data: Vec<T> = (0..dl * dr).map(|ab| root.data()[ab * dp + label]).collect();
        let mut m = self.clone();
        m.tensors[0] = DenseTensor::new(vec![dl, dr, 1], data)?;
        m.n_classes = 1;
        if m.center != Some(0) {
            m.center = None;
        }
        Ok(m)
    }

    /// Contracts every node into one tensor of shape
    /// `[phys(leaf 0), .., phys(leaf L-1), n_classes]`.
    pub fn full_expand(&self) -> Result<DenseTensor<T>, ModelError> {
        if self.topology.n_leaves() > FULL_EXPAND_MAX_LEAVES {
            return Err(ModelError::TooManyLeaves {
                n_leaves: self.topology.n_leaves(),
                limit: FULL_EXPAND_MAX_LEAVES,
            });
        }
        self.expand_subtree(0)
    }

    fn expand_subtree(&self, n: usize) -> Result<DenseTensor<T>, ModelError> {
        let sub = |c: Child| -> Result<DenseTensor<T>, ModelError> {
            match c {
                Child::Leaf(l) => Ok(DenseTensor::identity(self.topology.phys_dim(l))),
                Child::Node(m) => self.expand_subtree(m),
            }
        };
        let [lc, rc] = self.topology.children(n);
        let left = sub(lc)?;
        let right = sub(rc)?;
        let t = &self.tensors[n];
        let nl = left.order() - 1;
        let nr = right.order() - 1;
        // [left leaves.., r, p]
        let x = contract(&left, t, &[(nl, 0)])?;
        // [left leaves.., p, right leaves..]
        let y = contract(&x, &right, &[(nl, nr)])?;
        let mut perm: Vec<usize> = (0..nl).collect();
        perm.extend(nl + 1..nl + 1 + nr);
        perm.push(nl);
        Ok(y.permute(&perm)?)
    }
}

/// `out[p] = sum_ab t[a, b, p] * left[a] * right[b]`.
#[inline]
pub(crate) fn contract_node<T: Scalar>(t: &DenseTensor<T>, left: &[T], right: &[T], out: &mut [T]) {
    let dr = right.len();
    let dp = out.len();
    let data = t.data();
    out.iter_mut().for_each(|x| *x = T::zero());
    for (a, &la) in left.iter().enumerate() {
        if la == T::zero() {
            continue;
        }
        for (b, &rb) in right.iter().enumerate() {
            let w = la * rb;
            let row = &data[(a * dr + b) * dp..(a * dr + b + 1) * dp];
            for (o, &v) in out.iter_mut().zip(row) {
                *o += w * v;
            }
        }
    }
}

/// `P_l = o_l^2 / sum o^2`; errors when every overlap vanishes.
pub fn normalize_overlaps<T: Scalar>(overlaps: &[T]) -> Result<Vec<T>, ModelError> {
    let z: T = overlaps.iter().map(|&o| o * o).sum();
    if !(z > T::zero()) || !z.is_finite() {
        return Err(ModelError::Degenerate);
    }
    Ok(overlaps.iter().map(|&o| o * o / z).collect())
}

/// `R[k, j]` contracted into `leg` of a node tensor, which then has extent `k` there.
pub(crate) fn absorb<T: Scalar>(r: &DenseTensor<T>, t: &DenseTensor<T>, leg: usize) -> Result<DenseTensor<T>, ModelError> {
    // [k, other legs of t..]
    let x = contract(r, t, &[(1, leg)])?;
    let perm = match leg {
        LEFT => [0, 1, 2],
        RIGHT => [1, 0, 2],
        _ => [1, 2, 0],
    };
    Ok(x.permute(&perm)?)
}

/// Label-by-label inner products `<psi^a_l | psi^b_m>` of two networks on
/// the same topology (bond dimensions may differ).
pub fn inner_products<T: Scalar>(a: &TtnModel<T>, b: &TtnModel<T>) -> Result<Vec<Vec<T>>, ModelError> {
    if a.topology.leaf_features() != b.topology.leaf_features() {
        return Err(ModelError::Structure("inner product of networks on different topologies".into()));
    }
    let topo = &a.topology;
    let mut env: Vec<Option<DenseTensor<T>>> = vec![None; topo.n_nodes()];
    for n in (0..topo.n_nodes()).rev() {
        let mats: Vec<Option<DenseTensor<T>>> = topo
            .children(n)
            .into_iter()
            .map(|c| match c {
                Child::Leaf(_) => None,
                Child::Node(m) => env[m].take(),
            })
            .collect();
        let ta = &a.tensors[n];
        let tb = &b.tensors[n];
        // [a', b, p] after applying the left environment to the leg of `ta`.
        let x = match &mats[0] {
            Some(ml) => contract(ml, ta, &[(0, 0)])?,
            None => ta.clone(),
        };
        // [a', p, b']
        let x = match &mats[1] {
            Some(mr) => contract(&x, mr, &[(1, 0)])?,
            None => x.permute(&[0, 2, 1])?,
        };
        // [p, p']
        let m = contract(&x, tb, &[(0, 0), (2, 1)])?;
        env[n] = Some(m);
    }
    let root = env[0].take().expect("root environment");
    let (na, nb) = (root.shape()[0], root.shape()[1]);
    Ok((0..na).map(|i| (0..nb).map(|j| root.get(&[i, j])).collect()).collect())
}

/// Edge extents for a given `chi_max`: every bond is capped by `chi_max`
/// and by the product of the extents on each side, so canonicalization never
/// needs to shrink a bond. Entry `n` is the bond above node `n`; entry 0 is the
/// label leg.
pub fn bond_dimensions(topology: &TreeTopology, n_classes: usize, chi_max: usize) -> Vec<usize> {
    let chi = chi_max.max(1);
    let nn = topology.n_nodes();
    let mut dims = vec![0usize; nn];
    let child_dim = |dims: &[usize], c: Child| match c {
        Child::Leaf(l) => topology.phys_dim(l),
        Child::Node(m) => dims[m],
    };
    for n in (1..nn).rev() {
        let [l, r] = topology.children(n);
        dims[n] = chi
            .min(child_dim(&dims, l).saturating_mul(child_dim(&dims, r)))
            .min(n_classes.saturating_mul(topology.phys_product_outside(n)));
    }
    dims[0] = n_classes;
    loop {
        let mut changed = false;
        for n in 1..nn {
            let p = topology.parent(n).expect("non-root");
            let sib = child_dim(&dims, topology.sibling(n));
            let bound = sib.saturating_mul(dims[p]);
            if dims[n] > bound {
                dims[n] = bound;
                changed = true;
            }
        }
        for n in (1..nn).rev() {
            let [l, r] = topology.children(n);
            let bound = child_dim(&dims, l).saturating_mul(child_dim(&dims, r));
            if dims[n] > bound {
                dims[n] = bound;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    dims
}

pub(crate) fn node_shape(topology: &TreeTopology, dims: &[usize], n: usize, n_classes: usize) -> Vec<usize> {
    let [l, r] = topology.children(n);
    let d = |c: Child| match c {
        Child::Leaf(l) => topology.phys_dim(l),
        Child::Node(m) => dims[m],
    };
    vec![d(l), d(r), if n == 0 { n_classes } else { dims[n] }]
}
