//! Per-sample environment caches for one-site optimization.
//!
//! `bottom[n]` holds, for every sample, the vector obtained by contracting the
//! subtree below node `n` (length `dp`); `top[n]` holds the `dp x n_classes`
//! matrix mapping that vector to the label overlaps through the rest of the
//! tree. Both are invalidated when a tensor they depend on changes.

use rayon::prelude::*;

use super::LabeledSample;
use crate::scalar::Scalar;
use crate::ttn::{contract_node, Child, TreeTopology, TtnModel, LEFT, UP};

pub(crate) struct EnvCache<T> {
    bottom: Vec<Vec<T>>,
    bottom_ok: Vec<bool>,
    top: Vec<Vec<T>>,
    top_ok: Vec<bool>,
}

/// Everything a one-site update at `center` needs for one sample.
pub(crate) struct LocalEnv<'a, T> {
    pub left: &'a [T],
    pub right: &'a [T],
    /// `dp x n_classes`, row-major; `None` at the root (identity).
    pub top: Option<&'a [T]>,
}

fn leaf_state<'a, T: Scalar>(topo: &TreeTopology, s: &'a LabeledSample<T>, leaf: usize) -> &'a [T] {
    &s.sample.local_states[leaf][..topo.phys_dim(leaf)]
}

impl<T: Scalar> EnvCache<T> {
    pub fn new(n_nodes: usize) -> Self {
        Self {
            bottom: vec![Vec::new(); n_nodes],
            bottom_ok: vec![false; n_nodes],
            top: vec![Vec::new(); n_nodes],
            top_ok: vec![false; n_nodes],
        }
    }

    /// Marks everything that depends on the tensor at `node` as stale.
    pub fn invalidate(&mut self, topo: &TreeTopology, node: usize) {
        let anc = topo.ancestors_inclusive(node);
        for &a in &anc {
            self.bottom_ok[a] = false;
        }
        for n in 0..self.top_ok.len() {
            if !anc.contains(&n) {
                self.top_ok[n] = false;
            }
        }
    }

    fn child_vec<'a>(
        &'a self,
        topo: &TreeTopology,
        samples: &'a [LabeledSample<T>],
        c: Child,
        dims: &[usize],
        i: usize,
    ) -> &'a [T] {
        match c {
            Child::Leaf(l) => leaf_state(topo, &samples[i], l),
            Child::Node(m) => &self.bottom[m][i * dims[m]..(i + 1) * dims[m]],
        }
    }

    pub fn ensure_bottom(&mut self, model: &TtnModel<T>, samples: &[LabeledSample<T>], n: usize) {
        if self.bottom_ok[n] {
            return;
        }
        let topo = model.topology();
        let [lc, rc] = topo.children(n);
        for c in [lc, rc] {
            if let Child::Node(m) = c {
                self.ensure_bottom(model, samples, m);
            }
        }
        let dims = model.bond_dims();
        let dp = dims[n];
        let mut buf = std::mem::take(&mut self.bottom[n]);
        buf.clear();
        buf.resize(samples.len() * dp, T::zero());
        let t = model.tensor(n);
        let this = &*self;
        buf.par_chunks_mut(dp).enumerate().for_each(|(i, out)| {
            let l = this.child_vec(topo, samples, lc, &dims, i);
            let r = this.child_vec(topo, samples, rc, &dims, i);
            contract_node(t, l, r, out);
        });
        self.bottom[n] = buf;
        self.bottom_ok[n] = true;
    }

    pub fn ensure_top(&mut self, model: &TtnModel<T>, samples: &[LabeledSample<T>], n: usize) {
        let topo = model.topology();
        let Some(p) = topo.parent(n) else { return };
        if self.top_ok[n] {
            return;
        }
        self.ensure_top(model, samples, p);
        let sib = topo.sibling(n);
        if let Child::Node(s) = sib {
            self.ensure_bottom(model, samples, s);
        }
        let dims = model.bond_dims();
        let nc = model.n_classes();
        let (dn, dq) = (dims[n], dims[p]);
        let tp = model.tensor(p);
        let [pl, pr, _] = [tp.shape()[0], tp.shape()[1], tp.shape()[2]];
        let side = topo.side_of(n);
        let mut buf = std::mem::take(&mut self.top[n]);
        buf.clear();
        buf.resize(samples.len() * dn * nc, T::zero());
        let this = &*self;
        let data = tp.data();
        buf.par_chunks_mut(dn * nc).enumerate().for_each_init(
            || vec![T::zero(); dn * dq],
            |m, (i, out)| {
                let vs = this.child_vec(topo, samples, sib, &dims, i);
                // m[x, q] = sum_y T_p[.., q] vs[y] with x on this node's leg.
                m.iter_mut().for_each(|v| *v = T::zero());
                for a in 0..pl {
                    for b in 0..pr {
                        let (x, w) = if side == LEFT { (a, vs[b]) } else { (b, vs[a]) };
                        if w == T::zero() {
                            continue;
                        }
                        let row = &data[(a * pr + b) * dq..(a * pr + b + 1) * dq];
                        let mrow = &mut m[x * dq..(x + 1) * dq];
                        for (mv, &tv) in mrow.iter_mut().zip(row) {
                            *mv += w * tv;
                        }
                    }
                }
                match topo.parent(p) {
                    None => out.copy_from_slice(m),
                    Some(_) => {
                        let up = &this.top[p][i * dq * nc..(i + 1) * dq * nc];
                        for x in 0..dn {
                            let o = &mut out[x * nc..(x + 1) * nc];
                            o.iter_mut().for_each(|v| *v = T::zero());
                            for q in 0..dq {
                                let w = m[x * dq + q];
                                for (ov, &uv) in o.iter_mut().zip(&up[q * nc..(q + 1) * nc]) {
                                    *ov += w * uv;
                                }
                            }
                        }
                    }
                }
            },
        );
        self.top[n] = buf;
        self.top_ok[n] = true;
    }

    /// Brings every environment of `center` up to date.
    pub fn prepare(&mut self, model: &TtnModel<T>, samples: &[LabeledSample<T>], center: usize) {
        for c in model.topology().children(center) {
            if let Child::Node(m) = c {
                self.ensure_bottom(model, samples, m);
            }
        }
        self.ensure_top(model, samples, center);
    }

    /// Requires a prior [`Self::prepare`] for the same center.
    pub fn view<'a>(&'a self, model: &TtnModel<T>, samples: &'a [LabeledSample<T>], center: usize) -> LocalView<'a, T> {
        let topo = model.topology();
        let src = |c: Child| match c {
            Child::Leaf(l) => Source::Leaf(l, topo.phys_dim(l)),
            Child::Node(m) => Source::Node(&self.bottom[m], model.tensor(m).shape()[UP]),
        };
        let [lc, rc] = topo.children(center);
        let nc = model.n_classes();
        let dp = model.tensor(center).shape()[UP];
        LocalView {
            samples,
            left: src(lc),
            right: src(rc),
            top: if center == 0 { None } else { Some(&self.top[center]) },
            top_len: dp * nc,
        }
    }
}

enum Source<'a, T> {
    Leaf(usize, usize),
    Node(&'a [T], usize),
}

impl<'a, T: Scalar> Source<'a, T> {
    #[inline]
    fn get(&self, samples: &'a [LabeledSample<T>], i: usize) -> &'a [T] {
        match *self {
            Source::Leaf(l, d) => &samples[i].sample.local_states[l][..d],
            Source::Node(v, d) => &v[i * d..(i + 1) * d],
        }
    }
}

/// Cheap per-sample access to the environments of a fixed center.
pub(crate) struct LocalView<'a, T> {
    pub samples: &'a [LabeledSample<T>],
    left: Source<'a, T>,
    right: Source<'a, T>,
    top: Option<&'a [T]>,
    top_len: usize,
}

impl<'a, T: Scalar> LocalView<'a, T> {
    #[inline]
    pub fn env(&self, i: usize) -> LocalEnv<'a, T> {
        LocalEnv {
            left: self.left.get(self.samples, i),
            right: self.right.get(self.samples, i),
            top: self.top.map(|t| &t[i * self.top_len..(i + 1) * self.top_len]),
        }
    }
}
