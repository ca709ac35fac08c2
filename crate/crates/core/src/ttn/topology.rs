//! Balanced binary tree layout.
//!
//! Internal nodes use heap numbering: node 0 is the root and the children of
//! heap slot `h` are `2h + 1` and `2h + 2`. With `L` leaves there are `L - 1`
//! internal nodes (slots `0..L-1`) and leaf `i` occupies slot `L - 1 + i`.

use serde::{Deserialize, Serialize};

use super::ModelError;

/// A child of an internal node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Child {
    Node(usize),
    Leaf(usize),
}

/// Position of a neighbour as seen from an internal node's tensor legs:
/// leg 0 is the left child, leg 1 the right child, leg 2 the parent (or the
/// label leg at the root).
pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;
pub const UP: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeTopology {
    n_leaves: usize,
    /// `leaf_feature[leaf]` is the feature stored on that leaf, `None` for padding.
    leaf_feature: Vec<Option<usize>>,
    feature_leaf: Vec<usize>,
}

impl TreeTopology {
    /// Features in column order on the first leaves, padding at the end.
    pub fn for_features(n_features: usize) -> Result<Self, ModelError> {
        Self::with_layout(n_features, &(0..n_features).collect::<Vec<_>>())
    }

    /// `layout[f]` is the leaf that carries feature `f`.
    pub fn with_layout(n_features: usize, layout: &[usize]) -> Result<Self, ModelError> {
        if n_features == 0 {
            return Err(ModelError::Structure("at least one feature is required".into()));
        }
        if layout.len() != n_features {
            return Err(ModelError::Structure(format!(
                "layout has {} entries for {n_features} features",
                layout.len()
            )));
        }
        let n_leaves = n_features.next_power_of_two().max(2);
        let mut leaf_feature = vec![None; n_leaves];
        for (f, &leaf) in layout.iter().enumerate() {
            if leaf >= n_leaves || leaf_feature[leaf].is_some() {
                return Err(ModelError::Structure(format!("layout entry {leaf} is out of range or repeated")));
            }
            leaf_feature[leaf] = Some(f);
        }
        Ok(Self {
            n_leaves,
            leaf_feature,
            feature_leaf: layout.to_vec(),
        })
    }

    pub(crate) fn from_leaf_map(leaf_feature: Vec<Option<usize>>) -> Result<Self, ModelError> {
        let n_leaves = leaf_feature.len();
        if n_leaves < 2 || !n_leaves.is_power_of_two() {
            return Err(ModelError::Structure(format!("leaf count {n_leaves} is not a power of two >= 2")));
        }
        let n_features = leaf_feature.iter().flatten().count();
        let mut feature_leaf = vec![usize::MAX; n_features];
        for (leaf, f) in leaf_feature.iter().enumerate() {
            if let Some(f) = *f {
                if f >= n_features || feature_leaf[f] != usize::MAX {
                    return Err(ModelError::Structure("leaf map is not a bijection onto features".into()));
                }
                feature_leaf[f] = leaf;
            }
        }
        if n_features == 0 {
            return Err(ModelError::Structure("at least one feature is required".into()));
        }
        Ok(Self {
            n_leaves,
            leaf_feature,
            feature_leaf,
        })
    }

    #[inline]
    pub fn n_leaves(&self) -> usize {
        self.n_leaves
    }

    #[inline]
    pub fn n_features(&self) -> usize {
        self.feature_leaf.len()
    }

    #[inline]
    pub fn n_nodes(&self) -> usize {
        self.n_leaves - 1
    }

    #[inline]
    pub fn root(&self) -> usize {
        0
    }

    pub fn leaf_feature(&self, leaf: usize) -> Option<usize> {
        self.leaf_feature[leaf]
    }

    pub fn leaf_features(&self) -> &[Option<usize>] {
        &self.leaf_feature
    }

    pub fn feature_leaf(&self, feature: usize) -> usize {
        self.feature_leaf[feature]
    }

    pub fn is_padded(&self, leaf: usize) -> bool {
        self.leaf_feature[leaf].is_none()
    }

    /// Physical extent of a leaf leg: 2 for features, 1 for padding.
    pub fn phys_dim(&self, leaf: usize) -> usize {
        if self.is_padded(leaf) {
            1
        } else {
            2
        }
    }

    pub fn parent(&self, node: usize) -> Option<usize> {
        if node == 0 {
            None
        } else {
            Some((node - 1) / 2)
        }
    }

    pub fn leaf_parent(&self, leaf: usize) -> usize {
        (self.n_leaves - 1 + leaf - 1) / 2
    }

    fn slot_child(&self, slot: usize) -> Child {
        if slot >= self.n_nodes() {
            Child::Leaf(slot - self.n_nodes())
        } else {
            Child::Node(slot)
        }
    }

    pub fn children(&self, node: usize) -> [Child; 2] {
        [self.slot_child(2 * node + 1), self.slot_child(2 * node + 2)]
    }

    /// Which child leg (`LEFT` or `RIGHT`) of its parent a node hangs from.
    pub fn side_of(&self, node: usize) -> usize {
        debug_assert!(node > 0);
        if node % 2 == 1 {
            LEFT
        } else {
            RIGHT
        }
    }

    /// Side of `leaf` under its parent.
    pub fn leaf_side(&self, leaf: usize) -> usize {
        let slot = self.n_nodes() + leaf;
        if slot % 2 == 1 {
            LEFT
        } else {
            RIGHT
        }
    }

    pub fn sibling(&self, node: usize) -> Child {
        let slot = if node % 2 == 1 { node + 1 } else { node - 1 };
        self.slot_child(slot)
    }

    /// Leaves below a node, in left-to-right order.
    pub fn leaves_below(&self, node: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![Child::Node(node)];
        while let Some(c) = stack.pop() {
            match c {
                Child::Leaf(l) => out.push(l),
                Child::Node(n) => {
                    let [l, r] = self.children(n);
                    stack.push(r);
                    stack.push(l);
                }
            }
        }
        out
    }

    /// True when `node` is `ancestor` or lies beneath it.
    pub fn in_subtree(&self, node: usize, ancestor: usize) -> bool {
        let mut cur = node;
        loop {
            if cur == ancestor {
                return true;
            }
            match self.parent(cur) {
                Some(p) => cur = p,
                None => return false,
            }
        }
    }

    pub fn depth(&self, node: usize) -> usize {
        let mut d = 0;
        let mut cur = node;
        while let Some(p) = self.parent(cur) {
            d += 1;
            cur = p;
        }
        d
    }

    /// Depth-first pre-order over internal nodes, starting at the root.
    pub fn preorder(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.n_nodes());
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            out.push(n);
            let [l, r] = self.children(n);
            if let Child::Node(r) = r {
                stack.push(r);
            }
            if let Child::Node(l) = l {
                stack.push(l);
            }
        }
        out
    }

    /// Internal nodes on the path from `from` to `to`, both included.
    pub fn path(&self, from: usize, to: usize) -> Vec<usize> {
        let up_from = self.ancestors_inclusive(from);
        let up_to = self.ancestors_inclusive(to);
        let lca = *up_from.iter().find(|n| up_to.contains(n)).expect("tree is connected");
        let mut path: Vec<usize> = up_from.iter().copied().take_while(|&n| n != lca).collect();
        path.push(lca);
        let down: Vec<usize> = up_to.iter().copied().take_while(|&n| n != lca).collect();
        path.extend(down.into_iter().rev());
        path
    }

    /// `node`, its parent, ..., the root.
    pub fn ancestors_inclusive(&self, node: usize) -> Vec<usize> {
        let mut out = vec![node];
        let mut cur = node;
        while let Some(p) = self.parent(cur) {
            out.push(p);
            cur = p;
        }
        out
    }

    /// The leg of `node` that points toward `target` (another internal node).
    pub fn leg_toward(&self, node: usize, target: usize) -> usize {
        debug_assert_ne!(node, target);
        if self.in_subtree(target, node) {
            let [l, _] = self.children(node);
            match l {
                Child::Node(l) if self.in_subtree(target, l) => LEFT,
                _ => RIGHT,
            }
        } else {
            UP
        }
    }

    /// Internal neighbour across a leg, if that leg does not end in a leaf or the label.
    pub fn neighbour(&self, node: usize, leg: usize) -> Option<usize> {
        match leg {
            UP => self.parent(node),
            _ => match self.children(node)[leg] {
                Child::Node(n) => Some(n),
                Child::Leaf(_) => None,
            },
        }
    }

    /// True when every leaf under `node` is padding.
    pub fn fully_padded(&self, node: usize) -> bool {
        self.leaves_below(node).iter().all(|&l| self.is_padded(l))
    }

    /// Product of physical extents of the leaves under `node`, saturating.
    pub fn phys_product_below(&self, node: usize) -> usize {
        self.leaves_below(node)
            .iter()
            .fold(1usize, |acc, &l| acc.saturating_mul(self.phys_dim(l)))
    }

    /// Product of physical extents outside the subtree of `node`, saturating.
    pub fn phys_product_outside(&self, node: usize) -> usize {
        let below = self.leaves_below(node);
        (0..self.n_leaves)
            .filter(|l| !below.contains(l))
            .fold(1usize, |acc, l| acc.saturating_mul(self.phys_dim(l)))
    }
}
