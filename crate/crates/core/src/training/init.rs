use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;
use crate::tensor::{qr_split, DenseTensor};
use crate::ttn::{bond_dimensions, Child, FeatureSpec, ModelError, TreeTopology, TtnModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitKind {
    /// Isometries from QR of Gaussian draws; the root is a normalized Gaussian.
    #[default]
    RandomOrthogonal,
    /// Every label starts as the same product of `|+>` leaf states plus a
    /// small Gaussian admixture, so features start out unentangled.
    NearProduct,
}

/// Relative size of the random admixture in [`InitKind::NearProduct`].
pub const NEAR_PRODUCT_NOISE: f64 = 1e-2;

/// A fresh model, canonical at the root, deterministic in `seed`.
pub fn init_model<T: Scalar>(
    topology: TreeTopology,
    spec: FeatureSpec,
    n_classes: usize,
    chi_max: usize,
    seed: u64,
    init: InitKind,
) -> Result<TtnModel<T>, ModelError> {
    if chi_max == 0 {
        return Err(ModelError::Structure("chi_max must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = bond_dimensions(&topology, n_classes, chi_max);
    let mut tensors = Vec::with_capacity(topology.n_nodes());
    for n in 0..topology.n_nodes() {
        let shape = crate::ttn::node_shape(&topology, &dims, n, n_classes);
        let g: DenseTensor<T> = DenseTensor::random_normal(&shape, &mut rng);
        let t = match init {
            InitKind::RandomOrthogonal if n == 0 => {
                let nrm = g.frobenius_norm();
                g.scaled(T::one() / nrm)
            }
            InitKind::RandomOrthogonal => qr_split(&g, &[0, 1])?.0,
            InitKind::NearProduct => {
                let [dl, dr, dp] = [shape[0], shape[1], shape[2]];
                let lead = |leg: usize, d: usize| -> Vec<T> {
                    match topology.children(n)[leg] {
                        Child::Leaf(_) => vec![T::one() / T::of(d as f64).sqrt(); d],
                        Child::Node(_) => (0..d).map(|k| if k == 0 { T::one() } else { T::zero() }).collect(),
                    }
                };
                let (ul, ur) = (lead(0, dl), lead(1, dr));
                let eps = T::of(NEAR_PRODUCT_NOISE);
                let mut t = g.scaled(eps);
                for a in 0..dl {
                    for b in 0..dr {
                        if n == 0 {
                            for p in 0..dp {
                                let v = t.get(&[a, b, p]) + ul[a] * ur[b];
                                t.set(&[a, b, p], v);
                            }
                        } else {
                            t.set(&[a, b, 0], ul[a] * ur[b]);
                        }
                    }
                }
                if n == 0 {
                    let nrm = t.frobenius_norm();
                    t.scaled(T::one() / nrm)
                } else {
                    // Q keeps the direction of the first column.
                    qr_split(&t, &[0, 1])?.0
                }
            }
        };
        tensors.push(t);
    }
    TtnModel::from_parts(topology, tensors, n_classes, spec, Some(0))
}
