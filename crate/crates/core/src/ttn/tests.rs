use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::tensor::DenseTensor;

fn random_model(n_features: usize, n_classes: usize, chi: usize, seed: u64) -> TtnModel<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let topo = TreeTopology::for_features(n_features).unwrap();
    TtnModel::random(topo, FeatureSpec::unit(n_features), n_classes, chi, &mut rng).unwrap()
}

/// Amplitude of one basis configuration, summed index by index.
fn amplitude(m: &TtnModel<f64>, node: usize, config: &[usize], p: usize) -> f64 {
    let t = m.tensor(node);
    let [lc, rc] = m.topology().children(node);
    let child = |c: Child, a: usize| -> f64 {
        match c {
            Child::Leaf(l) => {
                if config[l] == a {
                    1.0
                } else {
                    0.0
                }
            }
            Child::Node(n) => amplitude(m, n, config, a),
        }
    };
    let mut s = 0.0;
    for a in 0..t.shape()[0] {
        let ca = child(lc, a);
        if ca == 0.0 {
            continue;
        }
        for b in 0..t.shape()[1] {
            s += t.get(&[a, b, p]) * ca * child(rc, b);
        }
    }
    s
}

fn configs(topo: &TreeTopology) -> Vec<Vec<usize>> {
    let dims: Vec<usize> = (0..topo.n_leaves()).map(|l| topo.phys_dim(l)).collect();
    let total: usize = dims.iter().product();
    (0..total)
        .map(|mut k| {
            let mut c = vec![0; dims.len()];
            for i in (0..dims.len()).rev() {
                c[i] = k % dims[i];
                k /= dims[i];
            }
            c
        })
        .collect()
}

fn oracle_overlaps(m: &TtnModel<f64>, sample: &EncodedSample<f64>) -> Vec<f64> {
    let topo = m.topology();
    (0..m.n_classes())
        .map(|l| {
            configs(topo)
                .iter()
                .map(|c| {
                    let w: f64 = c.iter().enumerate().map(|(leaf, &s)| sample.local_states[leaf][s]).product();
                    w * amplitude(m, 0, c, l)
                })
                .sum()
        })
        .collect()
}

fn sample_for(m: &TtnModel<f64>, seed: u64) -> EncodedSample<f64> {
    let n = m.topology().n_features();
    let xs: Vec<f64> = (0..n).map(|i| ((seed as f64 + 1.0) * 0.37 * (i as f64 + 1.0)).fract()).collect();
    m.encode(&xs).unwrap()
}

#[test]
fn overlaps_match_configuration_sum() {
    for (nf, nc, chi, seed) in [(2, 2, 2, 0), (3, 2, 3, 1), (5, 3, 4, 2), (8, 2, 3, 3)] {
        let m = random_model(nf, nc, chi, seed);
        for s in 0..4 {
            let x = sample_for(&m, s);
            let fast = m.overlaps(&x).unwrap();
            let slow = oracle_overlaps(&m, &x);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{a} vs {b}");
            }
        }
    }
}

#[test]
fn full_expansion_matches_configuration_sum() {
    let m = random_model(5, 2, 3, 9);
    let psi = m.full_expand().unwrap();
    let mut shape: Vec<usize> = (0..8).map(|l| m.topology().phys_dim(l)).collect();
    shape.push(2);
    assert_eq!(psi.shape(), &shape[..]);
    for c in configs(m.topology()) {
        for l in 0..2 {
            let mut idx = c.clone();
            idx.push(l);
            let a = amplitude(&m, 0, &c, l);
            assert!((psi.get(&idx) - a).abs() < 1e-12);
        }
    }
}

#[test]
fn full_expansion_has_a_leaf_guard() {
    let m = random_model(13, 2, 2, 0);
    assert!(matches!(m.full_expand(), Err(ModelError::TooManyLeaves { .. })));
}

#[test]
fn canonical_form_is_isometric_everywhere() {
    let m = random_model(7, 2, 4, 4);
    for c in 0..m.topology().n_nodes() {
        let cm = m.canonicalize(c).unwrap();
        assert_eq!(cm.canonical_center(), Some(c));
        assert!(cm.check_canonical(1e-12), "center {c}");
        let norm_c = cm.tensor(c).frobenius_norm();
        assert!((norm_c - m.norm().unwrap()).abs() < 1e-10 * norm_c);
    }
}

#[test]
fn moving_the_center_keeps_the_gauge() {
    let mut m = random_model(8, 2, 4, 5).canonicalize(0).unwrap();
    let x = sample_for(&m, 1);
    let before = m.overlaps(&x).unwrap();
    for target in [3, 6, 2, 5, 0, 4] {
        m.canonicalize_in_place(target).unwrap();
        assert!(m.check_canonical(1e-12));
        let after = m.overlaps(&x).unwrap();
        for (a, b) in before.iter().zip(&after) {
            assert!((a - b).abs() < 1e-12);
        }
    }
    assert!(m.move_center(6).is_err());
}

#[test]
fn bond_dimensions_respect_bounds() {
    for nf in [1, 2, 3, 5, 8, 16] {
        for chi in [1, 2, 3, 8, 64] {
            let topo = TreeTopology::for_features(nf).unwrap();
            let dims = bond_dimensions(&topo, 2, chi);
            assert_eq!(dims[0], 2);
            for n in 1..topo.n_nodes() {
                assert!(dims[n] >= 1 && dims[n] <= chi);
                assert!(dims[n] <= topo.phys_product_below(n));
            }
        }
    }
}

#[test]
fn label_states_partition_the_norm() {
    let m = random_model(4, 3, 3, 6);
    let total = m.norm().unwrap().powi(2);
    let parts: f64 = (0..3).map(|l| m.label_state(l).unwrap().norm().unwrap().powi(2)).sum();
    assert!((total - parts).abs() < 1e-10 * total);
    let norms = m.label_norms().unwrap();
    for l in 0..3 {
        assert!((norms[l] - m.label_state(l).unwrap().norm().unwrap()).abs() < 1e-10);
    }
    assert!(m.label_state(3).is_err());
}

#[test]
fn decision_rule() {
    assert_eq!(decide(&[0.8, 0.2], 0.0), Decision::Class(0));
    assert_eq!(decide(&[0.2, 0.8], 0.0), Decision::Class(1));
    assert_eq!(decide(&[0.6, 0.4], 0.3), Decision::Abstain);
    assert_eq!(decide(&[0.66, 0.34], 0.3), Decision::Class(0));
    assert_eq!(decide(&[0.34, 0.66], 0.3), Decision::Class(1));
    assert_eq!(decide(&[0.5, 0.5], 0.0), Decision::Abstain);
    assert_eq!(decide(&[0.7, 0.2, 0.1], 0.2), Decision::Class(0));
    assert_eq!(decide(&[0.4, 0.35, 0.25], 0.0), Decision::Abstain);
}

#[test]
fn zero_network_is_degenerate() {
    let m = random_model(2, 2, 2, 0);
    let zero = m.scaled_all(0.0);
    let x = sample_for(&m, 0);
    assert!(matches!(zero.classify(&x, 0.0), Err(ModelError::Degenerate)));
}

#[test]
fn set_tensor_drops_the_gauge_elsewhere() {
    let mut m = random_model(4, 2, 2, 1).canonicalize(1).unwrap();
    let t = m.tensor(1).scaled(2.0);
    m.set_tensor(1, t).unwrap();
    assert_eq!(m.canonical_center(), Some(1));
    let t = m.tensor(2).clone();
    m.set_tensor(2, t).unwrap();
    assert_eq!(m.canonical_center(), None);
    assert!(m.set_tensor(0, DenseTensor::zeros(&[1, 1, 1])).is_err());
}

#[test]
fn f32_agrees_with_f64() {
    let m = random_model(6, 2, 3, 8);
    let m32 = m.cast::<f32>();
    let x = sample_for(&m, 2);
    let x32 = m32.encode(&x.features).unwrap();
    let a = m.classify(&x, 0.0).unwrap();
    let b = m32.classify(&x32, 0.0).unwrap();
    for (p, q) in a.confidences.iter().zip(&b.confidences) {
        assert!((p - *q as f64).abs() < 1e-4);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn confidences_are_a_distribution(seed in 0u64..1000, nf in 1usize..9, nc in 2usize..4, xs in prop::collection::vec(-0.5f64..1.5, 8)) {
        let m = random_model(nf, nc, 3, seed);
        let x = m.encode(&xs[..nf]).unwrap();
        let r = m.classify(&x, 0.0).unwrap();
        let s: f64 = r.confidences.iter().sum();
        prop_assert!((s - 1.0).abs() < 1e-12);
        prop_assert!(r.confidences.iter().all(|&p| (0.0..=1.0).contains(&p)));
    }

    #[test]
    fn rescaling_any_tensor_leaves_predictions(seed in 0u64..1000, node in 0usize..7, factor in 0.01f64..100.0, xs in prop::collection::vec(0.0f64..1.0, 8)) {
        let m = random_model(8, 2, 3, seed);
        let x = m.encode(&xs).unwrap();
        let mut scaled = m.clone();
        let t = m.tensor(node).scaled(factor);
        scaled.set_tensor(node, t).unwrap();
        let a = m.classify(&x, 0.0).unwrap();
        let b = scaled.classify(&x, 0.0).unwrap();
        for (p, q) in a.confidences.iter().zip(&b.confidences) {
            prop_assert!((p - q).abs() < 1e-10);
        }
    }

    #[test]
    fn gauge_choice_leaves_predictions(seed in 0u64..1000, center in 0usize..7, xs in prop::collection::vec(0.0f64..1.0, 8)) {
        let m = random_model(8, 2, 4, seed);
        let c = m.canonicalize(center).unwrap();
        let x = m.encode(&xs).unwrap();
        let a = m.classify(&x, 0.0).unwrap();
        let b = c.classify(&x, 0.0).unwrap();
        for (p, q) in a.confidences.iter().zip(&b.confidences) {
            prop_assert!((p - q).abs() < 1e-10);
        }
        prop_assert!(c.check_canonical(1e-10));
    }
}

#[test]
fn single_node_expansion_is_the_root_tensor() {
    let m = random_model(1, 2, 2, 11);
    assert_eq!(m.topology().n_nodes(), 1);
    assert_eq!(&m.full_expand().unwrap(), m.tensor(0));
    let m = random_model(2, 3, 2, 12);
    let psi = m.full_expand().unwrap();
    assert_eq!(psi.data(), m.tensor(0).data());
}

#[test]
fn expansion_norm_matches_center_norm() {
    let m = random_model(8, 2, 4, 13);
    let psi = m.full_expand().unwrap();
    let c = m.canonicalize(4).unwrap();
    assert!((psi.frobenius_norm() - c.tensor(4).frobenius_norm()).abs() < 1e-10 * psi.frobenius_norm());
}

#[test]
fn canonicalize_is_idempotent_and_path_independent() {
    let m = random_model(8, 2, 4, 14);
    let a = m.canonicalize(5).unwrap();
    let aa = a.canonicalize(5).unwrap();
    for (x, y) in a.tensors().iter().zip(aa.tensors()) {
        assert!(x.max_abs_diff(y) < 1e-12);
    }
    let via = m.canonicalize(3).unwrap().canonicalize(5).unwrap();
    for s in 0..20 {
        let x = sample_for(&m, s);
        let p = a.classify(&x, 0.0).unwrap().confidences;
        let q = via.classify(&x, 0.0).unwrap().confidences;
        for (u, v) in p.iter().zip(&q) {
            assert!((u - v).abs() < 1e-10);
        }
    }
}

#[test]
fn matching_label_state_gives_certainty() {
    // psi_0 is the encoded product state itself, psi_1 is orthogonal to it.
    let topo = TreeTopology::for_features(2).unwrap();
    let spec = FeatureSpec::unit(2);
    let x: EncodedSample<f64> = encode(&[0.3, 0.8], &spec, &topo).unwrap();
    let (a, b) = (x.local_states[0], x.local_states[1]);
    let root = DenseTensor::from_fn(&[2, 2, 2], |i| match i[2] {
        0 => a[i[0]] * b[i[1]],
        _ => [-a[1], a[0]][i[0]] * b[i[1]],
    });
    let m = TtnModel::from_parts(topo.clone(), vec![root], 2, spec.clone(), None).unwrap();
    let r = m.classify(&x, 0.0).unwrap();
    assert!((r.confidences[0] - 1.0).abs() < 1e-15);
    assert_eq!(r.decision, Decision::Class(0));

    let same = DenseTensor::from_fn(&[2, 2, 2], |i| a[i[0]] * b[i[1]] + 0.1 * i[0] as f64);
    let m = TtnModel::from_parts(topo, vec![same], 2, spec, None).unwrap();
    let r = m.classify(&x, 0.0).unwrap();
    assert!((r.confidences[0] - 0.5).abs() < 1e-15);
    assert_eq!(m.classify(&x, 0.01).unwrap().decision, Decision::Abstain);
}
