use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::tensor::DenseTensor;
use crate::ttn::{FeatureSpec, TreeTopology, TtnModel};

fn random_set(model: &TtnModel<f64>, n: usize, seed: u64) -> Vec<LabeledSample<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let xs: Vec<f64> = (0..model.topology().n_features()).map(|_| rng.random::<f64>()).collect();
            LabeledSample {
                sample: model.encode(&xs).unwrap(),
                label: rng.random_range(0..model.n_classes()),
            }
        })
        .collect()
}

fn random_model(nf: usize, nc: usize, chi: usize, seed: u64) -> TtnModel<f64> {
    let topo = TreeTopology::for_features(nf).unwrap();
    init_model(topo, FeatureSpec::unit(nf), nc, chi, seed, InitKind::RandomOrthogonal).unwrap()
}

/// Overlaps through the fully expanded weight tensor.
fn expanded_overlaps(psi: &DenseTensor<f64>, s: &LabeledSample<f64>, nc: usize) -> Vec<f64> {
    let n_leaves = psi.order() - 1;
    let mut f = vec![0.0; nc];
    for (k, &v) in psi.data().iter().enumerate() {
        let mut rem = k;
        let l = rem % nc;
        rem /= nc;
        let mut w = 1.0;
        for leaf in (0..n_leaves).rev() {
            let d = psi.shape()[leaf];
            w *= s.sample.local_states[leaf][rem % d];
            rem /= d;
        }
        f[l] += w * v;
    }
    f
}

fn oracle_loss(m: &TtnModel<f64>, batch: &[LabeledSample<f64>], kind: LossKind) -> f64 {
    let psi = m.full_expand().unwrap();
    let nc = m.n_classes();
    batch
        .iter()
        .map(|s| {
            let f = expanded_overlaps(&psi, s, nc);
            let z: f64 = f.iter().map(|v| v * v).sum();
            let p: Vec<f64> = f.iter().map(|v| v * v / z).collect();
            match kind {
                LossKind::NegativeLogLikelihood => {
                    -((p[s.label] + PROBABILITY_FLOOR) / (1.0 + PROBABILITY_FLOOR)).ln()
                }
                LossKind::MeanSquaredError => p
                    .iter()
                    .enumerate()
                    .map(|(l, &q)| (q - if l == s.label { 1.0 } else { 0.0 }).powi(2))
                    .sum(),
                LossKind::OverlapSquaredError => f
                    .iter()
                    .enumerate()
                    .map(|(l, &v)| (v - if l == s.label { 1.0 } else { 0.0 }).powi(2))
                    .sum(),
            }
        })
        .sum::<f64>()
        / batch.len() as f64
}

const ALL_LOSSES: [LossKind; 3] = [
    LossKind::NegativeLogLikelihood,
    LossKind::MeanSquaredError,
    LossKind::OverlapSquaredError,
];

#[test]
fn init_is_deterministic_and_isometric() {
    let a = random_model(6, 2, 4, 17);
    let b = random_model(6, 2, 4, 17);
    assert_eq!(a, b);
    assert_ne!(a, random_model(6, 2, 4, 18));
    assert_eq!(a.canonical_center(), Some(0));
    assert!(a.check_canonical(1e-12));
    assert!((a.norm().unwrap() - 1.0).abs() < 1e-12);
    let one = random_model(16, 2, 1, 3);
    assert!(one.bond_dims()[1..].iter().all(|&d| d == 1));
    for s in random_set(&a, 50, 2) {
        let r = a.classify(&s.sample, 0.0).unwrap();
        assert!(r.confidences.iter().all(|p| p.is_finite()));
        assert!((r.confidences.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn loss_matches_expanded_oracle() {
    for seed in 0..6 {
        let m = random_model(4 + seed as usize % 3, 2 + seed as usize % 2, 3, seed);
        let batch = random_set(&m, 40, seed + 100);
        for kind in ALL_LOSSES {
            let a = loss(&m, &batch, kind).unwrap().value;
            let b = oracle_loss(&m, &batch, kind);
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }
}

fn perfect_model() -> (TtnModel<f64>, Vec<LabeledSample<f64>>) {
    // One feature; label 0 at x = 0 and label 1 at x = 1.
    let topo = TreeTopology::for_features(1).unwrap();
    let root = DenseTensor::from_fn(&[2, 1, 2], |i| if i[0] == i[2] { 1.0 } else { 0.0 });
    let m = TtnModel::from_parts(topo, vec![root], 2, FeatureSpec::unit(1), Some(0)).unwrap();
    let batch = vec![
        LabeledSample {
            sample: m.encode(&[0.0]).unwrap(),
            label: 0,
        },
        LabeledSample {
            sample: m.encode(&[1.0]).unwrap(),
            label: 1,
        },
    ];
    (m, batch)
}

#[test]
fn perfect_and_uniform_classifiers() {
    let (m, batch) = perfect_model();
    for kind in ALL_LOSSES {
        assert!(loss(&m, &batch, kind).unwrap().value.abs() < 1e-15);
        let g = local_gradient(&m, 0, &batch, kind).unwrap();
        assert!(g.frobenius_norm() < 1e-6);
    }
    let topo = TreeTopology::for_features(1).unwrap();
    let root = DenseTensor::from_fn(&[2, 1, 2], |_| 1.0);
    let u = TtnModel::from_parts(topo, vec![root], 2, FeatureSpec::unit(1), Some(0)).unwrap();
    let l = loss(&u, &batch, LossKind::NegativeLogLikelihood).unwrap().value;
    assert!((l - std::f64::consts::LN_2).abs() < 1e-11);
}

#[test]
fn degenerate_samples_are_penalized_not_nan() {
    let (m, batch) = perfect_model();
    let zero = m.scaled_all(0.0);
    let s = loss(&zero, &batch, LossKind::NegativeLogLikelihood).unwrap();
    assert_eq!(s.degenerate, 2);
    assert_eq!(s.value, DEGENERATE_PENALTY);
}

fn finite_difference(m: &TtnModel<f64>, node: usize, batch: &[LabeledSample<f64>], kind: LossKind) -> Vec<f64> {
    let h = 1e-6;
    let t = m.tensor(node);
    (0..t.len())
        .map(|k| {
            let mut plus = t.clone();
            plus.data_mut()[k] += h;
            let mut minus = t.clone();
            minus.data_mut()[k] -= h;
            let mut mp = m.clone();
            mp.set_tensor(node, plus).unwrap();
            let mut mm = m.clone();
            mm.set_tensor(node, minus).unwrap();
            (oracle_loss(&mp, batch, kind) - oracle_loss(&mm, batch, kind)) / (2.0 * h)
        })
        .collect()
}

#[test]
fn gradient_matches_finite_differences() {
    for seed in 0..4 {
        let m = random_model(4, 2, 2, seed);
        let batch = random_set(&m, 12, seed + 7);
        for node in 0..3 {
            let mc = m.canonicalize(node).unwrap();
            for kind in ALL_LOSSES {
                let g = local_gradient(&mc, node, &batch, kind).unwrap();
                let fd = finite_difference(&mc, node, &batch, kind);
                let scale = fd.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                for (a, b) in g.data().iter().zip(&fd) {
                    assert!((a - b).abs() <= 1e-5 * scale.max(1e-3), "{a} vs {b}");
                }
            }
        }
    }
}

#[test]
fn gradient_requires_canonical_center() {
    let m = random_model(4, 2, 2, 0);
    let batch = random_set(&m, 4, 0);
    assert!(matches!(
        local_gradient(&m, 1, &batch, LossKind::NegativeLogLikelihood),
        Err(TrainError::NotCanonical { node: 1, .. })
    ));
}

#[test]
fn duplicated_batch_gives_the_same_gradient() {
    let m = random_model(4, 2, 2, 5).canonicalize(2).unwrap();
    let batch = random_set(&m, 30, 5);
    let doubled: Vec<_> = batch.iter().chain(&batch).cloned().collect();
    let a = local_gradient(&m, 2, &batch, LossKind::NegativeLogLikelihood).unwrap();
    let b = local_gradient(&m, 2, &doubled, LossKind::NegativeLogLikelihood).unwrap();
    assert!(a.max_abs_diff(&b) < 1e-12);
}

/// Label is 1 iff the second feature exceeds 0.5; the rest is noise.
fn separable(model: &TtnModel<f64>, n: usize, seed: u64) -> Vec<LabeledSample<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let xs: Vec<f64> = (0..model.topology().n_features()).map(|_| rng.random::<f64>()).collect();
            let label = usize::from(xs[1] > 0.5);
            LabeledSample {
                sample: model.encode(&xs).unwrap(),
                label,
            }
        })
        .collect()
}

#[test]
fn learns_a_single_feature_rule() {
    let m = random_model(4, 2, 4, 1);
    let train_set = separable(&m, 600, 2);
    let config = TrainConfig {
        chi_max: 4,
        n_sweeps: 5,
        early_stop_patience: 0,
        ..TrainConfig::default()
    };
    let (trained, report) = train(&m, &train_set, &[], &config).unwrap();
    assert_eq!(report.records.len(), 5);
    let acc = accuracy(&trained, &train_set);
    assert!(acc >= 0.98, "accuracy {acc}");
}

#[test]
fn zero_sweeps_return_the_input() {
    let m = random_model(4, 2, 4, 1).canonicalize(2).unwrap();
    let data = separable(&m, 20, 2);
    let config = TrainConfig {
        n_sweeps: 0,
        ..TrainConfig::default()
    };
    let (out, report) = train(&m, &data, &data, &config).unwrap();
    assert_eq!(out, m);
    assert!(report.records.is_empty());
}

#[test]
fn full_batch_steps_never_increase_the_loss() {
    let m = random_model(8, 2, 4, 3);
    let data = separable(&m, 300, 4);
    let config = TrainConfig {
        chi_max: 4,
        n_sweeps: 3,
        early_stop_patience: 0,
        ..TrainConfig::default()
    };
    let (_, report) = train(&m, &data, &[], &config).unwrap();
    assert!(report.step_losses.len() > 10);
    for w in report.step_losses.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
    }
    for w in report.records.windows(2) {
        assert!(w[1].loss <= w[0].loss + 1e-12);
    }
}

#[test]
fn training_is_deterministic() {
    let m = random_model(8, 2, 4, 3);
    let data = separable(&m, 500, 9);
    let config = TrainConfig {
        chi_max: 4,
        n_sweeps: 2,
        batch_size: Some(128),
        ..TrainConfig::default()
    };
    let (a, ra) = train(&m, &data, &data[..100], &config).unwrap();
    let (b, rb) = train(&m, &data, &data[..100], &config).unwrap();
    assert_eq!(a, b);
    assert_eq!(ra.step_losses, rb.step_losses);
    let la: Vec<f64> = ra.records.iter().map(|r| r.loss).collect();
    let lb: Vec<f64> = rb.records.iter().map(|r| r.loss).collect();
    assert_eq!(la, lb);
}

#[test]
fn early_stopping_returns_the_best_validation_model() {
    let m = random_model(4, 2, 4, 8);
    let data = separable(&m, 400, 10);
    let config = TrainConfig {
        chi_max: 4,
        n_sweeps: 6,
        early_stop_patience: 2,
        ..TrainConfig::default()
    };
    let (out, report) = train(&m, &data[..300], &data[300..], &config).unwrap();
    let best = report.records[report.best_sweep - 1].validation_accuracy.unwrap();
    assert!((accuracy(&out, &data[300..]) - best).abs() < 1e-12);
    assert!(report.records.iter().all(|r| r.validation_accuracy.unwrap() <= best));
}

#[test]
fn config_validation_and_report_text() {
    assert!(TrainConfig {
        chi_max: 0,
        ..TrainConfig::default()
    }
    .validate()
    .is_err());
    let t: TrainConfig = toml::from_str("chi_max = 8\nloss = \"mean-squared-error\"\nbatch_size = 64").unwrap();
    assert_eq!(t.chi_max, 8);
    assert_eq!(t.loss, LossKind::MeanSquaredError);
    assert_eq!(t.n_sweeps, 10);
    assert!(toml::from_str::<TrainConfig>("chi = 8").is_err());

    let m = random_model(2, 2, 2, 0);
    let data = separable(&m, 50, 0);
    let (_, r) = train(
        &m,
        &data,
        &[],
        &TrainConfig {
            n_sweeps: 2,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    let tsv = r.to_tsv();
    assert_eq!(tsv.lines().count(), 3);
    assert!(tsv.starts_with("sweep\tloss"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn one_sweep_preserves_normalization(seed in 0u64..500) {
        let m = random_model(5, 2, 3, seed);
        let data = random_set(&m, 60, seed);
        let config = TrainConfig { chi_max: 3, n_sweeps: 1, cg_iters_per_node: 2, ..TrainConfig::default() };
        let (out, _) = train(&m, &data, &[], &config).unwrap();
        prop_assert!(out.check_canonical(1e-10));
        prop_assert!((out.norm().unwrap() - 1.0).abs() < 1e-10);
        for s in &data {
            let r = out.classify(&s.sample, 0.0).unwrap();
            prop_assert!((r.confidences.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }
}

#[test]
fn overlap_loss_with_ridge_descends_and_shrinks_the_norm() {
    let m = random_model(8, 2, 4, 3);
    let data = separable(&m, 300, 4);
    let run = |l2: f64| {
        let config = TrainConfig {
            chi_max: 4,
            n_sweeps: 3,
            early_stop_patience: 0,
            loss: LossKind::OverlapSquaredError,
            l2_penalty: l2,
            ..TrainConfig::default()
        };
        train(&m, &data, &[], &config).unwrap()
    };
    let (free, _) = run(0.0);
    let (ridged, report) = run(0.5);
    for w in report.step_losses.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
    }
    assert!(accuracy(&free, &data) >= 0.95);
    assert!(ridged.norm().unwrap() < free.norm().unwrap());
    assert!(TrainConfig {
        l2_penalty: -1.0,
        ..TrainConfig::default()
    }
    .validate()
    .is_err());
}

#[test]
fn near_product_init_is_isometric_and_nearly_unentangled() {
    let topo = TreeTopology::for_features(6).unwrap();
    let make = |seed| -> TtnModel<f64> { init_model(topo.clone(), FeatureSpec::unit(6), 2, 4, seed, InitKind::NearProduct).unwrap() };
    let a = make(4);
    assert_eq!(a, make(4));
    assert!(a.check_canonical(1e-12));
    assert!((a.norm().unwrap() - 1.0).abs() < 1e-12);
    let rep = crate::analysis::entropy_report(&a).unwrap();
    let random = crate::analysis::entropy_report(&random_model(6, 2, 4, 4)).unwrap();
    let max = |r: &crate::analysis::EntropyReport| r.features.iter().map(|f| f.pooled).fold(0.0, f64::max);
    assert!(max(&rep) < 0.1, "{}", rep.feature_table());
    assert!(max(&rep) < max(&random));
}
