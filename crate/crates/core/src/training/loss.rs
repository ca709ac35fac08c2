use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::env::{EnvCache, LocalView};
use super::{LabeledSample, TrainError, REDUCTION_CHUNK};
use crate::scalar::Scalar;
use crate::tensor::DenseTensor;
use crate::ttn::{contract_node, TtnModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    #[default]
    NegativeLogLikelihood,
    MeanSquaredError,
    /// `sum_l (f_l - 1[l = y])^2` on the raw overlaps `f_l`, the confidences
    /// read directly as `W_l . Phi(x)`. Unlike the two losses above it
    /// depends on the overall scale of the network.
    OverlapSquaredError,
}

impl LossKind {
    /// True when the loss sees only the normalized probabilities.
    pub fn is_scale_invariant(self) -> bool {
        !matches!(self, LossKind::OverlapSquaredError)
    }
}

/// Added to the true-label probability inside the logarithm; the loss
/// stays finite and smooth when `P_true` reaches 0.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

/// Charged for a sample whose overlaps all vanish.
pub const DEGENERATE_PENALTY: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSummary {
    /// Mean over the batch.
    pub value: f64,
    /// Samples that hit the degenerate-overlap penalty.
    pub degenerate: usize,
}

/// Loss of one sample from its overlaps `f`. When `grad` is given it receives
/// `d loss / d f_l`. Returns `None` for a degenerate sample (gradient zero).
pub(crate) fn sample_loss<T: Scalar>(f: &[T], y: usize, kind: LossKind, grad: Option<&mut [T]>) -> Option<T> {
    if kind == LossKind::OverlapSquaredError {
        let mut acc = T::zero();
        let mut grad = grad;
        for (l, &fl) in f.iter().enumerate() {
            let r = fl - if l == y { T::one() } else { T::zero() };
            acc += r * r;
            if let Some(g) = grad.as_deref_mut() {
                g[l] = r + r;
            }
        }
        return Some(acc);
    }
    let z: T = f.iter().map(|&v| v * v).sum();
    if !(z > T::zero()) || !z.is_finite() {
        if let Some(g) = grad {
            g.iter_mut().for_each(|v| *v = T::zero());
        }
        return None;
    }
    let two = T::of(2.0);
    let eps = T::of(PROBABILITY_FLOOR);
    match kind {
        LossKind::NegativeLogLikelihood => {
            let py = f[y] * f[y] / z;
            if let Some(g) = grad {
                // d(-ln(py + eps))/df_l = -(1/(py+eps)) * 2 (delta_ly f_y - py f_l) / z
                let c = -two / ((py + eps) * z);
                for (l, gl) in g.iter_mut().enumerate() {
                    let d = if l == y { f[y] } else { T::zero() };
                    *gl = c * (d - py * f[l]);
                }
            }
            Some(-((py + eps) / (T::one() + eps)).ln())
        }
        LossKind::MeanSquaredError => {
            let p: Vec<T> = f.iter().map(|&v| v * v / z).collect();
            let r: Vec<T> = p
                .iter()
                .enumerate()
                .map(|(l, &pl)| pl - if l == y { T::one() } else { T::zero() })
                .collect();
            if let Some(g) = grad {
                // dP_l/df_m = 2 (delta_lm f_l - P_l f_m) / z
                let rp: T = r.iter().zip(&p).map(|(&a, &b)| a * b).sum();
                for (m, gm) in g.iter_mut().enumerate() {
                    *gm = two * two * (r[m] * f[m] - rp * f[m]) / z;
                }
            }
            Some(r.iter().map(|&v| v * v).sum())
        }
        LossKind::OverlapSquaredError => unreachable!("handled above"),
    }
}

pub(crate) fn check_batch<T: Scalar>(model: &TtnModel<T>, batch: &[LabeledSample<T>]) -> Result<(), TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    for (i, s) in batch.iter().enumerate() {
        if s.label >= model.n_classes() {
            return Err(TrainError::Label {
                index: i,
                label: s.label,
                n_classes: model.n_classes(),
            });
        }
        if s.sample.n_leaves() != model.topology().n_leaves() {
            return Err(TrainError::Model(crate::ttn::ModelError::FeatureCount {
                expected: model.topology().n_leaves(),
                actual: s.sample.n_leaves(),
            }));
        }
    }
    Ok(())
}

/// Mean loss of `model` on `batch`.
pub fn loss<T: Scalar>(model: &TtnModel<T>, batch: &[LabeledSample<T>], kind: LossKind) -> Result<LossSummary, TrainError> {
    check_batch(model, batch)?;
    let partials: Vec<(f64, usize)> = batch
        .par_chunks(REDUCTION_CHUNK)
        .map(|chunk| {
            let mut ws = model.workspace();
            let mut acc = 0.0;
            let mut deg = 0;
            for s in chunk {
                let f = model.overlaps_with(&s.sample, &mut ws).expect("batch validated");
                match sample_loss(f, s.label, kind, None) {
                    Some(v) => acc += v.to_f64_lossy(),
                    None => {
                        acc += DEGENERATE_PENALTY;
                        deg += 1;
                    }
                }
            }
            (acc, deg)
        })
        .collect();
    let (sum, deg) = partials.iter().fold((0.0, 0), |a, p| (a.0 + p.0, a.1 + p.1));
    if deg > 0 {
        log::warn!("{deg} of {} samples have vanishing overlaps; penalty {DEGENERATE_PENALTY} applied", batch.len());
    }
    Ok(LossSummary {
        value: sum / batch.len() as f64,
        degenerate: deg,
    })
}

/// Gradient of the mean batch loss with respect to the entries of the
/// tensor at `node`. The model must be canonical at `node`.
pub fn local_gradient<T: Scalar>(
    model: &TtnModel<T>,
    node: usize,
    batch: &[LabeledSample<T>],
    kind: LossKind,
) -> Result<DenseTensor<T>, TrainError> {
    if model.canonical_center() != Some(node) {
        return Err(TrainError::NotCanonical {
            node,
            center: model.canonical_center(),
        });
    }
    check_batch(model, batch)?;
    let mut cache = EnvCache::new(model.topology().n_nodes());
    cache.prepare(model, batch, node);
    let view = cache.view(model, batch, node);
    let idx: Vec<usize> = (0..batch.len()).collect();
    let problem = LocalProblem::new(&view, &idx, model.n_classes(), model.tensor(node).shape());
    let f = problem.project(model.tensor(node));
    Ok(problem.loss_grad(&f, kind).grad)
}

pub(crate) struct LocalEval<T> {
    pub loss: T,
    pub grad: DenseTensor<T>,
}

/// The batch loss as a function of one node tensor, other tensors frozen.
pub(crate) struct LocalProblem<'a, T> {
    view: &'a LocalView<'a, T>,
    idx: &'a [usize],
    nc: usize,
    shape: [usize; 3],
}

impl<'a, T: Scalar> LocalProblem<'a, T> {
    pub fn new(view: &'a LocalView<'a, T>, idx: &'a [usize], nc: usize, shape: &[usize]) -> Self {
        Self {
            view,
            idx,
            nc,
            shape: [shape[0], shape[1], shape[2]],
        }
    }

    /// Overlaps (batch-major, `nc` per sample) obtained with tensor `t` at the center.
    pub fn project(&self, t: &DenseTensor<T>) -> Vec<T> {
        let nc = self.nc;
        let dp = self.shape[2];
        let mut out = vec![T::zero(); self.idx.len() * nc];
        out.par_chunks_mut(nc * REDUCTION_CHUNK)
            .zip(self.idx.par_chunks(REDUCTION_CHUNK))
            .for_each(|(o, ids)| {
                let mut h = vec![T::zero(); dp];
                for (k, &i) in ids.iter().enumerate() {
                    let e = self.view.env(i);
                    let f = &mut o[k * nc..(k + 1) * nc];
                    match e.top {
                        None => contract_node(t, e.left, e.right, f),
                        Some(u) => {
                            contract_node(t, e.left, e.right, &mut h);
                            f.iter_mut().for_each(|v| *v = T::zero());
                            for (p, &hp) in h.iter().enumerate() {
                                for (fv, &uv) in f.iter_mut().zip(&u[p * nc..(p + 1) * nc]) {
                                    *fv += hp * uv;
                                }
                            }
                        }
                    }
                }
            });
        out
    }

    /// Mean loss for overlaps `f + alpha * fd`.
    pub fn loss_along(&self, f: &[T], fd: &[T], alpha: T, kind: LossKind) -> (T, usize) {
        let nc = self.nc;
        let partials: Vec<(T, usize)> = f
            .par_chunks(nc * REDUCTION_CHUNK)
            .zip(fd.par_chunks(nc * REDUCTION_CHUNK))
            .zip(self.idx.par_chunks(REDUCTION_CHUNK))
            .map(|((fc, dc), ids)| {
                let mut trial = vec![T::zero(); nc];
                let mut acc = T::zero();
                let mut deg = 0;
                for (k, &i) in ids.iter().enumerate() {
                    for l in 0..nc {
                        trial[l] = fc[k * nc + l] + alpha * dc[k * nc + l];
                    }
                    match sample_loss(&trial, self.view.samples[i].label, kind, None) {
                        Some(v) => acc += v,
                        None => {
                            acc += T::of(DEGENERATE_PENALTY);
                            deg += 1;
                        }
                    }
                }
                (acc, deg)
            })
            .collect();
        let (s, d) = partials.into_iter().fold((T::zero(), 0), |a, p| (a.0 + p.0, a.1 + p.1));
        (s / T::of(self.idx.len() as f64), d)
    }

    pub fn loss_grad(&self, f: &[T], kind: LossKind) -> LocalEval<T> {
        let nc = self.nc;
        let [dl, dr, dp] = self.shape;
        let size = dl * dr * dp;
        let partials: Vec<(T, Vec<T>)> = f
            .par_chunks(nc * REDUCTION_CHUNK)
            .zip(self.idx.par_chunks(REDUCTION_CHUNK))
            .map(|(fc, ids)| {
                let mut grad = vec![T::zero(); size];
                let mut g = vec![T::zero(); nc];
                let mut w = vec![T::zero(); dp];
                let mut acc = T::zero();
                for (k, &i) in ids.iter().enumerate() {
                    let fi = &fc[k * nc..(k + 1) * nc];
                    match sample_loss(fi, self.view.samples[i].label, kind, Some(&mut g)) {
                        Some(v) => acc += v,
                        None => {
                            acc += T::of(DEGENERATE_PENALTY);
                            continue;
                        }
                    }
                    let e = self.view.env(i);
                    match e.top {
                        None => w.copy_from_slice(&g),
                        Some(u) => {
                            for (p, wp) in w.iter_mut().enumerate() {
                                *wp = u[p * nc..(p + 1) * nc].iter().zip(&g).map(|(&a, &b)| a * b).sum();
                            }
                        }
                    }
                    for (a, &la) in e.left.iter().enumerate() {
                        if la == T::zero() {
                            continue;
                        }
                        for (b, &rb) in e.right.iter().enumerate() {
                            let c = la * rb;
                            let row = &mut grad[(a * dr + b) * dp..(a * dr + b + 1) * dp];
                            for (gv, &wv) in row.iter_mut().zip(&w) {
                                *gv += c * wv;
                            }
                        }
                    }
                }
                (acc, grad)
            })
            .collect();
        let mut grad = vec![T::zero(); size];
        let mut loss = T::zero();
        for (l, g) in partials {
            loss += l;
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += *b;
            }
        }
        let inv = T::one() / T::of(self.idx.len() as f64);
        grad.iter_mut().for_each(|v| *v *= inv);
        LocalEval {
            loss: loss * inv,
            grad: DenseTensor::new(vec![dl, dr, dp], grad).expect("shape matches"),
        }
    }
}
