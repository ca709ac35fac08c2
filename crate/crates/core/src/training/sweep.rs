use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::env::EnvCache;
use super::loss::{check_batch, loss, LocalProblem};
use super::{LabeledSample, TrainConfig, TrainError, REDUCTION_CHUNK};
use crate::scalar::Scalar;
use crate::ttn::{Decision, TtnModel};

const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRecord {
    pub sweep: usize,
    /// Mean training loss after the sweep.
    pub loss: f64,
    pub train_accuracy: f64,
    pub validation_accuracy: Option<f64>,
    pub accepted_steps: usize,
    pub degenerate_samples: usize,
    pub wall_clock_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub records: Vec<SweepRecord>,
    /// Batch loss after every accepted line-search step, in order.
    pub step_losses: Vec<f64>,
    pub final_bond_dims: Vec<usize>,
    /// Sweep whose model was returned (0: the input model).
    pub best_sweep: usize,
    pub stopped_early: bool,
}

impl TrainReport {
    /// One tab-separated record per sweep. The wall-clock column carries a
    /// `wall-clock` prefix so it can be dropped when comparing runs.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("sweep\tloss\ttrain_acc\tval_acc\taccepted_steps\tdegenerate\twall-clock_s\n");
        for r in &self.records {
            let val = r.validation_accuracy.map_or("-".to_string(), |v| format!("{v:.6}"));
            let _ = writeln!(
                s,
                "{}\t{:.10}\t{:.6}\t{}\t{}\t{}\t{:.4}",
                r.sweep, r.loss, r.train_accuracy, val, r.accepted_steps, r.degenerate_samples, r.wall_clock_s
            );
        }
        s
    }
}

/// Fraction of samples whose `delta = 0` decision equals the label.
pub fn accuracy<T: Scalar>(model: &TtnModel<T>, set: &[LabeledSample<T>]) -> f64 {
    if set.is_empty() {
        return 0.0;
    }
    let correct: usize = set
        .par_chunks(REDUCTION_CHUNK)
        .map(|chunk| {
            let mut ws = model.workspace();
            chunk
                .iter()
                .filter(|s| {
                    matches!(model.classify_with(&s.sample, 0.0, &mut ws),
                        Ok(r) if r.decision == Decision::Class(s.label))
                })
                .count()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    correct as f64 / set.len() as f64
}

struct Batcher {
    order: Vec<usize>,
    cursor: usize,
    size: Option<usize>,
    rng: ChaCha8Rng,
}

impl Batcher {
    fn new(n: usize, size: Option<usize>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n).collect();
        if size.is_some_and(|b| b < n) {
            order.shuffle(&mut rng);
        }
        Self {
            order,
            cursor: 0,
            size,
            rng,
        }
    }

    fn next(&mut self) -> Vec<usize> {
        let n = self.order.len();
        match self.size {
            Some(b) if b < n => {
                let mut out = Vec::with_capacity(b);
                while out.len() < b {
                    if self.cursor == n {
                        self.order.shuffle(&mut self.rng);
                        self.cursor = 0;
                    }
                    out.push(self.order[self.cursor]);
                    self.cursor += 1;
                }
                out.sort_unstable();
                out
            }
            _ => (0..n).collect(),
        }
    }
}

/// Runs `config.n_sweeps` depth-first sweeps and returns the model with the
/// best validation accuracy (the last model when `validation` is empty).
pub fn train<T: Scalar>(
    model: &TtnModel<T>,
    train_set: &[LabeledSample<T>],
    validation: &[LabeledSample<T>],
    config: &TrainConfig,
) -> Result<(TtnModel<T>, TrainReport), TrainError> {
    config.validate()?;
    check_batch(model, train_set)?;
    if !validation.is_empty() {
        check_batch(model, validation)?;
    }
    let mut report = TrainReport {
        records: Vec::new(),
        step_losses: Vec::new(),
        final_bond_dims: model.bond_dims(),
        best_sweep: 0,
        stopped_early: false,
    };
    if config.n_sweeps == 0 {
        return Ok((model.clone(), report));
    }
    let mut m = model.clone();
    m.canonicalize_in_place(0)?;
    let topo = m.topology().clone();
    let order = topo.preorder();
    let mut cache = EnvCache::new(topo.n_nodes());
    let mut batcher = Batcher::new(train_set.len(), config.batch_size, config.seed);
    let mut best: Option<(f64, TtnModel<T>)> = None;
    let mut since_best = 0;

    for sweep in 1..=config.n_sweeps {
        let t0 = Instant::now();
        let mut accepted = 0;
        for &node in &order {
            let c = m.canonical_center().expect("model stays canonical during sweeps");
            if c != node {
                for w in topo.path(c, node).windows(2) {
                    m.move_center(w[1])?;
                    cache.invalidate(&topo, w[0]);
                    cache.invalidate(&topo, w[1]);
                }
            }
            let idx = batcher.next();
            accepted += optimize_node(&mut m, &mut cache, train_set, node, &idx, config, sweep, &mut report.step_losses)?;
        }
        let summary = loss(&m, train_set, config.loss)?;
        if !summary.value.is_finite() {
            return Err(TrainError::NonFinite {
                sweep,
                node: m.canonical_center().unwrap_or(0),
                state: format!("training loss {} after sweep", summary.value),
            });
        }
        let train_accuracy = accuracy(&m, train_set);
        let validation_accuracy = (!validation.is_empty()).then(|| accuracy(&m, validation));
        let rec = SweepRecord {
            sweep,
            loss: summary.value,
            train_accuracy,
            validation_accuracy,
            accepted_steps: accepted,
            degenerate_samples: summary.degenerate,
            wall_clock_s: t0.elapsed().as_secs_f64(),
        };
        log::info!(
            "sweep {sweep}: loss {:.6} train_acc {:.4} val_acc {:?}",
            rec.loss,
            rec.train_accuracy,
            rec.validation_accuracy
        );
        report.records.push(rec);
        if let Some(va) = validation_accuracy {
            if best.as_ref().is_none_or(|(b, _)| va > *b) {
                best = Some((va, m.clone()));
                report.best_sweep = sweep;
                since_best = 0;
            } else {
                since_best += 1;
                if config.early_stop_patience > 0 && since_best >= config.early_stop_patience {
                    report.stopped_early = sweep < config.n_sweeps;
                    break;
                }
            }
        } else {
            report.best_sweep = sweep;
        }
    }
    let out = match best {
        Some((_, b)) => b,
        None => m,
    };
    report.final_bond_dims = out.bond_dims();
    Ok((out, report))
}

#[allow(clippy::too_many_arguments)]
fn optimize_node<T: Scalar>(
    m: &mut TtnModel<T>,
    cache: &mut EnvCache<T>,
    samples: &[LabeledSample<T>],
    node: usize,
    idx: &[usize],
    config: &TrainConfig,
    sweep: usize,
    step_losses: &mut Vec<f64>,
) -> Result<usize, TrainError> {
    cache.prepare(m, samples, node);
    let view = cache.view(m, samples, node);
    let problem = LocalProblem::new(&view, idx, m.n_classes(), m.tensor(node).shape());
    let rescale = config.loss.is_scale_invariant();
    let mut t = m.tensor(node).clone();
    let nrm = t.frobenius_norm();
    if rescale && nrm > T::zero() {
        t.scale(T::one() / nrm);
    }
    // The penalty lam * ||t||^2 equals lam * ||psi||^2 at the center.
    let lam = T::of(config.l2_penalty);
    let objective = |f: &[T], t: &crate::tensor::DenseTensor<T>| {
        let mut ev = problem.loss_grad(f, config.loss);
        if lam > T::zero() {
            ev.loss += lam * t.dot(t);
            ev.grad.axpy(lam + lam, t);
        }
        ev
    };
    let mut f = problem.project(&t);
    let mut ev = objective(&f, &t);
    let non_finite = |what: &str, value: T, t: &crate::tensor::DenseTensor<T>| TrainError::NonFinite {
        sweep,
        node,
        state: format!(
            "{what} = {value}; center norm {}, shape {:?}, batch {}",
            t.frobenius_norm(),
            t.shape(),
            idx.len()
        ),
    };
    if !ev.loss.is_finite() {
        return Err(non_finite("local loss", ev.loss, &t));
    }
    let mut prev: Option<(crate::tensor::DenseTensor<T>, crate::tensor::DenseTensor<T>)> = None;
    let mut accepted = 0;
    for _ in 0..config.cg_iters_per_node {
        let g = &ev.grad;
        let gnorm = g.frobenius_norm();
        if gnorm.to_f64_lossy() < config.cg_tolerance {
            break;
        }
        let steepest = g.scaled(-T::one());
        let dir = match &prev {
            None => steepest,
            Some((gp, dp)) => {
                let gg = gp.dot(gp);
                let beta = if gg > T::zero() { ((g.dot(g) - g.dot(gp)) / gg).max(T::zero()) } else { T::zero() };
                let mut d = steepest.clone();
                d.axpy(beta, dp);
                if d.dot(g) >= T::zero() {
                    steepest
                } else {
                    d
                }
            }
        };
        let slope = g.dot(&dir);
        let fd = problem.project(&dir);
        let (tt, td, dd) = (t.dot(&t), t.dot(&dir), dir.dot(&dir));
        let mut alpha = t.frobenius_norm() / dir.frobenius_norm();
        let mut found = false;
        for _ in 0..MAX_BACKTRACKS {
            let (mut trial, _) = problem.loss_along(&f, &fd, alpha, config.loss);
            if lam > T::zero() {
                trial += lam * (tt + (td + td) * alpha + dd * alpha * alpha);
            }
            if trial.is_finite() && trial <= ev.loss + T::of(ARMIJO_C1) * alpha * slope {
                found = true;
                break;
            }
            alpha *= T::of(0.5);
        }
        if !found {
            break;
        }
        t.axpy(alpha, &dir);
        let s = if rescale { T::one() / t.frobenius_norm() } else { T::one() };
        t.scale(s);
        for (fv, &dv) in f.iter_mut().zip(&fd) {
            *fv = (*fv + alpha * dv) * s;
        }
        prev = Some((ev.grad.clone(), dir));
        ev = objective(&f, &t);
        if !ev.loss.is_finite() {
            return Err(non_finite("local loss", ev.loss, &t));
        }
        step_losses.push(ev.loss.to_f64_lossy());
        accepted += 1;
    }
    drop(view);
    m.set_tensor(node, t)?;
    cache.invalidate(m.topology(), node);
    Ok(accepted)
}
