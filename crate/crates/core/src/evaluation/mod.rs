//! Classifier evaluation: tagging power with an abstention band, threshold
//! search, ROC/AUC, confidence histograms and the muon-charge baseline.
//!
//! Scores are `P_b`, the confidence for label 0 (`b`); truths use label 0 for
//! `b` and 1 for `bbar`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ttn::{decide, Decision};

/// Number of `Delta` values searched: `0.00, 0.01, .., 0.98`.
pub const DELTA_GRID_LEN: usize = 99;
pub const HISTOGRAM_BINS: usize = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("{what} has {actual} entries, expected {expected}")]
    Length {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("entry {index}: confidence {value} outside [0, 1]")]
    Confidence { index: usize, value: f64 },
    #[error("entry {index}: label {label} is not binary")]
    Label { index: usize, label: usize },
    #[error("both classes must be present")]
    SingleClass,
    #[error("no events to evaluate")]
    Empty,
    #[error("invalid abstention band {0}; expected 0 <= delta < 1")]
    Delta(f64),
    #[error("bin edges must be finite and strictly increasing")]
    BinEdges,
}

/// `eps_eff * (2a - 1)^2`.
pub fn tagging_power_formula(efficiency: f64, accuracy: f64) -> f64 {
    efficiency * (2.0 * accuracy - 1.0).powi(2)
}

/// Counting summary of a set of decisions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaggingPower {
    pub n: usize,
    pub n_decided: usize,
    pub n_correct: usize,
    pub efficiency: f64,
    pub efficiency_err: f64,
    /// `None` when nothing was decided.
    pub accuracy: Option<f64>,
    pub accuracy_err: f64,
    pub tagging_power: f64,
    pub tagging_power_err: f64,
}

impl TaggingPower {
    /// Normal-approximation binomial errors on `eps_eff` and `a`, propagated
    /// to `eps_tag` to first order.
    pub fn from_counts(n: usize, n_decided: usize, n_correct: usize) -> Self {
        let eff = if n > 0 { n_decided as f64 / n as f64 } else { 0.0 };
        let eff_err = if n > 0 { (eff * (1.0 - eff) / n as f64).sqrt() } else { 0.0 };
        let (acc, acc_err) = if n_decided > 0 {
            let a = n_correct as f64 / n_decided as f64;
            (Some(a), (a * (1.0 - a) / n_decided as f64).sqrt())
        } else {
            (None, 0.0)
        };
        let (tp, tp_err) = match acc {
            Some(a) => {
                let g = 2.0 * a - 1.0;
                (tagging_power_formula(eff, a), ((g * g * eff_err).powi(2) + (4.0 * eff * g * acc_err).powi(2)).sqrt())
            }
            None => (0.0, 0.0),
        };
        Self {
            n,
            n_decided,
            n_correct,
            efficiency: eff,
            efficiency_err: eff_err,
            accuracy: acc,
            accuracy_err: acc_err,
            tagging_power: tp,
            tagging_power_err: tp_err,
        }
    }

    pub fn from_decisions(decisions: &[Decision], truths: &[usize]) -> Result<Self, EvalError> {
        check_len("truths", decisions.len(), truths.len())?;
        let decided = decisions.iter().filter(|d| **d != Decision::Abstain).count();
        let correct = decisions.iter().zip(truths).filter(|(d, &t)| **d == Decision::Class(t)).count();
        Ok(Self::from_counts(decisions.len(), decided, correct))
    }
}

fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<(), EvalError> {
    if expected != actual {
        return Err(EvalError::Length { what, expected, actual });
    }
    Ok(())
}

fn check_inputs(p_b: &[f64], truths: &[usize]) -> Result<(), EvalError> {
    check_len("truths", p_b.len(), truths.len())?;
    if p_b.is_empty() {
        return Err(EvalError::Empty);
    }
    if let Some((index, &value)) = p_b.iter().enumerate().find(|(_, p)| !(0.0..=1.0).contains(*p)) {
        return Err(EvalError::Confidence { index, value });
    }
    if let Some((index, &label)) = truths.iter().enumerate().find(|(_, &t)| t > 1) {
        return Err(EvalError::Label { index, label });
    }
    Ok(())
}

fn check_delta(delta: f64) -> Result<(), EvalError> {
    if !(0.0..1.0).contains(&delta) {
        return Err(EvalError::Delta(delta));
    }
    Ok(())
}

/// `b` above `0.5 + delta/2`, `bbar` below `0.5 - delta/2`, abstain between.
pub fn decisions(p_b: &[f64], delta: f64) -> Vec<Decision> {
    p_b.iter().map(|&p| decide(&[p, 1.0 - p], delta)).collect()
}

pub fn tagging_power(p_b: &[f64], truths: &[usize], delta: f64) -> Result<TaggingPower, EvalError> {
    check_inputs(p_b, truths)?;
    check_delta(delta)?;
    TaggingPower::from_decisions(&decisions(p_b, delta), truths)
}

/// The `k`-th grid value `k / 100`.
pub fn delta_grid(k: usize) -> f64 {
    k as f64 / 100.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdChoice {
    pub delta: f64,
    /// `0.5 + delta / 2`.
    pub cut: f64,
    /// Achieved on the optimization set.
    pub tagging_power: f64,
}

/// Grid search for the band maximizing the tagging power; ties go to the
/// smaller `delta`. Call it on training or validation scores only.
pub fn optimize_threshold(p_b: &[f64], truths: &[usize]) -> Result<ThresholdChoice, EvalError> {
    check_inputs(p_b, truths)?;
    if truths.iter().all(|&t| t == truths[0]) {
        return Err(EvalError::SingleClass);
    }
    let mut best = (0, f64::NEG_INFINITY);
    for k in 0..DELTA_GRID_LEN {
        let tp = TaggingPower::from_decisions(&decisions(p_b, delta_grid(k)), truths)?.tagging_power;
        if tp > best.1 {
            best = (k, tp);
        }
    }
    let delta = delta_grid(best.0);
    Ok(ThresholdChoice {
        delta,
        cut: 0.5 + 0.5 * delta,
        tagging_power: best.1,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    /// `(false positive rate, true positive rate)` from `(0, 0)` to `(1, 1)`,
    /// one point per distinct score. `b` is the positive class.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

impl RocCurve {
    /// Two columns, `fpr tpr`.
    pub fn to_table(&self) -> String {
        let mut s = String::from("fpr\ttpr\n");
        for (x, y) in &self.points {
            let _ = writeln!(s, "{x:.10}\t{y:.10}");
        }
        s
    }
}

/// Threshold sweep over `P_b`; tied scores move together, so a tie counts
/// one half in the trapezoidal area.
pub fn roc_auc(p_b: &[f64], truths: &[usize]) -> Result<RocCurve, EvalError> {
    check_inputs(p_b, truths)?;
    let n_pos = truths.iter().filter(|&&t| t == 0).count();
    let n_neg = truths.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::SingleClass);
    }
    let mut order: Vec<usize> = (0..p_b.len()).collect();
    order.sort_by(|&a, &b| p_b[b].total_cmp(&p_b[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let score = p_b[order[i]];
        let (tp0, fp0) = (tp, fp);
        while i < order.len() && p_b[order[i]] == score {
            if truths[order[i]] == 0 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        auc += (fp - fp0) as f64 * (tp + tp0) as f64 / 2.0;
        points.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64));
    }
    Ok(RocCurve {
        points,
        auc: auc / (n_pos as f64 * n_neg as f64),
    })
}

/// Which charge sign of the leading muon stands for `b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MuonConvention {
    /// A negative muon comes from a `b` quark.
    #[default]
    NegativeIsB,
    PositiveIsB,
}

/// Decision from the leading-muon charge column; a zero charge means no
/// muon and abstains.
pub fn muon_tag(muon_charge: &[f64], convention: MuonConvention) -> Vec<Decision> {
    let (neg, pos) = match convention {
        MuonConvention::NegativeIsB => (0, 1),
        MuonConvention::PositiveIsB => (1, 0),
    };
    muon_charge
        .iter()
        .map(|&q| {
            if q < 0.0 {
                Decision::Class(neg)
            } else if q > 0.0 {
                Decision::Class(pos)
            } else {
                Decision::Abstain
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinnedTagging {
    pub lo: f64,
    pub hi: f64,
    pub power: TaggingPower,
}

/// Tagging power per covariate bin `[edges[i], edges[i+1])`; the last bin
/// also takes its upper edge. Events outside every bin are skipped.
pub fn binned_tagging_power(
    decisions: &[Decision],
    truths: &[usize],
    covariate: &[f64],
    edges: &[f64],
) -> Result<Vec<BinnedTagging>, EvalError> {
    check_len("truths", decisions.len(), truths.len())?;
    check_len("covariate", decisions.len(), covariate.len())?;
    if edges.len() < 2 || edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[1] <= w[0]) {
        return Err(EvalError::BinEdges);
    }
    let nb = edges.len() - 1;
    let mut counts = vec![(0usize, 0usize, 0usize); nb];
    for ((d, &t), &x) in decisions.iter().zip(truths).zip(covariate) {
        let Some(b) = bin_of(x, edges) else { continue };
        counts[b].0 += 1;
        if *d != Decision::Abstain {
            counts[b].1 += 1;
        }
        if *d == Decision::Class(t) {
            counts[b].2 += 1;
        }
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(b, (n, dec, cor))| BinnedTagging {
            lo: edges[b],
            hi: edges[b + 1],
            power: TaggingPower::from_counts(n, dec, cor),
        })
        .collect())
}

fn bin_of(x: f64, edges: &[f64]) -> Option<usize> {
    let nb = edges.len() - 1;
    if !(x >= edges[0] && x <= edges[nb]) {
        return None;
    }
    Some(edges.partition_point(|&e| e <= x).saturating_sub(1).min(nb - 1))
}

/// Counts of `P_b` in 50 equal bins over `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConfidenceHistogram {
    pub total: Vec<usize>,
    pub truth_b: Vec<usize>,
    pub truth_bbar: Vec<usize>,
    /// Events classified correctly with no abstention band.
    pub correct: Vec<usize>,
    pub muon_present: Vec<usize>,
}

impl ConfidenceHistogram {
    pub fn bin_edges() -> Vec<f64> {
        (0..=HISTOGRAM_BINS).map(|k| k as f64 / HISTOGRAM_BINS as f64).collect()
    }

    /// Columns `lo hi total truth_b truth_bbar correct muon_present`.
    pub fn to_table(&self) -> String {
        let e = Self::bin_edges();
        let mut s = String::from("lo\thi\ttotal\ttruth_b\ttruth_bbar\tcorrect\tmuon_present\n");
        for b in 0..HISTOGRAM_BINS {
            let _ = writeln!(
                s,
                "{:.2}\t{:.2}\t{}\t{}\t{}\t{}\t{}",
                e[b], e[b + 1], self.total[b], self.truth_b[b], self.truth_bbar[b], self.correct[b], self.muon_present[b]
            );
        }
        s
    }
}

/// `muon_present` may be empty when there is no muon information.
pub fn confidence_histogram(
    p_b: &[f64],
    truths: &[usize],
    muon_present: &[bool],
) -> Result<ConfidenceHistogram, EvalError> {
    check_inputs(p_b, truths)?;
    if !muon_present.is_empty() {
        check_len("muon flags", p_b.len(), muon_present.len())?;
    }
    let mut h = ConfidenceHistogram {
        total: vec![0; HISTOGRAM_BINS],
        truth_b: vec![0; HISTOGRAM_BINS],
        truth_bbar: vec![0; HISTOGRAM_BINS],
        correct: vec![0; HISTOGRAM_BINS],
        muon_present: vec![0; HISTOGRAM_BINS],
    };
    for (i, (&p, &t)) in p_b.iter().zip(truths).enumerate() {
        let b = ((p * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
        h.total[b] += 1;
        if t == 0 {
            h.truth_b[b] += 1;
        } else {
            h.truth_bbar[b] += 1;
        }
        if decide(&[p, 1.0 - p], 0.0) == Decision::Class(t) {
            h.correct[b] += 1;
        }
        if muon_present.get(i).copied().unwrap_or(false) {
            h.muon_present[b] += 1;
        }
    }
    Ok(h)
}

/// Everything reported for one set of scores.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub delta: f64,
    pub overall: TaggingPower,
    /// Accuracy with no abstention band.
    pub raw_accuracy: f64,
    pub auc: f64,
    pub bins: Vec<BinnedTagging>,
    pub histogram: ConfidenceHistogram,
}

impl EvalReport {
    pub fn to_table(&self) -> String {
        let o = &self.overall;
        let mut s = String::new();
        let _ = writeln!(s, "delta\t{:.2}", self.delta);
        let _ = writeln!(s, "n\t{}", o.n);
        let _ = writeln!(s, "efficiency\t{:.6}\t{:.6}", o.efficiency, o.efficiency_err);
        match o.accuracy {
            Some(a) => {
                let _ = writeln!(s, "accuracy\t{a:.6}\t{:.6}", o.accuracy_err);
            }
            None => s.push_str("accuracy\tundefined\n"),
        }
        let _ = writeln!(s, "tagging_power\t{:.6}\t{:.6}", o.tagging_power, o.tagging_power_err);
        let _ = writeln!(s, "raw_accuracy\t{:.6}", self.raw_accuracy);
        let _ = writeln!(s, "auc\t{:.6}", self.auc);
        if !self.bins.is_empty() {
            s.push_str("\nbin_lo\tbin_hi\tn\tefficiency\taccuracy\ttagging_power\ttagging_power_err\n");
            for b in &self.bins {
                let p = &b.power;
                let _ = writeln!(
                    s,
                    "{}\t{}\t{}\t{:.6}\t{}\t{:.6}\t{:.6}",
                    b.lo,
                    b.hi,
                    p.n,
                    p.efficiency,
                    p.accuracy.map_or_else(|| "undefined".to_string(), |a| format!("{a:.6}")),
                    p.tagging_power,
                    p.tagging_power_err
                );
            }
        }
        s
    }
}

/// Optional inputs of [`evaluate`].
#[derive(Debug, Clone, Default)]
pub struct EvalExtras<'a> {
    pub covariate: Option<(&'a [f64], &'a [f64])>,
    pub muon_present: &'a [bool],
}

pub fn evaluate(p_b: &[f64], truths: &[usize], delta: f64, extras: &EvalExtras<'_>) -> Result<EvalReport, EvalError> {
    let overall = tagging_power(p_b, truths, delta)?;
    let raw = tagging_power(p_b, truths, 0.0)?;
    let roc = roc_auc(p_b, truths)?;
    let bins = match extras.covariate {
        Some((values, edges)) => binned_tagging_power(&decisions(p_b, delta), truths, values, edges)?,
        None => Vec::new(),
    };
    Ok(EvalReport {
        delta,
        overall,
        raw_accuracy: raw.n_correct as f64 / raw.n as f64,
        auc: roc.auc,
        bins,
        histogram: confidence_histogram(p_b, truths, extras.muon_present)?,
    })
}
