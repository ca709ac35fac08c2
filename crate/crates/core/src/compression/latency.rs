use std::fmt::Write as _;
use std::time::Instant;

use super::{truncate, CompressionError, CompressionReport, TruncationPlan};
use crate::scalar::Scalar;
use crate::training::{accuracy, LabeledSample};
use crate::ttn::{EncodedSample, TtnModel};

/// Lower bound on predictions timed per measurement.
pub const MIN_PREDICTIONS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyStats {
    pub mean_us: f64,
    pub p50_us: f64,
    pub p99_us: f64,
    pub n_predictions: usize,
}

impl LatencyStats {
    /// Summary of per-prediction timings in microseconds.
    pub fn from_timings(mut us: Vec<f64>) -> Self {
        us.sort_by(f64::total_cmp);
        let n = us.len();
        let q = |p: f64| if n == 0 { 0.0 } else { us[((p * (n - 1) as f64).round() as usize).min(n - 1)] };
        Self {
            mean_us: if n == 0 { 0.0 } else { us.iter().sum::<f64>() / n as f64 },
            p50_us: q(0.5),
            p99_us: q(0.99),
            n_predictions: n,
        }
    }
}

/// Anything that can put a latency figure on a model.
pub trait LatencyMeter<T: Scalar> {
    fn measure(&mut self, model: &TtnModel<T>) -> Result<LatencyStats, CompressionError>;
}

/// Times single predictions on the calling thread, cycling through the
/// calibration samples until `n_predictions` have been timed. One untimed
/// pass warms the caches first.
#[derive(Debug, Clone)]
pub struct WallClockProbe<'a, T> {
    pub samples: &'a [EncodedSample<T>],
    pub n_predictions: usize,
}

impl<'a, T> WallClockProbe<'a, T> {
    pub fn new(samples: &'a [EncodedSample<T>]) -> Self {
        Self {
            samples,
            n_predictions: MIN_PREDICTIONS.max(samples.len()),
        }
    }
}

impl<T: Scalar> LatencyMeter<T> for WallClockProbe<'_, T> {
    fn measure(&mut self, model: &TtnModel<T>) -> Result<LatencyStats, CompressionError> {
        if self.samples.is_empty() {
            return Err(CompressionError::NoCalibration);
        }
        let mut ws = model.workspace();
        for s in self.samples.iter().take(self.n_predictions) {
            std::hint::black_box(model.classify_with(s, 0.0, &mut ws)?);
        }
        let mut us = Vec::with_capacity(self.n_predictions);
        for s in self.samples.iter().cycle().take(self.n_predictions) {
            let t0 = Instant::now();
            let r = model.classify_with(std::hint::black_box(s), 0.0, &mut ws)?;
            std::hint::black_box(r);
            us.push(t0.elapsed().as_secs_f64() * 1e6);
        }
        Ok(LatencyStats::from_timings(us))
    }
}

/// Largest uniform cap whose measured mean latency fits `budget_us`, found
/// by bisection between 1 and the current largest bond. The input model is
/// returned untouched when it already fits.
pub fn tune_for_latency<T: Scalar, M: LatencyMeter<T>>(
    model: &TtnModel<T>,
    budget_us: f64,
    meter: &mut M,
) -> Result<(TtnModel<T>, CompressionReport), CompressionError> {
    if !(budget_us > 0.0 && budget_us.is_finite()) {
        return Err(CompressionError::Plan(format!("latency budget {budget_us} must be positive")));
    }
    let before = meter.measure(model)?;
    let top = model.max_bond();
    if before.mean_us <= budget_us {
        // Full-rank truncation is lossless but not bit-identical, so only its
        // report is kept.
        let (_, mut rep) = truncate(model, &TruncationPlan::uniform(top))?;
        rep.latency_before = Some(before);
        rep.latency_after = Some(before);
        return Ok((model.clone(), rep));
    }
    let (floor_model, floor_rep) = truncate(model, &TruncationPlan::uniform(1))?;
    let floor = meter.measure(&floor_model)?;
    if floor.mean_us > budget_us {
        return Err(CompressionError::Unachievable {
            budget_us,
            floor_us: floor.mean_us,
        });
    }
    let mut best = (1, floor_model, floor_rep, floor);
    let (mut lo, mut hi) = (1, top);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        let (m, rep) = truncate(model, &TruncationPlan::uniform(mid))?;
        let lat = meter.measure(&m)?;
        if lat.mean_us <= budget_us {
            lo = mid;
            best = (mid, m, rep, lat);
        } else {
            hi = mid;
        }
    }
    let (chi, m, mut rep, lat) = best;
    log::info!("latency budget {budget_us} us met at chi {chi} ({:.3} us)", lat.mean_us);
    rep.latency_before = Some(before);
    rep.latency_after = Some(lat);
    Ok((m, rep))
}

/// One row of the accuracy/latency/size trade-off table.
#[derive(Debug, Clone, PartialEq)]
pub struct ChiSweepRow {
    pub chi: usize,
    pub params: usize,
    pub accuracy_without_cut: f64,
    pub accuracy_with_cut: f64,
    pub min_fidelity: f64,
    pub latency: LatencyStats,
}

impl ChiSweepRow {
    pub fn header() -> &'static str {
        "chi\tfree_params\taccuracy_uncut\taccuracy_cut\tmin_fidelity\twall-clock_mean_us\twall-clock_p99_us"
    }

    pub fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{:.6}\t{:.6}\t{:.10}\t{:.3}\t{:.3}",
            self.chi,
            self.params,
            self.accuracy_without_cut,
            self.accuracy_with_cut,
            self.min_fidelity,
            self.latency.mean_us,
            self.latency.p99_us
        )
    }
}

/// Truncates `model` to each cap in `chis` and records size, accuracy on
/// `test` and latency. A cap at or above the current bonds gives the uncut row.
pub fn chi_sweep<T: Scalar, M: LatencyMeter<T>>(
    model: &TtnModel<T>,
    chis: &[usize],
    test: &[LabeledSample<T>],
    meter: &mut M,
) -> Result<Vec<ChiSweepRow>, CompressionError> {
    let uncut = accuracy(model, test);
    chis.iter()
        .map(|&chi| {
            let (m, rep) = truncate(model, &TruncationPlan::uniform(chi))?;
            Ok(ChiSweepRow {
                chi,
                params: rep.params_after,
                accuracy_without_cut: uncut,
                accuracy_with_cut: accuracy(&m, test),
                min_fidelity: rep.min_fidelity(),
                latency: meter.measure(&m)?,
            })
        })
        .collect()
}

/// Header plus one line per row.
pub fn chi_sweep_table(rows: &[ChiSweepRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{}", ChiSweepRow::header());
    for r in rows {
        let _ = writeln!(s, "{}", r.to_line());
    }
    s
}
