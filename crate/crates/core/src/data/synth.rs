//! Synthetic jets with a planted, known dependence on the label.
//!
//! Each event draws `s = +1` (label `b`) or `s = -1` (label `bbar`). A
//! particle type is present with its own probability, independent of `s`.
//! When present its charge is `-s` with probability `charge_rho` and `+s`
//! otherwise, its `p_T^rel` is Gamma distributed with mean
//! `pt_mean * (1 + pt_signal * s)`, and its `dR` is half-normal with scale
//! `dr_sigma * (1 + dr_signal * s)`, clipped to the 0.5 cone. Absent
//! particles have all three features set to 0. The jet charge sums over the
//! listed particles flagged `in_jet_charge` and a few hidden tracks.
//!
//! The default plan has eight informative columns and eight pure-noise
//! ones: the noise particles are always present, carry no signal and stay
//! out of the jet charge, so their columns are independent of the label and
//! of every other column.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{jet_charge, DataError, Dataset, JET_FEATURES};

pub const PARTICLES: [&str; 5] = ["muon", "kaon", "pion", "electron", "proton"];

const CONE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParticlePlan {
    pub presence: f64,
    /// Probability that the charge is opposite to `s`; 0.5 carries no signal.
    pub charge_rho: f64,
    pub pt_mean: f64,
    pub pt_signal: f64,
    pub dr_sigma: f64,
    pub dr_signal: f64,
    pub in_jet_charge: bool,
}

impl Default for ParticlePlan {
    fn default() -> Self {
        Self {
            presence: 0.5,
            charge_rho: 0.5,
            pt_mean: 1.0,
            pt_signal: 0.0,
            dr_sigma: 0.15,
            dr_signal: 0.0,
            in_jet_charge: true,
        }
    }
}

impl ParticlePlan {
    fn new(presence: f64, charge_rho: f64, pt_mean: f64, pt_signal: f64, dr_sigma: f64, dr_signal: f64) -> Self {
        Self {
            presence,
            charge_rho,
            pt_mean,
            pt_signal,
            dr_sigma,
            dr_signal,
            in_jet_charge: true,
        }
    }

    fn noise(pt_mean: f64, dr_sigma: f64) -> Self {
        Self {
            in_jet_charge: false,
            ..Self::new(1.0, 0.5, pt_mean, 0.0, dr_sigma, 0.0)
        }
    }

    fn validate(&self, name: &str) -> Result<(), DataError> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.presence) || !unit(self.charge_rho) {
            return Err(DataError::Plan(format!("{name}: probabilities must lie in [0, 1]")));
        }
        if !(self.pt_mean > 0.0 && self.dr_sigma > 0.0) {
            return Err(DataError::Plan(format!("{name}: pt_mean and dr_sigma must be positive")));
        }
        if self.pt_signal.abs() >= 1.0 || self.dr_signal.abs() >= 1.0 {
            return Err(DataError::Plan(format!("{name}: signal strengths must lie in (-1, 1)")));
        }
        Ok(())
    }

    /// Informativeness of (charge, p_T, dR). A particle that is sometimes
    /// absent leaks its presence into all three columns; when its charge
    /// carries signal, or it enters the jet charge, the other two columns
    /// are informative jointly with it and count as such.
    fn informative(&self, q_signal: bool) -> [bool; 3] {
        let present = self.presence > 0.0;
        let charge = present && (self.charge_rho - 0.5).abs() > 1e-12;
        let linked = present && self.presence < 1.0 && (charge || (self.in_jet_charge && q_signal));
        let weight = present && self.in_jet_charge && q_signal;
        [
            charge,
            linked || weight || (present && self.pt_signal != 0.0),
            linked || (present && self.dr_signal != 0.0),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_events: usize,
    pub seed: u64,
    /// Probability of label `b`.
    pub b_fraction: f64,
    pub muon: ParticlePlan,
    pub kaon: ParticlePlan,
    pub pion: ParticlePlan,
    pub electron: ParticlePlan,
    pub proton: ParticlePlan,
    /// Unlisted charged tracks that enter only the jet charge.
    pub hidden_tracks: usize,
    pub hidden_rho: f64,
    /// Reject plans in which no feature depends on the label.
    pub require_signal: bool,
}

impl Default for SynthConfig {
    /// Informative: the muon and kaon triplets, the pion charge and `Q`.
    /// Pure noise: pion `p_T` and `dR` and the electron and proton triplets.
    fn default() -> Self {
        let pion = ParticlePlan {
            in_jet_charge: false,
            ..ParticlePlan::new(1.0, 0.65, 1.0, 0.0, 0.20, 0.0)
        };
        Self {
            n_events: 20_000,
            seed: 0,
            b_fraction: 0.5,
            muon: ParticlePlan::new(0.5, 0.9, 2.0, 0.5, 0.10, -0.5),
            kaon: ParticlePlan::new(0.7, 0.75, 1.5, 0.4, 0.15, 0.4),
            pion,
            electron: ParticlePlan::noise(1.5, 0.10),
            proton: ParticlePlan::noise(1.2, 0.15),
            hidden_tracks: 3,
            hidden_rho: 0.55,
            require_signal: true,
        }
    }
}

impl SynthConfig {
    pub fn particles(&self) -> [&ParticlePlan; 5] {
        [&self.muon, &self.kaon, &self.pion, &self.electron, &self.proton]
    }

    /// Ground truth per jet feature, in schema order.
    pub fn informative(&self) -> Vec<bool> {
        let hidden = self.hidden_tracks > 0 && (self.hidden_rho - 0.5).abs() > 1e-12;
        let q_signal = hidden || self.particles().iter().any(|p| p.in_jet_charge && p.informative(false)[0]);
        let mut out: Vec<bool> = self.particles().iter().flat_map(|p| p.informative(q_signal)).collect();
        out.push(q_signal);
        out
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.n_events == 0 {
            return Err(DataError::Plan("n_events must be positive".into()));
        }
        if !(self.b_fraction > 0.0 && self.b_fraction < 1.0) {
            return Err(DataError::Plan("b_fraction must lie in (0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.hidden_rho) {
            return Err(DataError::Plan("hidden_rho must lie in [0, 1]".into()));
        }
        for (p, name) in self.particles().iter().zip(PARTICLES) {
            p.validate(name)?;
        }
        if self.require_signal && !self.informative().iter().any(|&b| b) {
            return Err(DataError::Plan("no feature depends on the label".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub data: Dataset,
    /// Planted informativeness per feature, in schema order.
    pub informative: Vec<bool>,
}

pub fn synth_generate(config: &SynthConfig) -> Result<SynthDataset, DataError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let hidden_pt = Gamma::new(2.0, 0.5).expect("valid gamma");
    let jet_pt = Gamma::new(4.0, 10.0).expect("valid gamma");
    let mut features = Vec::with_capacity(config.n_events * 16);
    let mut labels = Vec::with_capacity(config.n_events);
    let mut covariates = Vec::with_capacity(config.n_events);
    let mut tracks: Vec<(f64, f64)> = Vec::new();
    for _ in 0..config.n_events {
        let is_b = rng.random::<f64>() < config.b_fraction;
        let s = if is_b { 1.0 } else { -1.0 };
        tracks.clear();
        for plan in config.particles() {
            if rng.random::<f64>() < plan.presence {
                let q = if rng.random::<f64>() < plan.charge_rho { -s } else { s };
                let mean = plan.pt_mean * (1.0 + plan.pt_signal * s);
                let pt = Gamma::new(2.0, mean / 2.0).expect("positive mean").sample(&mut rng);
                let z: f64 = rng.sample(StandardNormal);
                let dr = (z.abs() * plan.dr_sigma * (1.0 + plan.dr_signal * s)).min(CONE);
                features.extend_from_slice(&[q, pt, dr]);
                if plan.in_jet_charge {
                    tracks.push((q, pt));
                }
            } else {
                features.extend_from_slice(&[0.0, 0.0, 0.0]);
            }
        }
        for _ in 0..config.hidden_tracks {
            let q = if rng.random::<f64>() < config.hidden_rho { -s } else { s };
            tracks.push((q, hidden_pt.sample(&mut rng)));
        }
        features.push(jet_charge(&tracks).value);
        labels.push(if is_b { 0 } else { 1 });
        covariates.push(20.0 + jet_pt.sample(&mut rng));
    }
    let data = Dataset::with_covariates(
        JET_FEATURES.iter().map(|s| s.to_string()).collect(),
        features,
        labels,
        vec!["jet_pt".into()],
        covariates,
    )?;
    Ok(SynthDataset {
        data,
        informative: config.informative(),
    })
}
