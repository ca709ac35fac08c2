//! The pipeline configuration file. Every section is optional; unknown keys
//! are rejected at every level.

use std::path::Path;

use serde::{Deserialize, Serialize};
use ttnml::analysis::QuipsConfig;
use ttnml::compression::{TruncationPlan, TruncationTarget};
use ttnml::data::{Schema, SplitSpec, SynthConfig};
use ttnml::evaluation::MuonConvention;
use ttnml::training::TrainConfig;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub data: DataConfig,
    pub split: SplitSpec,
    pub train: TrainConfig,
    pub synth: SynthConfig,
    pub quips: QuipsConfig,
    pub compress: CompressConfig,
    pub bench: BenchConfig,
    pub eval: EvalConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemaKind {
    /// The 16 jet features in schema order.
    #[default]
    Jet,
    /// Columns before `label` are features.
    Generic,
}

impl From<SchemaKind> for Schema {
    fn from(s: SchemaKind) -> Self {
        match s {
            SchemaKind::Jet => Schema::Jet,
            SchemaKind::Generic => Schema::Generic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub schema: SchemaKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompressConfig {
    pub target: TruncationTarget,
    pub cutoff: f64,
    /// Caps listed in the trade-off table when data is given.
    pub table_chis: Vec<usize>,
}

impl Default for CompressConfig {
    fn default() -> Self {
        let plan = TruncationPlan::default();
        Self {
            target: plan.target,
            cutoff: plan.cutoff,
            table_chis: vec![16, 8, 4, 2, 1],
        }
    }
}

impl CompressConfig {
    pub fn plan(&self) -> TruncationPlan {
        TruncationPlan {
            target: self.target.clone(),
            cutoff: self.cutoff,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    /// Timed single predictions per measurement.
    pub n_predictions: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            n_predictions: ttnml::compression::MIN_PREDICTIONS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Fixed abstention band. When absent it is optimized on the tuning
    /// predictions, or 0 without them.
    pub delta: Option<f64>,
    /// Covariate column for the binned breakdown.
    pub covariate: Option<String>,
    pub bin_edges: Vec<f64>,
    pub muon_convention: MuonConvention,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let c: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.train.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.quips.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.compress.plan().validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.compress.table_chis.contains(&0) {
            return Err(CliError::Config("compress.table_chis entries must be at least 1".into()));
        }
        if let Some(d) = self.eval.delta {
            if !(0.0..1.0).contains(&d) {
                return Err(CliError::Config(format!("eval.delta {d} outside [0, 1)")));
            }
        }
        if self.bench.n_predictions == 0 {
            return Err(CliError::Config("bench.n_predictions must be positive".into()));
        }
        Ok(())
    }

    /// One seed drives every random stage.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.split.seed = seed;
        self.train.seed = seed;
        self.synth.seed = seed;
        self
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_else(|e| format!("# unserializable config: {e}"))
    }
}
