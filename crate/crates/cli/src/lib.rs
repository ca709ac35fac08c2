//! The `ttnml` command-line pipeline: synthesize, train, predict, analyze,
//! compress, benchmark and evaluate.

pub mod commands;
pub mod config;
pub mod pipeline;
pub mod report;

pub use commands::{run, Cli, Command};
pub use config::PipelineConfig;

use thiserror::Error;
use ttnml::analysis::AnalysisError;
use ttnml::compression::CompressionError;
use ttnml::data::DataError;
use ttnml::evaluation::EvalError;
use ttnml::training::TrainError;
use ttnml::ttn::io::ModelFileError;
use ttnml::ttn::ModelError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    /// 2 configuration, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Data(_) => 3,
            Self::Numerical(_) => 4,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Model(m) => m.into(),
            DataError::Plan(_) | DataError::Split(_) => Self::Config(e.to_string()),
            other => Self::Data(other.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Degenerate | ModelError::Tensor(_) => Self::Numerical(e.to_string()),
            _ => Self::Data(e.to_string()),
        }
    }
}

impl From<ModelFileError> for CliError {
    fn from(e: ModelFileError) -> Self {
        Self::Data(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) => Self::Config(e.to_string()),
            TrainError::NonFinite { .. } => Self::Numerical(e.to_string()),
            TrainError::Model(m) => m.into(),
            other => Self::Data(other.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::ZeroNorm { .. } => Self::Numerical(e.to_string()),
            AnalysisError::Config(_) | AnalysisError::SelectionSize { .. } => Self::Config(e.to_string()),
            AnalysisError::Model(m) => m.into(),
            AnalysisError::Data(d) => d.into(),
            other => Self::Data(other.to_string()),
        }
    }
}

impl From<CompressionError> for CliError {
    fn from(e: CompressionError) -> Self {
        match e {
            CompressionError::Model(m) => m.into(),
            CompressionError::NoCalibration => Self::Data(e.to_string()),
            other => Self::Config(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Delta(_) | EvalError::BinEdges => Self::Config(e.to_string()),
            other => Self::Data(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Data(e.to_string())
    }
}
