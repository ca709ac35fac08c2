//! Shared steps: split, fit the encoding on training rows, build, fit and
//! reduce models.

use ttnml::analysis::{quips, restrict_dataset, QuipsConfig, QuipsRanking};
use ttnml::data::{fit_feature_spec, is_charge_column, split, Dataset, Split, SplitSpec};
use ttnml::training::{accuracy, init_model, train, LabeledSample, TrainConfig, TrainReport};
use ttnml::ttn::{FeatureSpec, TreeTopology};
use ttnml::Model;

use crate::CliError;

/// A dataset with its split and the encoding fitted on the training rows.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub data: Dataset,
    pub split: Split,
    pub spec: FeatureSpec,
    pub topology: TreeTopology,
}

/// Which rows a command works on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Rows {
    #[default]
    All,
    Train,
    Validation,
    Test,
}

impl Prepared {
    pub fn new(data: Dataset, split_spec: &SplitSpec) -> Result<Self, CliError> {
        let split = split(&data, split_spec)?;
        let spec = fit_feature_spec(&data, &split.train, is_charge_column)?;
        let topology = TreeTopology::for_features(data.n_features())?;
        Ok(Self {
            data,
            split,
            spec,
            topology,
        })
    }

    /// Same rows and split with a different encoding, e.g. after feature
    /// selection.
    pub fn with_features(&self, data: Dataset, spec: FeatureSpec) -> Result<Self, CliError> {
        let topology = TreeTopology::for_features(data.n_features())?;
        Ok(Self {
            data,
            split: self.split.clone(),
            spec,
            topology,
        })
    }

    pub fn rows(&self, which: Rows) -> Vec<usize> {
        match which {
            Rows::All => (0..self.data.n_rows()).collect(),
            Rows::Train => self.split.train.clone(),
            Rows::Validation => self.split.validation.clone(),
            Rows::Test => self.split.test.clone(),
        }
    }

    pub fn samples(&self, which: Rows) -> Result<Vec<LabeledSample<f64>>, CliError> {
        Ok(self.data.select_rows(&self.rows(which)).to_samples(&self.spec, &self.topology)?)
    }

    /// Initializes from `config.seed` and trains with validation-based
    /// model selection.
    pub fn fit(&self, config: &TrainConfig) -> Result<(Model, TrainReport), CliError> {
        let model = init_model(
            self.topology.clone(),
            self.spec.clone(),
            self.data.n_classes().max(2),
            config.chi_max,
            config.seed,
            config.init,
        )?;
        let train_set = self.samples(Rows::Train)?;
        let validation = self.samples(Rows::Validation)?;
        Ok(train(&model, &train_set, &validation, config)?)
    }

    pub fn accuracy(&self, model: &Model, which: Rows) -> Result<f64, CliError> {
        Ok(accuracy(model, &self.samples(which)?))
    }
}

/// Ranks the features of `model` and retrains on the selected ones.
pub struct Reduced {
    pub ranking: QuipsRanking,
    pub prepared: Prepared,
    pub model: Model,
    pub report: TrainReport,
}

pub fn reduce_and_retrain(
    prepared: &Prepared,
    model: &Model,
    quips_config: &QuipsConfig,
    train_config: &TrainConfig,
) -> Result<Reduced, CliError> {
    let ranking = quips(model, quips_config)?;
    let (data, spec) = restrict_dataset(&prepared.data, &ranking)?;
    let reduced = prepared.with_features(data, spec)?;
    let (model, report) = reduced.fit(train_config)?;
    Ok(Reduced {
        ranking,
        prepared: reduced,
        model,
        report,
    })
}
