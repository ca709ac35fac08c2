use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use ttnml::analysis::{correlations, entropy_report, quips};
use ttnml::compression::{
    chi_sweep, chi_sweep_table, truncate, tune_for_latency, LatencyMeter, TruncationPlan, TruncationTarget,
    WallClockProbe,
};
use ttnml::data::{load_csv, save_csv, synth_generate, Dataset, JET_FEATURES, LABEL_NAMES};
use ttnml::evaluation::{evaluate, muon_tag, optimize_threshold, roc_auc, EvalExtras, TaggingPower};
use ttnml::training::LabeledSample;
use ttnml::ttn::io::{load_model, save_model};
use ttnml::ttn::{Decision, EncodedSample};
use ttnml::Model;

use crate::config::PipelineConfig;
use crate::pipeline::{reduce_and_retrain, Prepared, Rows};
use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "ttnml", version, about = "Tree tensor network classifiers for jet charge tagging")]
pub struct Cli {
    /// Pipeline configuration (TOML). Unknown keys are rejected.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the split, initialization and generator seeds.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for sample-parallel sections.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Main artifact of the command (dataset, model or predictions).
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    /// More log output; repeat for debug.
    #[arg(long, short, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic jet dataset.
    Synth,
    /// Train a model and save it.
    Train {
        #[arg(long)]
        data: PathBuf,
    },
    /// Per-event confidences and decisions as CSV.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = Rows::All)]
        rows: Rows,
        /// Abstention band; defaults to `eval.delta` or 0.
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Entropies, correlations and feature ranking.
    Analyze {
        #[arg(long)]
        model: PathBuf,
        /// Dataset the model was trained on; enables `--retrain`.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Retrain on the selected features and save the reduced model here.
        #[arg(long, requires = "data")]
        retrain: Option<PathBuf>,
    },
    /// Truncate bond dimensions.
    Compress {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, conflicts_with = "budget_us")]
        chi: Option<usize>,
        /// Mean single-threaded latency target in microseconds.
        #[arg(long)]
        budget_us: Option<f64>,
        /// Test rows of this dataset give accuracies and latencies.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Single-threaded prediction latency.
    Bench {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Tagging power, AUC and breakdowns from a predictions file.
    Eval {
        #[arg(long)]
        predictions: PathBuf,
        /// Predictions on training or validation rows used to pick the band.
        #[arg(long)]
        tune: Option<PathBuf>,
        #[arg(long)]
        roc: Option<PathBuf>,
        #[arg(long)]
        histogram: Option<PathBuf>,
    },
}

/// Resolves the configuration, runs one command and returns its report.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    let mut config = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config = config.with_seed(seed);
    }
    config.validate()?;
    log::info!("resolved configuration:\n{}", config.to_toml());
    let out = cli.output.as_deref();
    match &cli.command {
        Command::Synth => synth(&config, out),
        Command::Train { data } => train(&config, data, out),
        Command::Predict {
            model,
            data,
            rows,
            delta,
        } => predict(&config, model, data, *rows, *delta, out),
        Command::Analyze { model, data, retrain } => analyze(&config, model, data.as_deref(), retrain.as_deref()),
        Command::Compress {
            model,
            chi,
            budget_us,
            data,
        } => compress(&config, model, *chi, *budget_us, data.as_deref(), out),
        Command::Bench { model, data } => bench(&config, model, data),
        Command::Eval {
            predictions,
            tune,
            roc,
            histogram,
        } => eval(&config, predictions, tune.as_deref(), roc.as_deref(), histogram.as_deref()),
    }
}

fn required<'a>(out: Option<&'a Path>, what: &str) -> Result<&'a Path, CliError> {
    out.ok_or_else(|| CliError::Config(format!("{what} needs --output")))
}

fn load_data(config: &PipelineConfig, path: &Path) -> Result<Dataset, CliError> {
    Ok(load_csv(path, config.data.schema.into())?)
}

fn load(path: &Path) -> Result<Model, CliError> {
    Ok(load_model(path)?)
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

fn synth(config: &PipelineConfig, out: Option<&Path>) -> Result<String, CliError> {
    let path = required(out, "synth")?;
    let ds = synth_generate(&config.synth)?;
    save_csv(&ds.data, path)?;
    let counts = ds.data.class_counts();
    let mut s = format!("events\t{}\n", ds.data.n_rows());
    for (name, c) in LABEL_NAMES.iter().zip(&counts) {
        let _ = writeln!(s, "events_{name}\t{c}");
    }
    s.push_str("\nfeature\tinformative\n");
    for (name, inf) in JET_FEATURES.iter().zip(&ds.informative) {
        let _ = writeln!(s, "{name}\t{inf}");
    }
    Ok(s)
}

fn bond_line(model: &Model) -> String {
    model.bond_dims().iter().map(ToString::to_string).collect::<Vec<_>>().join(" ")
}

fn train(config: &PipelineConfig, data: &Path, out: Option<&Path>) -> Result<String, CliError> {
    let prepared = Prepared::new(load_data(config, data)?, &config.split)?;
    let (model, report) = prepared.fit(&config.train)?;
    if let Some(p) = out {
        save_model(&model, p)?;
    }
    let mut s = report.to_tsv();
    let _ = writeln!(s, "\nbest_sweep\t{}\nstopped_early\t{}", report.best_sweep, report.stopped_early);
    for (name, rows) in [("train", Rows::Train), ("validation", Rows::Validation), ("test", Rows::Test)] {
        let _ = writeln!(s, "{name}_accuracy\t{:.6}", prepared.accuracy(&model, rows)?);
    }
    let _ = writeln!(s, "bond_dims\t{}", bond_line(&model));
    Ok(s)
}

/// Encodes the chosen rows for an already trained model.
fn model_samples(
    config: &PipelineConfig,
    model: &Model,
    data: Dataset,
    rows: Rows,
) -> Result<(Dataset, Vec<usize>, Vec<LabeledSample<f64>>), CliError> {
    let idx = match rows {
        Rows::All => (0..data.n_rows()).collect(),
        _ => Prepared::new(data.clone(), &config.split)?.rows(rows),
    };
    let selected = data.select_rows(&idx);
    let samples = selected.to_samples(model.feature_spec(), model.topology())?;
    Ok((selected, idx, samples))
}

fn decision_name(d: Decision) -> String {
    match d {
        Decision::Class(c) => LABEL_NAMES.get(c).map_or_else(|| format!("class{c}"), |n| (*n).to_string()),
        Decision::Abstain => "abstain".into(),
    }
}

fn predict(
    config: &PipelineConfig,
    model_path: &Path,
    data: &Path,
    rows: Rows,
    delta: Option<f64>,
    out: Option<&Path>,
) -> Result<String, CliError> {
    let model = load(model_path)?;
    let delta = delta.or(config.eval.delta).unwrap_or(0.0);
    if !(0.0..1.0).contains(&delta) {
        return Err(CliError::Config(format!("delta {delta} outside [0, 1)")));
    }
    let (selected, idx, samples) = model_samples(config, &model, load_data(config, data)?, rows)?;
    let csv = predictions_csv(&model, &selected, &idx, &samples, delta)?;
    match out {
        Some(p) => {
            write_file(p, &csv)?;
            Ok(format!("predictions\t{}\ndelta\t{delta}\n", idx.len()))
        }
        None => Ok(csv),
    }
}

/// Columns `row label p_<class>.. decision`, then `mu_q` when the model
/// reads it, then the covariates of the input file.
pub fn predictions_csv(
    model: &Model,
    data: &Dataset,
    rows: &[usize],
    samples: &[LabeledSample<f64>],
    delta: f64,
) -> Result<String, CliError> {
    let nc = model.n_classes();
    let class_name = |c: usize| LABEL_NAMES.get(c).map_or_else(|| format!("class{c}"), |n| (*n).to_string());
    let mu = data.feature_index("mu_q");
    let mut s = String::from("row,label");
    for c in 0..nc {
        let _ = write!(s, ",p_{}", class_name(c));
    }
    s.push_str(",decision");
    if mu.is_some() {
        s.push_str(",mu_q");
    }
    for name in data.covariate_names() {
        let _ = write!(s, ",{name}");
    }
    s.push('\n');
    let mut ws = model.workspace();
    for (i, ls) in samples.iter().enumerate() {
        let r = model.classify_with(&ls.sample, delta, &mut ws)?;
        let _ = write!(s, "{},{}", rows[i], ls.label);
        for p in &r.confidences {
            let _ = write!(s, ",{p}");
        }
        let _ = write!(s, ",{}", decision_name(r.decision));
        if let Some(j) = mu {
            let _ = write!(s, ",{}", data.row(i)[j]);
        }
        for v in data.covariate_row(i) {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    Ok(s)
}

fn analyze(
    config: &PipelineConfig,
    model_path: &Path,
    data: Option<&Path>,
    retrain: Option<&Path>,
) -> Result<String, CliError> {
    let model = load(model_path)?;
    let entropy = entropy_report(&model)?;
    let mut s = String::from("# feature entropies\n");
    s.push_str(&entropy.feature_table());
    s.push_str("\n# edge entropies\n");
    s.push_str(&entropy.edge_table());
    for c in correlations(&model)? {
        s.push_str("\n# correlations\n");
        s.push_str(&c.to_table());
    }
    s.push_str("\n# ranking\n");
    let ranking = quips(&model, &config.quips)?;
    s.push_str(&ranking.to_table());
    if let (Some(data), Some(out)) = (data, retrain) {
        let mut prepared = Prepared::new(load_data(config, data)?, &config.split)?;
        prepared.spec = model.feature_spec().clone();
        let reduced = reduce_and_retrain(&prepared, &model, &config.quips, &config.train)?;
        save_model(&reduced.model, out)?;
        let full = prepared.accuracy(&model, Rows::Test)?;
        let red = reduced.prepared.accuracy(&reduced.model, Rows::Test)?;
        s.push_str("\n# retrained on the selected features\n");
        s.push_str(&reduced.report.to_tsv());
        let _ = writeln!(
            s,
            "\nselected\t{}\nfull_test_accuracy\t{full:.6}\nreduced_test_accuracy\t{red:.6}\naccuracy_loss_points\t{:.4}",
            reduced.ranking.selected_names().join(" "),
            100.0 * (full - red)
        );
    }
    Ok(s)
}

fn probe<'a>(config: &PipelineConfig, samples: &'a [EncodedSample<f64>]) -> WallClockProbe<'a, f64> {
    WallClockProbe {
        samples,
        n_predictions: config.bench.n_predictions,
    }
}

fn compress(
    config: &PipelineConfig,
    model_path: &Path,
    chi: Option<usize>,
    budget_us: Option<f64>,
    data: Option<&Path>,
    out: Option<&Path>,
) -> Result<String, CliError> {
    let model = load(model_path)?;
    let plan = TruncationPlan {
        target: match (chi, budget_us) {
            (Some(c), _) => TruncationTarget::Uniform(c),
            (None, Some(b)) => TruncationTarget::LatencyBudget(b),
            (None, None) => config.compress.target.clone(),
        },
        cutoff: config.compress.cutoff,
    };
    plan.validate()?;
    let test = match data {
        Some(d) => Some(model_samples(config, &model, load_data(config, d)?, Rows::Test)?.2),
        None => None,
    };
    let encoded: Vec<EncodedSample<f64>> = test.iter().flatten().map(|l| l.sample.clone()).collect();
    let mut meter = probe(config, &encoded);
    let (small, report) = match plan.target {
        TruncationTarget::LatencyBudget(b) => tune_for_latency(&model, b, &mut meter)?,
        _ => {
            let (m, mut rep) = truncate(&model, &plan)?;
            if test.is_some() {
                rep.latency_before = Some(meter.measure(&model)?);
                rep.latency_after = Some(meter.measure(&m)?);
            }
            (m, rep)
        }
    };
    if let Some(p) = out {
        save_model(&small, p)?;
    }
    let mut s = String::from("# truncation\n");
    if let Some(t) = &test {
        let _ = writeln!(
            s,
            "accuracy_before\t{:.6}\naccuracy_after\t{:.6}",
            ttnml::training::accuracy(&model, t),
            ttnml::training::accuracy(&small, t)
        );
    }
    let _ = writeln!(s, "bond_dims_after\t{}", bond_line(&small));
    s.push_str(&report.to_table());
    if let Some(t) = &test {
        s.push_str("\n# bond dimension trade-off\n");
        s.push_str(&chi_sweep_table(&chi_sweep(&model, &config.compress.table_chis, t, &mut meter)?));
    }
    Ok(s)
}

fn bench(config: &PipelineConfig, model_path: &Path, data: &Path) -> Result<String, CliError> {
    let model = load(model_path)?;
    let (_, _, samples) = model_samples(config, &model, load_data(config, data)?, Rows::All)?;
    let encoded: Vec<EncodedSample<f64>> = samples.into_iter().map(|l| l.sample).collect();
    let lat = probe(config, &encoded).measure(&model)?;
    Ok(format!(
        "bond_dims\t{}\npredictions\t{}\nwall-clock mean_us\t{:.3}\nwall-clock p50_us\t{:.3}\nwall-clock p99_us\t{:.3}\n",
        bond_line(&model),
        lat.n_predictions,
        lat.mean_us,
        lat.p50_us,
        lat.p99_us
    ))
}

/// The columns of a predictions file that evaluation needs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PredictionTable {
    pub truths: Vec<usize>,
    pub p_b: Vec<f64>,
    pub muon_charge: Option<Vec<f64>>,
    pub columns: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl PredictionTable {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let err = |e: csv::Error| CliError::Data(format!("{}: {e}", path.display()));
        let mut rdr = csv::Reader::from_path(path).map_err(err)?;
        let header: Vec<String> = rdr.headers().map_err(err)?.iter().map(str::to_string).collect();
        let col = |name: &str| {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| CliError::Data(format!("{}: missing column '{name}'", path.display())))
        };
        let (label, pb) = (col("label")?, col("p_b")?);
        let mu = col("mu_q").ok();
        let mut t = Self {
            columns: header.clone(),
            muon_charge: mu.map(|_| Vec::new()),
            ..Self::default()
        };
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(err)?;
            let num = |c: usize| -> Result<f64, CliError> {
                let v = rec.get(c).unwrap_or("");
                v.trim()
                    .parse()
                    .map_err(|_| CliError::Data(format!("{} line {}: bad number '{v}'", path.display(), k + 2)))
            };
            let l = num(label)?;
            if !(l == 0.0 || l == 1.0) {
                return Err(CliError::Data(format!("{} line {}: label {l} is not binary", path.display(), k + 2)));
            }
            t.truths.push(l as usize);
            t.p_b.push(num(pb)?);
            if let (Some(c), Some(v)) = (mu, t.muon_charge.as_mut()) {
                v.push(num(c)?);
            }
            t.values.push((0..header.len()).map(|c| num(c).unwrap_or(f64::NAN)).collect());
        }
        Ok(t)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let c = self.columns.iter().position(|h| h == name)?;
        Some(self.values.iter().map(|r| r[c]).collect())
    }
}

fn power_line(name: &str, p: &TaggingPower) -> String {
    format!(
        "{name}\tefficiency {:.6}\taccuracy {}\ttagging_power {:.6} +- {:.6}\n",
        p.efficiency,
        p.accuracy.map_or_else(|| "undefined".to_string(), |a| format!("{a:.6}")),
        p.tagging_power,
        p.tagging_power_err
    )
}

fn eval(
    config: &PipelineConfig,
    predictions: &Path,
    tune: Option<&Path>,
    roc: Option<&Path>,
    histogram: Option<&Path>,
) -> Result<String, CliError> {
    let table = PredictionTable::read(predictions)?;
    let mut s = String::new();
    let delta = match (config.eval.delta, tune) {
        (Some(d), _) => d,
        (None, Some(t)) => {
            let tuning = PredictionTable::read(t)?;
            let choice = optimize_threshold(&tuning.p_b, &tuning.truths)?;
            let _ = writeln!(
                s,
                "tuned_delta\t{:.2}\ttuned_cut\t{:.3}\ttuning_tagging_power\t{:.6}",
                choice.delta, choice.cut, choice.tagging_power
            );
            choice.delta
        }
        (None, None) => 0.0,
    };
    let covariate = match &config.eval.covariate {
        Some(name) => {
            if config.eval.bin_edges.is_empty() {
                return Err(CliError::Config("eval.covariate needs eval.bin_edges".into()));
            }
            Some(
                table
                    .column(name)
                    .ok_or_else(|| CliError::Data(format!("predictions have no column '{name}'")))?,
            )
        }
        None => None,
    };
    let present: Vec<bool> = table.muon_charge.iter().flatten().map(|&q| q != 0.0).collect();
    let extras = EvalExtras {
        covariate: covariate.as_deref().map(|c| (c, config.eval.bin_edges.as_slice())),
        muon_present: &present,
    };
    let report = evaluate(&table.p_b, &table.truths, delta, &extras)?;
    s.push_str(&report.to_table());
    if let Some(q) = &table.muon_charge {
        let baseline = TaggingPower::from_decisions(&muon_tag(q, config.eval.muon_convention), &table.truths)?;
        s.push('\n');
        s.push_str(&power_line("muon_baseline", &baseline));
    }
    if let Some(p) = roc {
        write_file(p, &roc_auc(&table.p_b, &table.truths)?.to_table())?;
    }
    if let Some(p) = histogram {
        write_file(p, &report.histogram.to_table())?;
    }
    Ok(s)
}
