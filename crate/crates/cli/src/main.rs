//! `sleepstage` command-line tool.
//!
//! Exit status: 0 success, 2 usage/configuration error, 3 data or schema
//! error, 4 numeric or training failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sleepstage::classifiers::{train_model, Classifier, Dataset};
use sleepstage::dataset::{self, class_distribution, WindowedSample};
use sleepstage::io::{self, EpochTable, SignalTable, SplitManifest};
use sleepstage::pipeline::{self, balance_name, PipelineConfig};
use sleepstage::signal_features::{extract_features_with, segment_recording};
use sleepstage::synthetic::{generate_features, generate_raw, SyntheticSpec};
use sleepstage::{Error, FeatureRow, Result};

#[derive(Parser)]
#[command(
    name = "sleepstage",
    version,
    about = "Vigilance-state classification from EEG/EMG epochs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Raw signals to per-epoch feature CSV
    Extract(ExtractArgs),
    /// Feature CSV to windowed-sample CSV
    Window(WindowArgs),
    /// Replicate minority classes of a windowed CSV
    Balance(BalanceArgs),
    /// Write a seeded train/validation/test split manifest
    Split(SplitArgs),
    /// Fit a classifier on a windowed CSV
    Train(TrainArgs),
    /// Score a model on labeled windowed samples
    Evaluate(EvaluateArgs),
    /// Class probabilities for windowed samples
    Predict(PredictArgs),
    /// Generate synthetic feature rows or raw signals
    Synth(SynthArgs),
    /// Full pipeline: window, balance, split, train, evaluate, write reports
    Report(ReportArgs),
}

/// Flags that mirror pipeline configuration keys. Precedence: defaults, then
/// `--config`, then these flags, then `--set`.
#[derive(Args, Default)]
struct ConfigArgs {
    /// key=value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// decision-tree | random-forest | naive-bayes | logistic-regression | mlp
    #[arg(long)]
    classifier: Option<String>,
    /// paper | leak-free | off
    #[arg(long)]
    balance: Option<String>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    test_fraction: Option<f64>,
    #[arg(long)]
    validation_fraction: Option<f64>,
    /// Training epochs for the MLP and logistic regression
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    n_trees: Option<usize>,
    /// Any configuration key, e.g. `--set max_depth=none`; repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
                PipelineConfig::from_key_values(&text)?
            }
            None => PipelineConfig::default(),
        };
        let flags: [(&str, Option<String>); 8] = [
            ("seed", self.seed.map(|v| v.to_string())),
            ("classifier", self.classifier.clone()),
            ("balance", self.balance.clone()),
            ("window", self.window.map(|v| v.to_string())),
            ("test_fraction", self.test_fraction.map(|v| v.to_string())),
            (
                "validation_fraction",
                self.validation_fraction.map(|v| v.to_string()),
            ),
            ("epochs", self.epochs.map(|v| v.to_string())),
            ("n_trees", self.n_trees.map(|v| v.to_string())),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
        }
        for kv in &self.overrides {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct ExtractArgs {
    /// `t_index,eeg,emg` CSV
    #[arg(long)]
    signals: PathBuf,
    /// `epoch_index,activity[,label]` CSV
    #[arg(long)]
    epochs: PathBuf,
    #[arg(long, default_value_t = 500.0)]
    sample_rate_hz: f64,
    /// rectified | rms
    #[arg(long, default_value = "rectified")]
    emg_summary: String,
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Args)]
struct WindowArgs {
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, default_value_t = 5)]
    width: usize,
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Args)]
struct BalanceArgs {
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Args)]
struct SplitArgs {
    /// Windowed CSV the indices refer to
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
    #[arg(long, default_value_t = 0.0)]
    validation_fraction: f64,
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Windowed CSV
    #[arg(long, short)]
    input: PathBuf,
    /// Split manifest; without it the configured balance mode and split are applied
    #[arg(long)]
    split: Option<PathBuf>,
    #[arg(long)]
    model: PathBuf,
    /// Per-epoch history CSV (MLP only)
    #[arg(long)]
    history: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Labeled windowed CSV
    #[arg(long, short)]
    input: PathBuf,
    /// Evaluate on the test indices of this manifest instead of every row
    #[arg(long)]
    split: Option<PathBuf>,
    /// Directory for metrics.txt, metrics.csv and confusion_matrix.csv
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Windowed CSV; the label column may be empty
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 3000)]
    per_class: usize,
    #[arg(long, default_value_t = 0.8)]
    separability: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Write raw signals (`signals.csv`, `epochs.csv` in the output directory)
    /// instead of a feature CSV
    #[arg(long)]
    raw: bool,
    #[arg(long, default_value_t = 500.0)]
    sample_rate_hz: f64,
    /// Feature CSV path, or a directory with `--raw`
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Feature CSV; without it synthetic data is generated
    #[arg(long, short)]
    input: Option<PathBuf>,
    /// Output directory for all artifacts
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

fn labeled_samples(path: &Path) -> Result<Vec<WindowedSample>> {
    io::read_windowed_csv(path)?.into_samples()
}

fn check_manifest(manifest: &SplitManifest, input: &Path, n: usize) -> Result<()> {
    let digest = io::digest_file(input)?;
    if manifest.input_digest != digest {
        return Err(Error::Schema(format!(
            "split manifest was made for {} but {} has {digest}",
            manifest.input_digest,
            input.display()
        )));
    }
    if manifest.n_samples != n {
        return Err(Error::Schema(format!(
            "split manifest covers {} samples, input has {n}",
            manifest.n_samples
        )));
    }
    Ok(())
}

fn extract(a: &ExtractArgs) -> Result<()> {
    let signals = io::read_signal_csv_from(fs::File::open(&a.signals)?)?;
    let epochs = io::read_epoch_csv_from(fs::File::open(&a.epochs)?)?;
    let summary = a.emg_summary.parse()?;
    let raw = segment_recording(
        &signals.eeg,
        &signals.emg,
        &epochs.activity,
        a.sample_rate_hz,
    )?;
    let rows = raw
        .iter()
        .zip(&epochs.labels)
        .map(|(e, l)| {
            let mut row = extract_features_with(e, summary)?;
            row.label = *l;
            Ok(row)
        })
        .collect::<Result<Vec<FeatureRow>>>()?;
    io::write_feature_csv(&rows, &a.output)?;
    eprintln!("{} epochs written to {}", rows.len(), a.output.display());
    Ok(())
}

fn window(a: &WindowArgs) -> Result<()> {
    let rows = io::read_feature_csv(&a.input)?;
    let samples = dataset::window(&rows, a.width)?;
    io::write_windowed_csv(&samples, &a.output)?;
    eprintln!("{} rows -> {} windowed samples", rows.len(), samples.len());
    Ok(())
}

fn balance(a: &BalanceArgs) -> Result<()> {
    let samples = labeled_samples(&a.input)?;
    let balanced = dataset::balance(&samples)?;
    println!(
        "before\n{}\nafter\n{}",
        class_distribution(&samples),
        class_distribution(&balanced)
    );
    io::write_windowed_csv(&balanced, &a.output)
}

fn split(a: &SplitArgs) -> Result<()> {
    let table = io::read_windowed_csv(&a.input)?;
    let n = table.features.len();
    let split = dataset::split(n, a.seed, a.test_fraction, a.validation_fraction)?;
    println!(
        "train {}, validation {}, test {}",
        split.train.len(),
        split.validation.len(),
        split.test.len()
    );
    SplitManifest {
        split,
        n_samples: n,
        input_digest: io::digest_file(&a.input)?,
    }
    .write(&a.output)
}

fn train(a: &TrainArgs) -> Result<()> {
    let cfg = a.config.resolve()?;
    cfg.validate()?;
    let samples = labeled_samples(&a.input)?;
    let (train, validation) = match &a.split {
        Some(path) => {
            let manifest = SplitManifest::read(path)?;
            check_manifest(&manifest, &a.input, samples.len())?;
            (
                dataset::select(&samples, &manifest.split.train),
                dataset::select(&samples, &manifest.split.validation),
            )
        }
        None => {
            let parts = pipeline::partition(samples, &cfg)?;
            (parts.train, parts.validation)
        }
    };
    let train = Dataset::from_samples(&train)?;
    let validation = if cfg.classifier.uses_validation() {
        Some(Dataset::from_samples(&validation)?)
    } else {
        None
    };
    let (model, history) = train_model(
        cfg.classifier,
        &cfg.params,
        &train,
        validation.as_ref(),
        cfg.seed,
    )?;
    io::save_model(&model, &a.model)?;
    if let Some(path) = &a.history {
        fs::write(path, io::render_history_csv(&history))?;
    }
    eprintln!(
        "{} trained on {} samples (seed {}, balance {}) -> {}",
        cfg.classifier,
        train.len(),
        cfg.seed,
        balance_name(cfg.balance),
        a.model.display()
    );
    Ok(())
}

fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let model = io::load_model(&a.model)?;
    let mut samples = labeled_samples(&a.input)?;
    if let Some(path) = &a.split {
        let manifest = SplitManifest::read(path)?;
        check_manifest(&manifest, &a.input, samples.len())?;
        samples = dataset::select(&samples, &manifest.split.test);
    }
    let (report, _) = pipeline::evaluate(&model, &samples)?;
    let text = io::render_metrics_text(&format!("classifier: {}", model.kind()), &report);
    print!("{text}");
    if let Some(dir) = &a.output {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("metrics.txt"), &text)?;
        fs::write(dir.join("metrics.csv"), io::render_metrics_csv(&report))?;
        fs::write(
            dir.join("confusion_matrix.csv"),
            io::render_confusion_csv(&report),
        )?;
    }
    Ok(())
}

fn predict(a: &PredictArgs) -> Result<()> {
    let model = io::load_model(&a.model)?;
    let table = io::read_windowed_csv(&a.input)?;
    let probabilities = table
        .features
        .iter()
        .map(|f| model.predict_proba(f))
        .collect::<Result<Vec<_>>>()?;
    let truth = table
        .labels
        .iter()
        .any(Option::is_some)
        .then_some(table.labels.as_slice());
    fs::write(&a.output, io::render_predictions_csv(&probabilities, truth))?;
    eprintln!(
        "{} predictions written to {}",
        probabilities.len(),
        a.output.display()
    );
    Ok(())
}

/// Generator settings echoed next to its output.
fn spec_json(spec: &SyntheticSpec, sample_rate_hz: Option<f64>) -> Result<String> {
    let mut value = serde_json::to_value(spec)?;
    if let Some(rate) = sample_rate_hz {
        value["sample_rate_hz"] = rate.into();
    }
    Ok(serde_json::to_string_pretty(&value)?)
}

fn synth(a: &SynthArgs) -> Result<()> {
    let spec = SyntheticSpec::new(a.per_class, a.separability, a.seed);
    if a.raw {
        let epochs = generate_raw(&spec, a.sample_rate_hz)?;
        let mut signals = SignalTable::default();
        let mut table = EpochTable::default();
        for (epoch, label) in &epochs {
            signals.eeg.extend_from_slice(&epoch.eeg);
            signals.emg.extend_from_slice(&epoch.emg);
            table.activity.push(epoch.activity);
            table.labels.push(Some(*label));
        }
        fs::create_dir_all(&a.output)?;
        io::write_signal_csv_to(&signals, fs::File::create(a.output.join("signals.csv"))?)?;
        io::write_epoch_csv_to(&table, fs::File::create(a.output.join("epochs.csv"))?)?;
        fs::write(
            a.output.join("synth_spec.json"),
            spec_json(&spec, Some(a.sample_rate_hz))?,
        )?;
        eprintln!(
            "{} raw epochs written to {}",
            epochs.len(),
            a.output.display()
        );
    } else {
        let rows: Vec<FeatureRow> = generate_features(&spec)?
            .into_iter()
            .map(FeatureRow::from)
            .collect();
        io::write_feature_csv(&rows, &a.output)?;
        let mut sidecar = a.output.clone().into_os_string();
        sidecar.push(".spec.json");
        fs::write(&sidecar, spec_json(&spec, None)?)?;
        eprintln!(
            "{} feature rows written to {}",
            rows.len(),
            a.output.display()
        );
    }
    Ok(())
}

fn report(a: &ReportArgs) -> Result<()> {
    let mut cfg = a.config.resolve()?;
    if let Some(input) = &a.input {
        cfg.set("input", &input.to_string_lossy())?;
    }
    if let Some(output) = &a.output {
        cfg.output_dir = output.clone();
    }
    let outcome = pipeline::run_pipeline(&cfg)?;
    print!(
        "{}",
        io::render_metrics_text(
            &format!("classifier: {}  seed: {}", cfg.classifier, cfg.seed),
            &outcome.report
        )
    );
    for path in &outcome.artifacts {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Extract(a) => extract(a),
        Command::Window(a) => window(a),
        Command::Balance(a) => balance(a),
        Command::Split(a) => split(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Predict(a) => predict(a),
        Command::Synth(a) => synth(a),
        Command::Report(a) => report(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
