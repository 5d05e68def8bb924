//! End-to-end run: load or generate epochs, window, balance, split, train,
//! evaluate, and write every artifact to an output directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::classifiers::{
    train_model, Classifier, ClassifierKind, ClassifierParams, Dataset, TrainedModel,
    TrainingHistoryRecord,
};
use crate::dataset::{self, DataSplit, WindowedSample};
use crate::error::{Error, Result};
use crate::io::{self, SplitManifest};
use crate::metrics::{self, MetricsReport};
use crate::signal_features::{
    extract_features_with, segment_recording, EmgSummary, FeatureRow, DEFAULT_SAMPLE_RATE_HZ,
};
use crate::stage::Stage;
use crate::synthetic::{self, SyntheticSpec};
use crate::DEFAULT_WINDOW;

/// Where balancing happens relative to the split.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BalanceMode {
    /// Balance every sample, then split. Replicated minority samples can end
    /// up on both sides of the split.
    #[default]
    #[serde(rename = "paper")]
    BeforeSplit,
    /// Split first, then balance the training partition only.
    LeakFree,
    Off,
}

impl FromStr for BalanceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(BalanceMode::BeforeSplit),
            "leak-free" => Ok(BalanceMode::LeakFree),
            "off" => Ok(BalanceMode::Off),
            _ => Err(Error::Config(format!(
                "unknown balance mode {s:?} (paper|leak-free|off)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InputSource {
    /// Per-epoch feature CSV.
    Features(PathBuf),
    /// Continuous `t_index,eeg,emg` CSV plus an `epoch_index,activity,label`
    /// sidecar.
    Raw { signals: PathBuf, epochs: PathBuf },
    /// Feature rows from the class-conditional generator, seeded by the
    /// pipeline seed.
    Synthetic {
        epochs_per_class: usize,
        separability: f64,
    },
}

impl Default for InputSource {
    fn default() -> Self {
        InputSource::Synthetic {
            epochs_per_class: 3000,
            separability: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub input: InputSource,
    pub output_dir: PathBuf,
    /// Defaults to `<output_dir>/model.json`.
    pub model_path: Option<PathBuf>,
    pub seed: u64,
    pub window_width: usize,
    pub test_fraction: f64,
    /// Share of the non-test samples held out for validation. `None` means
    /// 0.2 for classifiers that use a validation set and 0 otherwise.
    pub validation_fraction: Option<f64>,
    pub balance: BalanceMode,
    pub classifier: ClassifierKind,
    pub params: ClassifierParams,
    pub sample_rate_hz: f64,
    pub emg_summary: EmgSummary,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            input: InputSource::default(),
            output_dir: PathBuf::from("out"),
            model_path: None,
            seed: 42,
            window_width: DEFAULT_WINDOW,
            test_fraction: 0.2,
            validation_fraction: None,
            balance: BalanceMode::BeforeSplit,
            classifier: ClassifierKind::RandomForest,
            params: ClassifierParams::default(),
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            emg_summary: EmgSummary::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
}

fn parse_optional<T: FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    match value {
        "none" | "" => Ok(None),
        v => parse(key, v).map(Some),
    }
}

/// Keys accepted by [`PipelineConfig::set`].
pub const CONFIG_KEYS: &[&str] = &[
    "input",
    "raw_signals",
    "raw_epochs",
    "synthetic_per_class",
    "separability",
    "output",
    "model",
    "seed",
    "window",
    "test_fraction",
    "validation_fraction",
    "balance",
    "classifier",
    "sample_rate_hz",
    "emg_summary",
    "max_depth",
    "min_samples_split",
    "n_trees",
    "features_per_split",
    "bootstrap",
    "learning_rate",
    "epochs",
    "l2",
    "logreg_mode",
    "hidden",
    "batch_size",
    "adam_learning_rate",
];

impl PipelineConfig {
    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let p = &mut self.params;
        match key {
            "input" => self.input = InputSource::Features(PathBuf::from(value)),
            "raw_signals" | "raw_epochs" => {
                let (mut signals, mut epochs) = match &self.input {
                    InputSource::Raw { signals, epochs } => (signals.clone(), epochs.clone()),
                    _ => (PathBuf::new(), PathBuf::new()),
                };
                if key == "raw_signals" {
                    signals = PathBuf::from(value);
                } else {
                    epochs = PathBuf::from(value);
                }
                self.input = InputSource::Raw { signals, epochs };
            }
            "synthetic_per_class" | "separability" => {
                let (mut per, mut sep) = match self.input {
                    InputSource::Synthetic {
                        epochs_per_class,
                        separability,
                    } => (epochs_per_class, separability),
                    _ => (3000, 0.8),
                };
                if key == "synthetic_per_class" {
                    per = parse(key, value)?;
                } else {
                    sep = parse(key, value)?;
                }
                self.input = InputSource::Synthetic {
                    epochs_per_class: per,
                    separability: sep,
                };
            }
            "output" => self.output_dir = PathBuf::from(value),
            "model" => self.model_path = Some(PathBuf::from(value)),
            "seed" => self.seed = parse(key, value)?,
            "window" => self.window_width = parse(key, value)?,
            "test_fraction" => self.test_fraction = parse(key, value)?,
            "validation_fraction" => self.validation_fraction = parse_optional(key, value)?,
            "balance" => self.balance = value.parse()?,
            "classifier" => self.classifier = value.parse()?,
            "sample_rate_hz" => self.sample_rate_hz = parse(key, value)?,
            "emg_summary" => self.emg_summary = value.parse()?,
            "max_depth" => {
                let d = parse_optional(key, value)?;
                p.tree.max_depth = d;
                p.forest.max_depth = d;
            }
            "min_samples_split" => {
                let m = parse(key, value)?;
                p.tree.min_samples_split = m;
                p.forest.min_samples_split = m;
            }
            "n_trees" => p.forest.n_trees = parse(key, value)?,
            "features_per_split" => p.forest.features_per_split = parse_optional(key, value)?,
            "bootstrap" => p.forest.bootstrap = parse(key, value)?,
            "learning_rate" => p.logreg.learning_rate = parse(key, value)?,
            "epochs" => {
                let e = parse(key, value)?;
                p.logreg.epochs = e;
                p.mlp.epochs = e;
            }
            "l2" => p.logreg.l2 = parse(key, value)?,
            "logreg_mode" => {
                p.logreg.mode = match value {
                    "softmax" => crate::classifiers::logreg::LogRegMode::Softmax,
                    "one-vs-rest" => crate::classifiers::logreg::LogRegMode::OneVsRest,
                    _ => {
                        return Err(Error::Config(format!(
                            "unknown logreg_mode {value:?} (softmax|one-vs-rest)"
                        )))
                    }
                }
            }
            "hidden" => p.mlp.hidden = parse(key, value)?,
            "batch_size" => p.mlp.batch_size = parse(key, value)?,
            "adam_learning_rate" => p.mlp.adam.learning_rate = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown configuration key {key:?}"))),
        }
        Ok(())
    }

    /// Defaults overridden by the `key=value` lines of `text`.
    pub fn from_key_values(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        for (k, v) in io::parse_key_values(text)? {
            cfg.set(&k, &v)?;
        }
        Ok(cfg)
    }

    pub fn resolved_validation_fraction(&self) -> f64 {
        self.validation_fraction
            .unwrap_or(if self.classifier.uses_validation() {
                0.2
            } else {
                0.0
            })
    }

    pub fn resolved_model_path(&self) -> PathBuf {
        self.model_path
            .clone()
            .unwrap_or_else(|| self.output_dir.join("model.json"))
    }

    pub fn validate(&self) -> Result<()> {
        let frac_ok = |f: f64| (0.0..1.0).contains(&f);
        if !frac_ok(self.test_fraction) {
            return Err(Error::Config(format!(
                "test_fraction {} outside [0, 1)",
                self.test_fraction
            )));
        }
        let vf = self.resolved_validation_fraction();
        if !frac_ok(vf) {
            return Err(Error::Config(format!(
                "validation_fraction {vf} outside [0, 1)"
            )));
        }
        if self.classifier.uses_validation() && vf == 0.0 {
            return Err(Error::Config(format!(
                "{} needs validation_fraction > 0",
                self.classifier
            )));
        }
        if self.window_width == 0 {
            return Err(Error::Config("window width must be at least 1".into()));
        }
        if let InputSource::Raw { signals, epochs } = &self.input {
            if signals.as_os_str().is_empty() || epochs.as_os_str().is_empty() {
                return Err(Error::Config(
                    "raw input needs both raw_signals and raw_epochs".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Labeled epochs plus a digest identifying their source.
pub fn load_rows(cfg: &PipelineConfig) -> Result<(Vec<FeatureRow>, String)> {
    match &cfg.input {
        InputSource::Features(path) => Ok((io::read_feature_csv(path)?, io::digest_file(path)?)),
        InputSource::Raw { signals, epochs } => {
            let sig = io::read_signal_csv_from(fs::File::open(signals)?)?;
            let ep = io::read_epoch_csv_from(fs::File::open(epochs)?)?;
            let raw = segment_recording(&sig.eeg, &sig.emg, &ep.activity, cfg.sample_rate_hz)?;
            let rows = raw
                .iter()
                .zip(&ep.labels)
                .map(|(epoch, label)| {
                    let mut row = extract_features_with(epoch, cfg.emg_summary)?;
                    row.label = *label;
                    Ok(row)
                })
                .collect::<Result<Vec<_>>>()?;
            let mut bytes = fs::read(signals)?;
            bytes.extend(fs::read(epochs)?);
            Ok((rows, io::digest_bytes(&bytes)))
        }
        InputSource::Synthetic {
            epochs_per_class,
            separability,
        } => {
            let spec = SyntheticSpec::new(*epochs_per_class, *separability, cfg.seed);
            let rows = synthetic::generate_features(&spec)?
                .into_iter()
                .map(FeatureRow::from)
                .collect();
            Ok((
                rows,
                io::digest_bytes(serde_json::to_string(&spec)?.as_bytes()),
            ))
        }
    }
}

/// Samples in each partition after balancing.
#[derive(Debug, Clone)]
pub struct Partitions {
    pub train: Vec<WindowedSample>,
    pub validation: Vec<WindowedSample>,
    pub test: Vec<WindowedSample>,
    /// Indices refer to the balanced set in before-split mode and to the windowed
    /// set otherwise.
    pub split: DataSplit,
    pub n_split_input: usize,
}

pub fn partition(samples: Vec<WindowedSample>, cfg: &PipelineConfig) -> Result<Partitions> {
    let vf = cfg.resolved_validation_fraction();
    let pool = match cfg.balance {
        BalanceMode::BeforeSplit => {
            dataset::balance(&samples).map_err(|e| e.in_stage("balance"))?
        }
        _ => samples,
    };
    let split = dataset::split(pool.len(), cfg.seed, cfg.test_fraction, vf)
        .map_err(|e| e.in_stage("split"))?;
    let mut train = dataset::select(&pool, &split.train);
    if cfg.balance == BalanceMode::LeakFree {
        train = dataset::balance(&train).map_err(|e| e.in_stage("balance"))?;
    }
    Ok(Partitions {
        validation: dataset::select(&pool, &split.validation),
        test: dataset::select(&pool, &split.test),
        train,
        n_split_input: pool.len(),
        split,
    })
}

/// Metrics plus per-sample probabilities for `model` on `samples`.
pub fn evaluate(
    model: &dyn Classifier,
    samples: &[WindowedSample],
) -> Result<(MetricsReport, Vec<[f64; 3]>)> {
    if samples.is_empty() {
        return Err(Error::invalid("evaluation set is empty"));
    }
    let probabilities = samples
        .iter()
        .map(|s| model.predict_proba(&s.features))
        .collect::<Result<Vec<_>>>()?;
    let truth: Vec<Stage> = samples.iter().map(|s| s.label).collect();
    let predicted: Vec<Stage> = probabilities.iter().map(Stage::argmax).collect();
    let cm = metrics::confusion_matrix(&truth, &predicted)?;
    let mut report = metrics::derive_metrics(&cm)?;
    match metrics::roc_auc_ovr(&truth, &probabilities) {
        Ok(auc) => {
            for s in auc.skipped() {
                report.warnings.push(format!(
                    "AUC for class {s} skipped: no positive or no negative samples"
                ));
            }
            report = report.with_auc(auc);
        }
        Err(e) => report.warnings.push(format!("AUC not computed: {e}")),
    }
    Ok((report, probabilities))
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub model: TrainedModel,
    pub report: MetricsReport,
    pub history: Vec<TrainingHistoryRecord>,
    pub test_probabilities: Vec<[f64; 3]>,
    pub test_labels: Vec<Stage>,
    pub manifest: SplitManifest,
    pub n_windowed: usize,
    pub artifacts: Vec<PathBuf>,
}

/// Runs every stage without touching the filesystem beyond reading input.
pub fn execute(cfg: &PipelineConfig) -> Result<PipelineOutcome> {
    cfg.validate()?;
    let (rows, digest) = load_rows(cfg).map_err(|e| e.in_stage("extract"))?;
    let windowed = dataset::window(&rows, cfg.window_width).map_err(|e| e.in_stage("window"))?;
    drop(rows);
    let n_windowed = windowed.len();
    let parts = partition(windowed, cfg)?;

    let train = Dataset::from_samples(&parts.train).map_err(|e| e.in_stage("train"))?;
    let validation = if cfg.classifier.uses_validation() {
        Some(Dataset::from_samples(&parts.validation).map_err(|e| e.in_stage("train"))?)
    } else {
        None
    };
    let (model, history) = train_model(
        cfg.classifier,
        &cfg.params,
        &train,
        validation.as_ref(),
        cfg.seed,
    )
    .map_err(|e| e.in_stage("train"))?;
    let (report, test_probabilities) =
        evaluate(&model, &parts.test).map_err(|e| e.in_stage("evaluate"))?;
    Ok(PipelineOutcome {
        model,
        report,
        history,
        test_probabilities,
        test_labels: parts.test.iter().map(|s| s.label).collect(),
        manifest: SplitManifest {
            split: parts.split,
            n_samples: parts.n_split_input,
            input_digest: digest,
        },
        n_windowed,
        artifacts: Vec::new(),
    })
}

fn write_artifact(
    dir: &Path,
    name: &str,
    contents: &str,
    written: &mut Vec<PathBuf>,
) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents)?;
    written.push(path);
    Ok(())
}

/// [`execute`], then writes `model.json`, `split_manifest.txt`,
/// `confusion_matrix.csv`, `metrics.txt`, `metrics.csv`, `predictions.csv`
/// and, for the MLP, `history.csv`.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutcome> {
    let mut outcome = execute(cfg)?;
    let write = || -> Result<Vec<PathBuf>> {
        let dir = &cfg.output_dir;
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let model_path = cfg.resolved_model_path();
        io::save_model(&outcome.model, &model_path)?;
        written.push(model_path);
        let mut manifest = outcome.manifest.render();
        manifest.push_str(&format!(
            "balance={}\nclassifier={}\n",
            balance_name(cfg.balance),
            cfg.classifier
        ));
        write_artifact(dir, "split_manifest.txt", &manifest, &mut written)?;
        write_artifact(
            dir,
            "confusion_matrix.csv",
            &io::render_confusion_csv(&outcome.report),
            &mut written,
        )?;
        let title = format!("classifier: {}  seed: {}", cfg.classifier, cfg.seed);
        write_artifact(
            dir,
            "metrics.txt",
            &io::render_metrics_text(&title, &outcome.report),
            &mut written,
        )?;
        write_artifact(
            dir,
            "metrics.csv",
            &io::render_metrics_csv(&outcome.report),
            &mut written,
        )?;
        let truth: Vec<Option<Stage>> = outcome.test_labels.iter().copied().map(Some).collect();
        write_artifact(
            dir,
            "predictions.csv",
            &io::render_predictions_csv(&outcome.test_probabilities, Some(&truth)),
            &mut written,
        )?;
        if cfg.classifier.uses_validation() {
            write_artifact(
                dir,
                "history.csv",
                &io::render_history_csv(&outcome.history),
                &mut written,
            )?;
        }
        Ok(written)
    };
    outcome.artifacts = write().map_err(|e| e.in_stage("write"))?;
    Ok(outcome)
}

pub fn balance_name(mode: BalanceMode) -> &'static str {
    match mode {
        BalanceMode::BeforeSplit => "paper",
        BalanceMode::LeakFree => "leak-free",
        BalanceMode::Off => "off",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(dir: &Path, kind: ClassifierKind) -> PipelineConfig {
        let mut cfg = PipelineConfig {
            input: InputSource::Synthetic {
                epochs_per_class: 60,
                separability: 0.8,
            },
            output_dir: dir.to_path_buf(),
            classifier: kind,
            ..PipelineConfig::default()
        };
        cfg.params.forest.n_trees = 10;
        cfg.params.mlp.epochs = 3;
        cfg.params.mlp.hidden = 16;
        cfg.params.logreg.epochs = 20;
        cfg
    }

    #[test]
    fn defaults_match_reference_setup() {
        let cfg = PipelineConfig::default();
        assert_eq!(cfg.window_width, 5);
        assert_eq!(cfg.test_fraction, 0.2);
        assert_eq!(cfg.resolved_validation_fraction(), 0.0);
        assert_eq!(cfg.balance, BalanceMode::BeforeSplit);
        assert_eq!(cfg.sample_rate_hz, 500.0);
        let mlp = PipelineConfig {
            classifier: ClassifierKind::Mlp,
            ..cfg
        };
        assert_eq!(mlp.resolved_validation_fraction(), 0.2);
        assert_eq!(mlp.params.mlp.epochs, 50);
    }

    #[test]
    fn key_value_config() {
        let cfg = PipelineConfig::from_key_values(
            "# run\nclassifier = mlp\nepochs=7\nseed=3\nbalance=leak-free\nmax_depth=none\n",
        )
        .unwrap();
        assert_eq!(cfg.classifier, ClassifierKind::Mlp);
        assert_eq!(cfg.params.mlp.epochs, 7);
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.balance, BalanceMode::LeakFree);
        assert_eq!(cfg.params.tree.max_depth, None);
        for bad in ["nope=1", "seed=x", "balance=some", "classifier=svm", "seed"] {
            let err = PipelineConfig::from_key_values(bad).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{bad}: {err}");
        }
    }

    #[test]
    fn config_validation() {
        let bad = PipelineConfig {
            test_fraction: 1.0,
            ..PipelineConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = PipelineConfig {
            window_width: 0,
            ..PipelineConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = PipelineConfig {
            classifier: ClassifierKind::Mlp,
            validation_fraction: Some(0.0),
            ..PipelineConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn run_writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_pipeline(&small_config(dir.path(), ClassifierKind::RandomForest)).unwrap();
        for name in [
            "model.json",
            "split_manifest.txt",
            "confusion_matrix.csv",
            "metrics.txt",
            "metrics.csv",
            "predictions.csv",
        ] {
            assert!(dir.path().join(name).exists(), "{name}");
        }
        assert!(!dir.path().join("history.csv").exists());
        let model = io::load_model(&dir.path().join("model.json")).unwrap();
        assert_eq!(model.model, out.model.model);
        let text = fs::read_to_string(dir.path().join("metrics.txt")).unwrap();
        assert!(text.contains("rows = true class"));
        let manifest = SplitManifest::read(&dir.path().join("split_manifest.txt")).unwrap();
        assert_eq!(manifest, out.manifest);
    }

    #[test]
    fn mlp_history_has_one_row_per_epoch() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_pipeline(&small_config(dir.path(), ClassifierKind::Mlp)).unwrap();
        assert_eq!(out.history.len(), 3);
        let csv = fs::read_to_string(dir.path().join("history.csv")).unwrap();
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn leak_free_keeps_test_unbalanced() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config(dir.path(), ClassifierKind::NaiveBayes);
        cfg.balance = BalanceMode::LeakFree;
        let out = execute(&cfg).unwrap();
        assert_eq!(out.manifest.n_samples, out.n_windowed);
    }

    #[test]
    fn stage_tagged_errors() {
        let cfg = PipelineConfig {
            input: InputSource::Features(PathBuf::from("/nonexistent/features.csv")),
            ..PipelineConfig::default()
        };
        let err = execute(&cfg).unwrap_err();
        assert!(err.to_string().starts_with("extract:"), "{err}");
        assert_eq!(err.exit_code(), 3);
    }
}
