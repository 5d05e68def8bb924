//! File formats: feature and windowed-sample CSVs, raw signal CSVs, split
//! manifests, model JSON, metrics reports, training history, predictions.
//!
//! Row numbers in error messages count data rows from 1, header excluded.

use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::classifiers::{TrainedModel, TrainingHistoryRecord, MODEL_FORMAT_VERSION};
use crate::dataset::{DataSplit, WindowedSample};
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::signal_features::FeatureRow;
use crate::stage::Stage;
use crate::{FEATURES_PER_EPOCH, N_BANDS};

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Column names of the feature CSV: 40 bands named by tenths-of-Hz bounds,
/// then `emg`, `activity`, `label`.
pub fn feature_header() -> Vec<String> {
    let mut cols: Vec<String> = (0..N_BANDS)
        .map(|i| format!("eeg_{:02}_{:02}", 5 * i, 5 * (i + 1)))
        .collect();
    cols.push("emg".into());
    cols.push("activity".into());
    cols.push("label".into());
    cols
}

/// Column names of a windowed-sample CSV with `n_features` features.
pub fn windowed_header(n_features: usize) -> Vec<String> {
    let mut cols: Vec<String> = (0..n_features).map(|i| format!("f{i:03}")).collect();
    cols.push("label".into());
    cols
}

fn check_header(found: &csv::StringRecord, expected: &[String]) -> Result<()> {
    let found: Vec<&str> = found.iter().map(str::trim).collect();
    if found
        .iter()
        .copied()
        .eq(expected.iter().map(String::as_str))
    {
        return Ok(());
    }
    let missing: Vec<&str> = expected
        .iter()
        .map(String::as_str)
        .filter(|c| !found.contains(c))
        .collect();
    let extra: Vec<&str> = found
        .iter()
        .copied()
        .filter(|c| !expected.iter().any(|e| e == c))
        .collect();
    let mut msg = String::from("header does not match schema");
    if !missing.is_empty() {
        let _ = write!(msg, "; missing columns: {}", missing.join(", "));
    }
    if !extra.is_empty() {
        let _ = write!(msg, "; unexpected columns: {}", extra.join(", "));
    }
    if missing.is_empty() && extra.is_empty() {
        msg.push_str("; columns out of order");
    }
    Err(Error::Schema(msg))
}

fn parse_value(field: &str, row: usize, column: &str) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
        row,
        column: column.to_string(),
        message: format!("cannot parse {field:?} as a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            row,
            column: column.to_string(),
            message: "value is not finite".into(),
        });
    }
    Ok(v)
}

fn parse_label(field: &str, row: usize) -> Result<Option<Stage>> {
    let field = field.trim();
    if field.is_empty() {
        return Ok(None);
    }
    field.parse().map(Some).map_err(|_| Error::Parse {
        row,
        column: "label".into(),
        message: format!("unknown label {field:?} (expected P, S or W)"),
    })
}

pub fn read_feature_csv_from<R: Read>(reader: R) -> Result<Vec<FeatureRow>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let header = feature_header();
    check_header(rdr.headers()?, &header)?;
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record?;
        let mut values = [0.0; FEATURES_PER_EPOCH];
        for (j, v) in values.iter_mut().enumerate() {
            *v = parse_value(&record[j], row, &header[j])?;
        }
        let label = parse_label(&record[FEATURES_PER_EPOCH], row)?;
        rows.push(FeatureRow::from_values(&values, label)?);
    }
    Ok(rows)
}

pub fn read_feature_csv(path: &Path) -> Result<Vec<FeatureRow>> {
    read_feature_csv_from(fs::File::open(path)?)
}

pub fn write_feature_csv_to<W: Write>(rows: &[FeatureRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(feature_header())?;
    for r in rows {
        let mut rec: Vec<String> = r.values().iter().map(|v| fmt_f64(*v)).collect();
        rec.push(r.label.map(|l| l.to_string()).unwrap_or_default());
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_feature_csv(rows: &[FeatureRow], path: &Path) -> Result<()> {
    write_feature_csv_to(rows, fs::File::create(path)?)
}

/// Windowed rows whose labels may be missing (e.g. prediction input).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WindowedTable {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<Option<Stage>>,
}

impl WindowedTable {
    pub fn n_features(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    /// Fails on the first unlabeled row.
    pub fn into_samples(self) -> Result<Vec<WindowedSample>> {
        self.features
            .into_iter()
            .zip(self.labels)
            .enumerate()
            .map(|(i, (features, label))| {
                let label =
                    label.ok_or_else(|| Error::invalid(format!("row {} has no label", i + 1)))?;
                Ok(WindowedSample { features, label })
            })
            .collect()
    }
}

pub fn read_windowed_csv_from<R: Read>(reader: R) -> Result<WindowedTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let found = rdr.headers()?.clone();
    let n_features = found.len().saturating_sub(1);
    if n_features == 0 {
        return Err(Error::Schema(
            "windowed CSV needs feature columns and a label column".into(),
        ));
    }
    let header = windowed_header(n_features);
    check_header(&found, &header)?;
    let mut table = WindowedTable::default();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record?;
        let features = (0..n_features)
            .map(|j| parse_value(&record[j], row, &header[j]))
            .collect::<Result<Vec<_>>>()?;
        table.features.push(features);
        table.labels.push(parse_label(&record[n_features], row)?);
    }
    Ok(table)
}

pub fn read_windowed_csv(path: &Path) -> Result<WindowedTable> {
    read_windowed_csv_from(fs::File::open(path)?)
}

pub fn write_windowed_csv_to<W: Write>(samples: &[WindowedSample], writer: W) -> Result<()> {
    let n = samples
        .first()
        .map_or(FEATURES_PER_EPOCH * crate::DEFAULT_WINDOW, |s| {
            s.features.len()
        });
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(windowed_header(n))?;
    for s in samples {
        if s.features.len() != n {
            return Err(Error::invalid("windowed samples differ in width"));
        }
        let mut rec: Vec<String> = s.features.iter().map(|v| fmt_f64(*v)).collect();
        rec.push(s.label.to_string());
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_windowed_csv(samples: &[WindowedSample], path: &Path) -> Result<()> {
    write_windowed_csv_to(samples, fs::File::create(path)?)
}

/// Continuous signals from `t_index,eeg,emg`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SignalTable {
    pub eeg: Vec<f64>,
    pub emg: Vec<f64>,
}

pub fn read_signal_csv_from<R: Read>(reader: R) -> Result<SignalTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let header: Vec<String> = ["t_index", "eeg", "emg"].map(String::from).to_vec();
    check_header(rdr.headers()?, &header)?;
    let mut table = SignalTable::default();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record?;
        let t: usize = record[0].trim().parse().map_err(|_| Error::Parse {
            row,
            column: "t_index".into(),
            message: format!("cannot parse {:?} as a sample index", &record[0]),
        })?;
        if t != i {
            return Err(Error::Parse {
                row,
                column: "t_index".into(),
                message: format!("expected sample index {i}, found {t}"),
            });
        }
        table.eeg.push(parse_value(&record[1], row, "eeg")?);
        table.emg.push(parse_value(&record[2], row, "emg")?);
    }
    Ok(table)
}

pub fn write_signal_csv_to<W: Write>(table: &SignalTable, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t_index", "eeg", "emg"])?;
    for (i, (e, m)) in table.eeg.iter().zip(&table.emg).enumerate() {
        w.write_record([i.to_string(), fmt_f64(*e), fmt_f64(*m)])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-epoch sidecar: `epoch_index,activity` with an optional `label` column.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpochTable {
    pub activity: Vec<f64>,
    pub labels: Vec<Option<Stage>>,
}

pub fn read_epoch_csv_from<R: Read>(reader: R) -> Result<EpochTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let found = rdr.headers()?.clone();
    let with_label = found.len() == 3;
    let mut header: Vec<String> = vec!["epoch_index".into(), "activity".into()];
    if with_label {
        header.push("label".into());
    }
    check_header(&found, &header)?;
    let mut table = EpochTable::default();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record?;
        let idx: usize = record[0].trim().parse().map_err(|_| Error::Parse {
            row,
            column: "epoch_index".into(),
            message: format!("cannot parse {:?} as an epoch index", &record[0]),
        })?;
        if idx != i {
            return Err(Error::Parse {
                row,
                column: "epoch_index".into(),
                message: format!("expected epoch index {i}, found {idx}"),
            });
        }
        let activity = parse_value(&record[1], row, "activity")?;
        if activity < 0.0 {
            return Err(Error::Parse {
                row,
                column: "activity".into(),
                message: "activity must be >= 0".into(),
            });
        }
        table.activity.push(activity);
        table.labels.push(if with_label {
            parse_label(&record[2], row)?
        } else {
            None
        });
    }
    Ok(table)
}

pub fn write_epoch_csv_to<W: Write>(table: &EpochTable, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["epoch_index", "activity", "label"])?;
    for (i, (a, l)) in table.activity.iter().zip(&table.labels).enumerate() {
        w.write_record([
            i.to_string(),
            fmt_f64(*a),
            l.map(|s| s.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `sha256:<hex>` of a byte string.
pub fn digest_bytes(bytes: &[u8]) -> String {
    format!("sha256:{}", hex::encode(Sha256::digest(bytes)))
}

pub fn digest_file(path: &Path) -> Result<String> {
    Ok(digest_bytes(&fs::read(path)?))
}

/// Split plus the provenance needed to re-apply it.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitManifest {
    pub split: DataSplit,
    pub n_samples: usize,
    pub input_digest: String,
}

fn join_indices(idx: &[usize]) -> String {
    idx.iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

impl SplitManifest {
    pub fn render(&self) -> String {
        let s = &self.split;
        format!(
            "format_version=1\nseed={}\ntest_fraction={}\nvalidation_fraction={}\nn_samples={}\ninput_digest={}\ntrain={}\nvalidation={}\ntest={}\n",
            s.seed,
            fmt_f64(s.test_fraction),
            fmt_f64(s.validation_fraction),
            self.n_samples,
            self.input_digest,
            join_indices(&s.train),
            join_indices(&s.validation),
            join_indices(&s.test),
        )
    }

    pub fn parse(text: &str) -> Result<Self> {
        let kv = parse_key_values(text)?;
        let get = |k: &str| {
            kv.iter()
                .find(|(key, _)| key == k)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| Error::Schema(format!("split manifest lacks key {k:?}")))
        };
        let num = |k: &str| -> Result<f64> {
            get(k)?
                .parse()
                .map_err(|_| Error::Schema(format!("bad value for {k}")))
        };
        let list = |k: &str| -> Result<Vec<usize>> {
            let v = get(k)?;
            if v.is_empty() {
                return Ok(Vec::new());
            }
            v.split(',')
                .map(|x| {
                    x.trim()
                        .parse()
                        .map_err(|_| Error::Schema(format!("bad index {x:?} in {k}")))
                })
                .collect()
        };
        let n_samples: usize = get("n_samples")?
            .parse()
            .map_err(|_| Error::Schema("bad n_samples".into()))?;
        let split = DataSplit {
            seed: get("seed")?
                .parse()
                .map_err(|_| Error::Schema("bad seed".into()))?,
            test_fraction: num("test_fraction")?,
            validation_fraction: num("validation_fraction")?,
            train: list("train")?,
            validation: list("validation")?,
            test: list("test")?,
        };
        if split.len() != n_samples
            || split
                .train
                .iter()
                .chain(&split.validation)
                .chain(&split.test)
                .any(|&i| i >= n_samples)
        {
            return Err(Error::Schema(
                "split indices do not partition n_samples".into(),
            ));
        }
        Ok(SplitManifest {
            split,
            n_samples,
            input_digest: get("input_digest")?.to_string(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        Ok(fs::write(path, self.render())?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }
}

/// `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| {
            let (k, v) = l
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", i + 1)))?;
            Ok((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

pub fn save_model(model: &TrainedModel, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(model)?;
    Ok(fs::write(path, text)?)
}

pub fn load_model_from_str(text: &str) -> Result<TrainedModel> {
    let model: TrainedModel = serde_json::from_str(text)?;
    if model.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::Schema(format!(
            "model format version {} is not supported (expected {MODEL_FORMAT_VERSION})",
            model.format_version
        )));
    }
    Ok(model)
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    load_model_from_str(&fs::read_to_string(path)?)
}

/// 3x3 confusion matrix with class-name header row and column.
pub fn render_confusion_csv(report: &MetricsReport) -> String {
    let mut out = String::from("true\\predicted,P,S,W\n");
    for t in Stage::ALL {
        let cells: Vec<String> = Stage::ALL
            .iter()
            .map(|p| report.confusion.get(t, *p).to_string())
            .collect();
        let _ = writeln!(out, "{t},{}", cells.join(","));
    }
    out
}

/// Flat `metric,class,value` rows; class is `all` for aggregate metrics.
pub fn render_metrics_csv(report: &MetricsReport) -> String {
    let mut out = String::from("metric,class,value\n");
    let _ = writeln!(out, "accuracy,all,{}", fmt_f64(report.accuracy));
    for s in Stage::ALL {
        let c = report.class(s);
        let _ = writeln!(out, "precision,{s},{}", fmt_f64(c.precision));
        let _ = writeln!(out, "recall,{s},{}", fmt_f64(c.recall));
        let _ = writeln!(out, "f1,{s},{}", fmt_f64(c.f1));
    }
    let _ = writeln!(out, "macro_f1,all,{}", fmt_f64(report.macro_f1));
    if let Some(auc) = &report.auc {
        for s in Stage::ALL {
            if let Some(v) = auc.per_class[s.index()] {
                let _ = writeln!(out, "auc_ovr,{s},{}", fmt_f64(v));
            }
        }
        let _ = writeln!(out, "macro_auc_ovr,all,{}", fmt_f64(auc.macro_auc));
    }
    out
}

/// Aligned plain-text report.
pub fn render_metrics_text(title: &str, report: &MetricsReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{title}");
    let _ = writeln!(out, "samples: {}", report.confusion.total());
    let _ = writeln!(out, "accuracy: {:.4}", report.accuracy);
    let _ = writeln!(out, "macro F1: {:.4}", report.macro_f1);
    if let Some(auc) = &report.auc {
        let _ = writeln!(out, "macro one-vs-rest AUC: {:.4}", auc.macro_auc);
    }
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "{:<6}{:>10}{:>10}{:>10}{:>10}",
        "class", "precision", "recall", "f1", "auc_ovr"
    );
    for s in Stage::ALL {
        let c = report.class(s);
        let auc = report
            .auc
            .as_ref()
            .and_then(|a| a.per_class[s.index()])
            .map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        let _ = writeln!(
            out,
            "{:<6}{:>10.4}{:>10.4}{:>10.4}{:>10}",
            s.to_string(),
            c.precision,
            c.recall,
            c.f1,
            auc
        );
    }
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "confusion matrix (rows = true class, columns = predicted class)"
    );
    let _ = writeln!(out, "{:<6}{:>10}{:>10}{:>10}", "", "P", "S", "W");
    for t in Stage::ALL {
        let _ = writeln!(
            out,
            "{:<6}{:>10}{:>10}{:>10}",
            t.to_string(),
            report.confusion.get(t, Stage::Paradoxical),
            report.confusion.get(t, Stage::SlowWave),
            report.confusion.get(t, Stage::Wake)
        );
    }
    if !report.warnings.is_empty() {
        let _ = writeln!(out);
        let _ = writeln!(out, "warnings:");
        for w in &report.warnings {
            let _ = writeln!(out, "  {w}");
        }
    }
    out
}

pub fn render_history_csv(history: &[TrainingHistoryRecord]) -> String {
    let mut out = String::from(
        "epoch,train_loss,train_accuracy,train_precision,train_recall,val_loss,val_accuracy,val_precision,val_recall\n",
    );
    for r in history {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.epoch,
            fmt_f64(r.train.loss),
            fmt_f64(r.train.accuracy),
            fmt_f64(r.train.precision),
            fmt_f64(r.train.recall),
            fmt_f64(r.validation.loss),
            fmt_f64(r.validation.accuracy),
            fmt_f64(r.validation.precision),
            fmt_f64(r.validation.recall),
        );
    }
    out
}

/// `row,predicted,p_P,p_S,p_W[,true]`
pub fn render_predictions_csv(
    probabilities: &[[f64; 3]],
    truth: Option<&[Option<Stage>]>,
) -> String {
    let mut out = String::from("row,predicted,p_P,p_S,p_W");
    if truth.is_some() {
        out.push_str(",true");
    }
    out.push('\n');
    for (i, p) in probabilities.iter().enumerate() {
        let _ = write!(
            out,
            "{},{},{},{},{}",
            i,
            Stage::argmax(p),
            fmt_f64(p[0]),
            fmt_f64(p[1]),
            fmt_f64(p[2])
        );
        if let Some(t) = truth {
            let _ = write!(out, ",{}", t[i].map(|s| s.to_string()).unwrap_or_default());
        }
        out.push('\n');
    }
    out
}
