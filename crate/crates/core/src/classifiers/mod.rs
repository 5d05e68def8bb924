//! Five classifier families behind one contract: fit on windowed samples,
//! predict a label, emit class probabilities over (P, S, W).

pub mod adam;
pub mod forest;
pub mod logreg;
pub mod mlp;
pub mod naive_bayes;
pub mod standardize;
pub mod tree;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::dataset::WindowedSample;
use crate::error::{Error, Result};
use crate::stage::Stage;

pub use adam::{AdamConfig, AdamState};
pub use forest::{ForestParams, RandomForest};
pub use logreg::{LogRegMode, LogRegParams, LogisticRegression};
pub use mlp::{EpochMetrics, Mlp, MlpParams, TrainingHistoryRecord};
pub use naive_bayes::GaussianNb;
pub use standardize::Standardizer;
pub use tree::{DecisionTree, TreeParams};

/// Feature matrix (one row per sample) with labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub labels: Vec<Stage>,
}

impl Dataset {
    pub fn new(features: Array2<f64>, labels: Vec<Stage>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::invalid(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("feature matrix contains non-finite values"));
        }
        Ok(Dataset { features, labels })
    }

    pub fn from_samples(samples: &[WindowedSample]) -> Result<Self> {
        let width = samples.first().map_or(0, |s| s.features.len());
        if let Some(i) = samples.iter().position(|s| s.features.len() != width) {
            return Err(Error::invalid(format!(
                "sample {i} has {} features, expected {width}",
                samples[i].features.len()
            )));
        }
        let flat: Vec<f64> = samples
            .iter()
            .flat_map(|s| s.features.iter().copied())
            .collect();
        let features = Array2::from_shape_vec((samples.len(), width), flat)
            .map_err(|e| Error::invalid(e.to_string()))?;
        Dataset::new(features, samples.iter().map(|s| s.label).collect())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    pub fn class_counts(&self) -> [usize; Stage::COUNT] {
        let mut counts = [0; Stage::COUNT];
        for l in &self.labels {
            counts[l.index()] += 1;
        }
        counts
    }
}

/// Shared prediction contract.
pub trait Classifier {
    /// Input width the model was fitted on.
    fn n_features(&self) -> usize;

    /// Non-negative class probabilities summing to 1, indexed P, S, W.
    fn predict_proba(&self, features: &[f64]) -> Result<[f64; 3]>;

    /// Most probable class, lowest index on ties.
    fn predict(&self, features: &[f64]) -> Result<Stage> {
        Ok(Stage::argmax(&self.predict_proba(features)?))
    }

    fn predict_proba_batch(&self, features: &Array2<f64>) -> Result<Vec<[f64; 3]>> {
        features
            .rows()
            .into_iter()
            .map(|row| match row.as_slice() {
                Some(s) => self.predict_proba(s),
                None => self.predict_proba(&row.to_vec()),
            })
            .collect()
    }
}

pub(crate) fn check_input(features: &[f64], expected: usize) -> Result<()> {
    if features.len() != expected {
        return Err(Error::invalid(format!(
            "model expects {expected} features, got {}",
            features.len()
        )));
    }
    if let Some(i) = features.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("feature {i} is not finite")));
    }
    Ok(())
}

/// Max-subtracted softmax, in place.
pub fn softmax_in_place(values: &mut [f64]) {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in values.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in values.iter_mut() {
        *v /= sum;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassifierKind {
    DecisionTree,
    RandomForest,
    NaiveBayes,
    LogisticRegression,
    Mlp,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 5] = [
        ClassifierKind::RandomForest,
        ClassifierKind::Mlp,
        ClassifierKind::DecisionTree,
        ClassifierKind::LogisticRegression,
        ClassifierKind::NaiveBayes,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::DecisionTree => "decision-tree",
            ClassifierKind::RandomForest => "random-forest",
            ClassifierKind::NaiveBayes => "naive-bayes",
            ClassifierKind::LogisticRegression => "logistic-regression",
            ClassifierKind::Mlp => "mlp",
        }
    }

    /// Gradient-trained families see z-scored inputs.
    pub fn standardizes(self) -> bool {
        matches!(
            self,
            ClassifierKind::LogisticRegression | ClassifierKind::Mlp
        )
    }

    /// Only the MLP consumes a validation set.
    pub fn uses_validation(self) -> bool {
        self == ClassifierKind::Mlp
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ClassifierKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown classifier {s:?} (decision-tree|random-forest|naive-bayes|logistic-regression|mlp)"
                ))
            })
    }
}

/// Hyperparameters for every family; only the selected one is used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ClassifierParams {
    pub tree: TreeParams,
    pub forest: ForestParams,
    pub logreg: LogRegParams,
    pub mlp: MlpParams,
}

/// A fitted model of any family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model_kind", content = "parameters", rename_all = "kebab-case")]
pub enum FittedModel {
    DecisionTree(DecisionTree),
    RandomForest(RandomForest),
    NaiveBayes(GaussianNb),
    LogisticRegression(LogisticRegression),
    Mlp(Mlp),
}

impl FittedModel {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            FittedModel::DecisionTree(_) => ClassifierKind::DecisionTree,
            FittedModel::RandomForest(_) => ClassifierKind::RandomForest,
            FittedModel::NaiveBayes(_) => ClassifierKind::NaiveBayes,
            FittedModel::LogisticRegression(_) => ClassifierKind::LogisticRegression,
            FittedModel::Mlp(_) => ClassifierKind::Mlp,
        }
    }

    fn inner(&self) -> &dyn Classifier {
        match self {
            FittedModel::DecisionTree(m) => m,
            FittedModel::RandomForest(m) => m,
            FittedModel::NaiveBayes(m) => m,
            FittedModel::LogisticRegression(m) => m,
            FittedModel::Mlp(m) => m,
        }
    }
}

impl Classifier for FittedModel {
    fn n_features(&self) -> usize {
        self.inner().n_features()
    }

    fn predict_proba(&self, features: &[f64]) -> Result<[f64; 3]> {
        self.inner().predict_proba(features)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub seed: u64,
    pub epochs: Option<usize>,
    pub n_train: usize,
    pub timestamp_unix: u64,
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// A fitted model plus the input scaling it expects; this is what gets
/// persisted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    #[serde(flatten)]
    pub model: FittedModel,
    pub standardization: Option<Standardizer>,
    pub training: TrainingMetadata,
}

impl TrainedModel {
    pub fn kind(&self) -> ClassifierKind {
        self.model.kind()
    }
}

impl Classifier for TrainedModel {
    fn n_features(&self) -> usize {
        self.model.n_features()
    }

    fn predict_proba(&self, features: &[f64]) -> Result<[f64; 3]> {
        match &self.standardization {
            Some(s) => {
                check_input(features, s.len())?;
                self.model.predict_proba(&s.transform_row(features))
            }
            None => self.model.predict_proba(features),
        }
    }
}

/// Fits `kind` on `train`. The MLP also needs `validation`; it returns its
/// per-epoch history alongside the model.
pub fn train_model(
    kind: ClassifierKind,
    params: &ClassifierParams,
    train: &Dataset,
    validation: Option<&Dataset>,
    seed: u64,
) -> Result<(TrainedModel, Vec<TrainingHistoryRecord>)> {
    if train.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let standardizer = if kind.standardizes() {
        Some(Standardizer::fit(&train.features)?)
    } else {
        None
    };
    let scaled = |d: &Dataset| -> Dataset {
        match &standardizer {
            Some(s) => Dataset {
                features: s.transform(&d.features),
                labels: d.labels.clone(),
            },
            None => d.clone(),
        }
    };

    let mut history = Vec::new();
    let mut epochs = None;
    let model = match kind {
        ClassifierKind::DecisionTree => {
            FittedModel::DecisionTree(DecisionTree::fit(train, &params.tree)?)
        }
        ClassifierKind::RandomForest => {
            let forest = ForestParams {
                seed,
                ..params.forest.clone()
            };
            FittedModel::RandomForest(RandomForest::fit(train, &forest)?)
        }
        ClassifierKind::NaiveBayes => FittedModel::NaiveBayes(GaussianNb::fit(train)?),
        ClassifierKind::LogisticRegression => {
            epochs = Some(params.logreg.epochs);
            let (model, _) = LogisticRegression::fit(&scaled(train), &params.logreg)?;
            FittedModel::LogisticRegression(model)
        }
        ClassifierKind::Mlp => {
            let validation =
                validation.ok_or_else(|| Error::invalid("the MLP needs a validation set"))?;
            let mlp = MlpParams {
                seed,
                ..params.mlp.clone()
            };
            epochs = Some(mlp.epochs);
            let (model, h) = Mlp::fit(&scaled(train), &scaled(validation), &mlp)?;
            history = h;
            FittedModel::Mlp(model)
        }
    };

    let timestamp_unix = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    Ok((
        TrainedModel {
            format_version: MODEL_FORMAT_VERSION,
            model,
            standardization: standardizer,
            training: TrainingMetadata {
                seed,
                epochs,
                n_train: train.len(),
                timestamp_unix,
            },
        },
        history,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_shift_invariance() {
        let mut a = [0.0, 0.0, 0.0];
        softmax_in_place(&mut a);
        assert_eq!(a, [1.0 / 3.0; 3]);
        let mut b = [1.0, -2.0, 0.5];
        let mut c = b.map(|v| v + 123.456);
        softmax_in_place(&mut b);
        softmax_in_place(&mut c);
        for (x, y) in b.iter().zip(&c) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn kind_names_round_trip() {
        for k in ClassifierKind::ALL {
            assert_eq!(k.name().parse::<ClassifierKind>().unwrap(), k);
        }
        assert!(matches!(
            "svm".parse::<ClassifierKind>(),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn dataset_shape_checks() {
        let s = vec![
            WindowedSample {
                features: vec![1.0, 2.0],
                label: Stage::Wake,
            },
            WindowedSample {
                features: vec![1.0],
                label: Stage::Wake,
            },
        ];
        assert!(Dataset::from_samples(&s).is_err());
        let d = Dataset::from_samples(&s[..1]).unwrap();
        assert_eq!((d.len(), d.n_features()), (1, 2));
    }
}
