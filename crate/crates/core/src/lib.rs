//! Vigilance-state (paradoxical sleep, slow-wave sleep, wake) classification
//! from a single EEG channel plus EMG and activity.
//!
//! The pipeline runs in stages, each in its own module:
//!
//! 1. [`signal_features`]: 10-second epochs to 42 features (40 EEG band
//!    powers over 0–20 Hz, rectified EMG mean, activity).
//! 2. [`dataset`]: 5-epoch windows (210 features), class balancing by
//!    whole-class replication, seeded train/validation/test split.
//! 3. [`classifiers`]: decision tree, random forest, Gaussian naive Bayes,
//!    softmax logistic regression and a one-hidden-layer MLP trained with adam.
//! 4. [`metrics`]: confusion matrix, precision/recall/F1, one-vs-rest AUC.
//!
//! [`synthetic`] generates class-conditional data for exercising the whole
//! path, [`io`] holds the file formats and [`pipeline`] wires it together.

pub mod classifiers;
pub mod dataset;
pub mod error;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod signal_features;
pub mod stage;
pub mod synthetic;

pub use classifiers::{Classifier, ClassifierKind, FittedModel};
pub use dataset::{DataSplit, LabeledRow, WindowedSample};
pub use error::{Error, Result};
pub use metrics::{ConfusionMatrix, MetricsReport};
pub use signal_features::{FeatureRow, PowerSpectrum, RawEpoch};
pub use stage::Stage;

/// Number of features summarizing one epoch: 40 bands, EMG, activity.
pub const FEATURES_PER_EPOCH: usize = 42;
/// Number of 0.5 Hz EEG bands covering 0–20 Hz.
pub const N_BANDS: usize = 40;
/// Default window width in epochs.
pub const DEFAULT_WINDOW: usize = 5;
