//! Multinomial (softmax) logistic regression trained by full-batch gradient
//! descent, with an optional one-vs-rest sigmoid variant.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::{check_input, softmax_in_place, Classifier, Dataset};
use crate::error::{Error, Result};
use crate::stage::Stage;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LogRegMode {
    /// Softmax cross-entropy over the three classes.
    #[default]
    Softmax,
    /// Three independent sigmoid units with binary cross-entropy; their
    /// outputs are renormalized into a distribution at prediction time.
    OneVsRest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegParams {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    pub mode: LogRegMode,
}

impl Default for LogRegParams {
    fn default() -> Self {
        LogRegParams {
            learning_rate: 0.1,
            epochs: 200,
            l2: 0.0,
            mode: LogRegMode::Softmax,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticRegression {
    /// One row per class.
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
    pub mode: LogRegMode,
    pub l2: f64,
}

pub(crate) fn one_hot(labels: &[Stage]) -> Array2<f64> {
    let mut y = Array2::zeros((labels.len(), Stage::COUNT));
    for (i, l) in labels.iter().enumerate() {
        y[[i, l.index()]] = 1.0;
    }
    y
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LogisticRegression {
    pub fn zeros(n_features: usize, mode: LogRegMode, l2: f64) -> Self {
        LogisticRegression {
            weights: Array2::zeros((Stage::COUNT, n_features)),
            biases: Array1::zeros(Stage::COUNT),
            mode,
            l2,
        }
    }

    fn logits(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weights.t()) + &self.biases
    }

    /// Mean loss and its gradient with respect to weights and biases.
    pub fn loss_and_gradient(
        &self,
        x: &Array2<f64>,
        y: &Array2<f64>,
    ) -> (f64, Array2<f64>, Array1<f64>) {
        let n = x.nrows() as f64;
        let z = self.logits(x);
        let mut residual = Array2::zeros(z.raw_dim());
        let mut loss = 0.0;
        for ((zr, yr), mut rr) in z.rows().into_iter().zip(y.rows()).zip(residual.rows_mut()) {
            match self.mode {
                LogRegMode::Softmax => {
                    let max = zr.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let lse = max + zr.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                    for c in 0..Stage::COUNT {
                        loss += yr[c] * (lse - zr[c]);
                        rr[c] = (zr[c] - lse).exp() - yr[c];
                    }
                }
                LogRegMode::OneVsRest => {
                    for c in 0..Stage::COUNT {
                        loss += softplus(zr[c]) - yr[c] * zr[c];
                        rr[c] = sigmoid(zr[c]) - yr[c];
                    }
                }
            }
        }
        residual /= n;
        loss /= n;
        loss += 0.5 * self.l2 * self.weights.iter().map(|w| w * w).sum::<f64>();
        let grad_w = residual.t().dot(x) + &(&self.weights * self.l2);
        let grad_b = residual.sum_axis(Axis(0));
        (loss, grad_w, grad_b)
    }

    /// Full-batch gradient descent from zero weights. Returns the model and
    /// the loss after each of `0..=epochs` updates.
    pub fn fit(data: &Dataset, params: &LogRegParams) -> Result<(Self, Vec<f64>)> {
        if data.is_empty() {
            return Err(Error::invalid(
                "cannot fit logistic regression on zero samples",
            ));
        }
        if !(params.learning_rate > 0.0 && params.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        let mut model = Self::zeros(data.n_features(), params.mode, params.l2);
        let y = one_hot(&data.labels);
        let mut history = Vec::with_capacity(params.epochs + 1);
        for epoch in 0..=params.epochs {
            let (loss, gw, gb) = model.loss_and_gradient(&data.features, &y);
            if !loss.is_finite() {
                return Err(Error::TrainingFailure {
                    epoch,
                    reason: format!("loss became {loss}"),
                });
            }
            history.push(loss);
            if epoch == params.epochs {
                break;
            }
            model.weights.scaled_add(-params.learning_rate, &gw);
            model.biases.scaled_add(-params.learning_rate, &gb);
        }
        Ok((model, history))
    }
}

impl Classifier for LogisticRegression {
    fn n_features(&self) -> usize {
        self.weights.ncols()
    }

    fn predict_proba(&self, features: &[f64]) -> Result<[f64; 3]> {
        check_input(features, self.n_features())?;
        let mut z = [0.0; 3];
        for (c, zc) in z.iter_mut().enumerate() {
            *zc = self.biases[c]
                + self
                    .weights
                    .row(c)
                    .iter()
                    .zip(features)
                    .map(|(w, x)| w * x)
                    .sum::<f64>();
        }
        match self.mode {
            LogRegMode::Softmax => softmax_in_place(&mut z),
            LogRegMode::OneVsRest => {
                let s = z.map(sigmoid);
                let total: f64 = s.iter().sum();
                z = s.map(|v| v / total);
            }
        }
        Ok(z)
    }
}
