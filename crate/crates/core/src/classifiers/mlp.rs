//! One-hidden-layer perceptron: ReLU hidden layer, softmax output,
//! categorical cross-entropy, backpropagation and adam.

use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::logreg::one_hot;
use super::{check_input, softmax_in_place, Classifier, Dataset};
use crate::dataset::shuffle;
use crate::error::{Error, Result};
use crate::metrics::{confusion_matrix, derive_metrics};
use crate::stage::Stage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for MlpParams {
    fn default() -> Self {
        MlpParams {
            hidden: 256,
            epochs: 50,
            batch_size: 128,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

/// Loss plus macro-averaged precision and recall on one data set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub loss: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistoryRecord {
    /// 1-based.
    pub epoch: usize,
    pub train: EpochMetrics,
    pub validation: EpochMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    /// `inputs x hidden`
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    /// `hidden x 3`
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradients {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    pub hidden: Array2<f64>,
    pub logits: Array2<f64>,
    pub probabilities: Array2<f64>,
}

impl Mlp {
    pub fn zeros(inputs: usize, hidden: usize) -> Self {
        Mlp {
            w1: Array2::zeros((inputs, hidden)),
            b1: Array1::zeros(hidden),
            w2: Array2::zeros((hidden, Stage::COUNT)),
            b2: Array1::zeros(Stage::COUNT),
        }
    }

    /// He-normal weights (`sd = sqrt(2 / fan_in)`), zero biases.
    pub fn he_init(inputs: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut m = Self::zeros(inputs, hidden);
        let n1 = Normal::new(0.0, (2.0 / inputs as f64).sqrt()).expect("valid sd");
        let n2 = Normal::new(0.0, (2.0 / hidden as f64).sqrt()).expect("valid sd");
        m.w1.mapv_inplace(|_| n1.sample(rng));
        m.w2.mapv_inplace(|_| n2.sample(rng));
        m
    }

    pub fn inputs(&self) -> usize {
        self.w1.nrows()
    }

    pub fn hidden(&self) -> usize {
        self.w1.ncols()
    }

    pub fn forward(&self, x: &Array2<f64>) -> Result<Forward> {
        if x.ncols() != self.inputs() {
            return Err(Error::invalid(format!(
                "network expects {} inputs, got {}",
                self.inputs(),
                x.ncols()
            )));
        }
        let hidden = (x.dot(&self.w1) + &self.b1).mapv_into(|v| v.max(0.0));
        let logits = hidden.dot(&self.w2) + &self.b2;
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite logits in forward pass".into()));
        }
        let mut probabilities = logits.clone();
        for mut row in probabilities.rows_mut() {
            softmax_in_place(row.as_slice_mut().expect("standard layout"));
        }
        Ok(Forward {
            hidden,
            logits,
            probabilities,
        })
    }

    /// Mean categorical cross-entropy, computed from logits via log-sum-exp.
    pub fn loss(&self, x: &Array2<f64>, y: &Array2<f64>) -> Result<f64> {
        Ok(cross_entropy(&self.forward(x)?.logits, y))
    }

    /// Exact gradients of the mean cross-entropy over the batch.
    pub fn backward(&self, x: &Array2<f64>, y: &Array2<f64>) -> Result<(f64, MlpGradients)> {
        let fwd = self.forward(x)?;
        let n = x.nrows() as f64;
        let loss = cross_entropy(&fwd.logits, y);
        let d_logits = (&fwd.probabilities - y) / n;
        let w2 = fwd.hidden.t().dot(&d_logits);
        let b2 = d_logits.sum_axis(Axis(0));
        let mut d_hidden = d_logits.dot(&self.w2.t());
        d_hidden.zip_mut_with(&fwd.hidden, |g, &h| {
            if h <= 0.0 {
                *g = 0.0;
            }
        });
        let w1 = x.t().dot(&d_hidden);
        let b1 = d_hidden.sum_axis(Axis(0));
        Ok((loss, MlpGradients { w1, b1, w2, b2 }))
    }

    fn tensor_sizes(&self) -> [usize; 4] {
        [self.w1.len(), self.b1.len(), self.w2.len(), self.b2.len()]
    }

    fn apply(&mut self, adam: &mut AdamState, g: &MlpGradients) -> Result<()> {
        let Mlp { w1, b1, w2, b2 } = self;
        adam.step(
            &mut [
                w1.as_slice_mut().expect("standard layout"),
                b1.as_slice_mut().expect("standard layout"),
                w2.as_slice_mut().expect("standard layout"),
                b2.as_slice_mut().expect("standard layout"),
            ],
            &[
                g.w1.as_slice().expect("standard layout"),
                g.b1.as_slice().expect("standard layout"),
                g.w2.as_slice().expect("standard layout"),
                g.b2.as_slice().expect("standard layout"),
            ],
        )
    }

    /// Loss, accuracy and macro precision/recall on `data`.
    pub fn evaluate(&self, data: &Dataset) -> Result<EpochMetrics> {
        let fwd = self.forward(&data.features)?;
        let y = one_hot(&data.labels);
        let predicted: Vec<Stage> = fwd
            .probabilities
            .rows()
            .into_iter()
            .map(|r| Stage::argmax(&[r[0], r[1], r[2]]))
            .collect();
        let report = derive_metrics(&confusion_matrix(&data.labels, &predicted)?)?;
        Ok(EpochMetrics {
            loss: cross_entropy(&fwd.logits, &y),
            accuracy: report.accuracy,
            precision: report.macro_precision(),
            recall: report.macro_recall(),
        })
    }

    /// Mini-batch adam training for a fixed number of epochs. Initialization
    /// and per-epoch shuffling are driven by `params.seed`.
    pub fn fit(
        train: &Dataset,
        validation: &Dataset,
        params: &MlpParams,
    ) -> Result<(Self, Vec<TrainingHistoryRecord>)> {
        if train.is_empty() || validation.is_empty() {
            return Err(Error::invalid(
                "MLP training needs non-empty train and validation sets",
            ));
        }
        if validation.n_features() != train.n_features() {
            return Err(Error::invalid("train and validation widths differ"));
        }
        if params.batch_size == 0 || params.hidden == 0 {
            return Err(Error::invalid(
                "batch size and hidden width must be positive",
            ));
        }
        let mut init_rng = ChaCha8Rng::seed_from_u64(params.seed);
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(params.seed);
        shuffle_rng.set_stream(1);

        let mut model = Self::he_init(train.n_features(), params.hidden, &mut init_rng);
        let mut adam = AdamState::new(params.adam, &model.tensor_sizes());
        let y = one_hot(&train.labels);
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut history = Vec::with_capacity(params.epochs);

        for epoch in 1..=params.epochs {
            let fail = |e: Error| Error::TrainingFailure {
                epoch,
                reason: e.to_string(),
            };
            shuffle(&mut order, &mut shuffle_rng);
            for batch in order.chunks(params.batch_size) {
                let xb = train.features.select(Axis(0), batch);
                let yb = y.select(Axis(0), batch);
                let (_, grads) = model.backward(&xb, &yb).map_err(fail)?;
                model.apply(&mut adam, &grads).map_err(fail)?;
            }
            if model
                .w1
                .iter()
                .chain(model.w2.iter())
                .any(|v| !v.is_finite())
            {
                return Err(fail(Error::Numeric("non-finite weights".into())));
            }
            history.push(TrainingHistoryRecord {
                epoch,
                train: model.evaluate(train).map_err(fail)?,
                validation: model.evaluate(validation).map_err(fail)?,
            });
        }
        Ok((model, history))
    }
}

fn cross_entropy(logits: &Array2<f64>, y: &Array2<f64>) -> f64 {
    let mut total = 0.0;
    for (z, t) in logits.rows().into_iter().zip(y.rows()) {
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += z
            .iter()
            .zip(t.iter())
            .map(|(zc, tc)| tc * (lse - zc))
            .sum::<f64>();
    }
    total / logits.nrows() as f64
}

impl Classifier for Mlp {
    fn n_features(&self) -> usize {
        self.inputs()
    }

    fn predict_proba(&self, features: &[f64]) -> Result<[f64; 3]> {
        check_input(features, self.inputs())?;
        let x = Array2::from_shape_vec((1, features.len()), features.to_vec())
            .map_err(|e| Error::invalid(e.to_string()))?;
        let p = self.forward(&x)?.probabilities;
        Ok([p[[0, 0]], p[[0, 1]], p[[0, 2]]])
    }

    fn predict_proba_batch(&self, features: &Array2<f64>) -> Result<Vec<[f64; 3]>> {
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite feature"));
        }
        let p = self.forward(features)?.probabilities;
        Ok(p.rows().into_iter().map(|r| [r[0], r[1], r[2]]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_model(rng: &mut ChaCha8Rng, inputs: usize, hidden: usize) -> Mlp {
        let mut m = Mlp::he_init(inputs, hidden, rng);
        m.b1.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        m.b2.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        m
    }

    #[test]
    fn zero_network_is_uniform() {
        let m = Mlp::zeros(210, 256);
        let x = Array2::from_elem((2, 210), 0.7);
        let p = m.forward(&x).unwrap().probabilities;
        assert!(p.iter().all(|&v| v == 1.0 / 3.0));
    }

    #[test]
    fn probabilities_normalized_and_relu_non_negative() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = random_model(&mut rng, 10, 16);
        let x = Array2::from_shape_fn((50, 10), |_| rng.random_range(-3.0..3.0));
        let f = m.forward(&x).unwrap();
        assert!(f.hidden.iter().all(|&v| v >= 0.0));
        for r in f.probabilities.rows() {
            assert!((r.sum() - 1.0).abs() < 1e-9);
        }
        assert_eq!(f.hidden.dim(), (50, 16));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let m = random_model(&mut rng, 4, 3);
        let x = Array2::from_shape_fn((2, 4), |_| rng.random_range(-1.0..1.0));
        let y = one_hot(&[Stage::SlowWave, Stage::Wake]);
        let (_, g) = m.backward(&x, &y).unwrap();
        let h = 1e-5;
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-4);
        let fd = |edit: &dyn Fn(&mut Mlp, f64)| {
            let mut p = m.clone();
            edit(&mut p, h);
            let mut q = m.clone();
            edit(&mut q, -h);
            (p.loss(&x, &y).unwrap() - q.loss(&x, &y).unwrap()) / (2.0 * h)
        };
        for ((i, j), &a) in g.w1.indexed_iter() {
            assert!(rel(fd(&|n, d| n.w1[[i, j]] += d), a) < 1e-6);
        }
        for (i, &a) in g.b1.indexed_iter() {
            assert!(rel(fd(&|n, d| n.b1[i] += d), a) < 1e-6);
        }
        for ((i, j), &a) in g.w2.indexed_iter() {
            assert!(rel(fd(&|n, d| n.w2[[i, j]] += d), a) < 1e-6);
        }
        for (i, &a) in g.b2.indexed_iter() {
            assert!(rel(fd(&|n, d| n.b2[i] += d), a) < 1e-6);
        }
    }

    #[test]
    fn duplicate_sample_gives_same_mean_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let m = random_model(&mut rng, 5, 4);
        let x1 = Array2::from_shape_fn((1, 5), |_| rng.random_range(-1.0..1.0));
        let x2 = ndarray::concatenate![Axis(0), x1, x1];
        let (_, g1) = m.backward(&x1, &one_hot(&[Stage::Wake])).unwrap();
        let (_, g2) = m
            .backward(&x2, &one_hot(&[Stage::Wake, Stage::Wake]))
            .unwrap();
        for (a, b) in g1.w1.iter().zip(g2.w1.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
        for (a, b) in g1.b2.iter().zip(g2.b2.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn saturated_correct_output_has_no_output_gradient() {
        let mut m = Mlp::zeros(2, 2);
        m.b2 = Array1::from(vec![0.0, 0.0, 60.0]);
        let x = Array2::from_elem((1, 2), 1.0);
        let (_, g) = m.backward(&x, &one_hot(&[Stage::Wake])).unwrap();
        assert!(g.b2.iter().all(|v| v.abs() < 1e-20));
    }

    fn blobs(rng: &mut ChaCha8Rng, n: usize) -> Dataset {
        let mut x = Array2::zeros((n, 4));
        let mut labels = Vec::new();
        for i in 0..n {
            let c = i % 3;
            for f in 0..4 {
                x[[i, f]] = if f == c { 3.0 } else { 0.0 } + rng.random_range(-1.0..1.0);
            }
            labels.push(Stage::ALL[c]);
        }
        Dataset::new(x, labels).unwrap()
    }

    #[test]
    fn training_is_deterministic_and_learns() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let train = blobs(&mut rng, 300);
        let val = blobs(&mut rng, 90);
        let params = MlpParams {
            hidden: 16,
            epochs: 20,
            batch_size: 32,
            seed: 5,
            ..Default::default()
        };
        let (a, ha) = Mlp::fit(&train, &val, &params).unwrap();
        let (b, hb) = Mlp::fit(&train, &val, &params).unwrap();
        assert_eq!(a, b);
        assert_eq!(ha, hb);
        assert_eq!(ha.len(), 20);
        assert_eq!(
            ha.iter().map(|r| r.epoch).collect::<Vec<_>>(),
            (1..=20).collect::<Vec<_>>()
        );
        assert!(ha.last().unwrap().validation.accuracy > 0.95);
        assert!(ha.last().unwrap().train.loss < ha[0].train.loss);
    }

    #[test]
    fn zero_epochs_returns_initial_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let train = blobs(&mut rng, 30);
        let params = MlpParams {
            hidden: 8,
            epochs: 0,
            seed: 9,
            ..Default::default()
        };
        let (m, h) = Mlp::fit(&train, &train, &params).unwrap();
        assert!(h.is_empty());
        let init = Mlp::he_init(4, 8, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(m, init);
    }
}
