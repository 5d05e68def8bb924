//! Gaussian naive Bayes.

use serde::{Deserialize, Serialize};

use super::{check_input, Classifier, Dataset};
use crate::error::{Error, Result};
use crate::stage::Stage;

/// Variance floor relative to the largest per-feature variance of the data.
pub const VARIANCE_FLOOR_RATIO: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNb {
    pub priors: Vec<f64>,
    /// `means[c][f]`
    pub means: Vec<Vec<f64>>,
    /// `variances[c][f]`, each at least `variance_floor`.
    pub variances: Vec<Vec<f64>>,
    pub variance_floor: f64,
}

impl GaussianNb {
    /// Fits over P, S, W; every class must be present.
    pub fn fit(data: &Dataset) -> Result<Self> {
        let labels: Vec<usize> = data.labels.iter().map(|l| l.index()).collect();
        let rows: Vec<&[f64]> = data
            .features
            .rows()
            .into_iter()
            .map(|r| r.to_slice().expect("standard layout"))
            .collect();
        Self::fit_indexed(&rows, &labels, Stage::COUNT)
    }

    /// Fits over class indices `0..n_classes`.
    pub fn fit_indexed(rows: &[&[f64]], labels: &[usize], n_classes: usize) -> Result<Self> {
        if rows.len() != labels.len() || rows.is_empty() {
            return Err(Error::invalid(
                "naive Bayes needs matching, non-empty rows and labels",
            ));
        }
        let d = rows[0].len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::invalid("rows differ in width"));
        }
        let mut counts = vec![0usize; n_classes];
        for &l in labels {
            if l >= n_classes {
                return Err(Error::invalid(format!("label index {l} out of range")));
            }
            counts[l] += 1;
        }
        let missing: Vec<String> = (0..n_classes)
            .filter(|&c| counts[c] == 0)
            .map(|c| Stage::from_index(c).map_or(c.to_string(), |s| s.to_string()))
            .collect();
        if !missing.is_empty() {
            return Err(Error::invalid(format!(
                "naive Bayes needs every class; missing {}",
                missing.join(", ")
            )));
        }

        let n = rows.len() as f64;
        let mut sums = vec![vec![0.0; d]; n_classes];
        for (r, &l) in rows.iter().zip(labels) {
            for (s, v) in sums[l].iter_mut().zip(r.iter()) {
                *s += v;
            }
        }
        let means: Vec<Vec<f64>> = sums
            .iter()
            .zip(&counts)
            .map(|(s, &c)| s.iter().map(|v| v / c as f64).collect())
            .collect();
        let mut sq = vec![vec![0.0; d]; n_classes];
        for (r, &l) in rows.iter().zip(labels) {
            for ((s, v), m) in sq[l].iter_mut().zip(r.iter()).zip(&means[l]) {
                *s += (v - m).powi(2);
            }
        }

        // overall per-feature variance sets the floor
        let mut max_var: f64 = 0.0;
        for f in 0..d {
            let mean = rows.iter().map(|r| r[f]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[f] - mean).powi(2)).sum::<f64>() / n;
            max_var = max_var.max(var);
        }
        let variance_floor = if max_var > 0.0 {
            VARIANCE_FLOOR_RATIO * max_var
        } else {
            VARIANCE_FLOOR_RATIO
        };
        let variances = sq
            .iter()
            .zip(&counts)
            .map(|(s, &c)| {
                s.iter()
                    .map(|v| (v / c as f64).max(variance_floor))
                    .collect()
            })
            .collect();

        Ok(GaussianNb {
            priors: counts.iter().map(|&c| c as f64 / n).collect(),
            means,
            variances,
            variance_floor,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.priors.len()
    }

    /// Unnormalized log posterior per class.
    pub fn log_joint(&self, features: &[f64]) -> Vec<f64> {
        const LN_2PI: f64 = 1.837_877_066_409_345_5;
        (0..self.n_classes())
            .map(|c| {
                let ll: f64 = features
                    .iter()
                    .zip(&self.means[c])
                    .zip(&self.variances[c])
                    .map(|((x, m), v)| -0.5 * (LN_2PI + v.ln() + (x - m).powi(2) / v))
                    .sum();
                self.priors[c].ln() + ll
            })
            .collect()
    }

    /// Posterior over all fitted classes.
    pub fn posterior(&self, features: &[f64]) -> Result<Vec<f64>> {
        check_input(features, self.means[0].len())?;
        let mut p = self.log_joint(features);
        super::softmax_in_place(&mut p);
        Ok(p)
    }
}

impl Classifier for GaussianNb {
    fn n_features(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    fn predict_proba(&self, features: &[f64]) -> Result<[f64; 3]> {
        if self.n_classes() != Stage::COUNT {
            return Err(Error::InvalidState(format!(
                "model was fitted on {} classes, not 3",
                self.n_classes()
            )));
        }
        let p = self.posterior(features)?;
        Ok([p[0], p[1], p[2]])
    }
}
