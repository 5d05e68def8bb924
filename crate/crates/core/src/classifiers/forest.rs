//! Bagged ensemble of CART trees with per-node feature subsampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{DecisionTree, TreeParams};
use super::{check_input, Classifier, Dataset};
use crate::error::{Error, Result};
use crate::stage::Stage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` means `round(sqrt(n_features))`.
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            features_per_split: None,
            bootstrap: true,
            max_depth: Some(25),
            min_samples_split: 2,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn resolved_features_per_split(&self, n_features: usize) -> usize {
        self.features_per_split
            .unwrap_or_else(|| (n_features as f64).sqrt().round() as usize)
            .clamp(1, n_features.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    n_features: usize,
    trees: Vec<DecisionTree>,
}

/// Independent generator for tree `index`, fixed before any parallel work.
fn tree_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

impl RandomForest {
    pub fn fit(data: &Dataset, params: &ForestParams) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::invalid("cannot fit a forest on zero samples"));
        }
        if params.n_trees == 0 {
            return Err(Error::invalid("forest needs at least one tree"));
        }
        if let Some(k) = params.features_per_split {
            if k == 0 || k > data.n_features() {
                return Err(Error::invalid(format!(
                    "features_per_split {k} must be in 1..={}",
                    data.n_features()
                )));
            }
        }
        let tree_params = TreeParams {
            max_depth: params.max_depth,
            min_samples_split: params.min_samples_split,
            max_features: Some(params.resolved_features_per_split(data.n_features())),
        };
        let n = data.len();
        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|i| {
                let mut rng = tree_rng(params.seed, i);
                let rows: Vec<usize> = if params.bootstrap {
                    (0..n).map(|_| rng.random_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                DecisionTree::fit_rows(data, rows, &tree_params, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RandomForest {
            n_features: data.n_features(),
            trees,
        })
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    /// Votes per class, one per tree.
    pub fn votes(&self, features: &[f64]) -> Result<[usize; Stage::COUNT]> {
        check_input(features, self.n_features)?;
        if self.trees.is_empty() {
            return Err(Error::InvalidState("forest has no trees".into()));
        }
        let mut votes = [0; Stage::COUNT];
        for t in &self.trees {
            let p = super::tree::normalize_counts(t.leaf_counts(features));
            votes[Stage::argmax(&p).index()] += 1;
        }
        Ok(votes)
    }

    pub fn from_trees(trees: Vec<DecisionTree>) -> Result<Self> {
        let n_features = trees.first().map_or(0, |t| t.n_features());
        if trees.iter().any(|t| t.n_features() != n_features) {
            return Err(Error::invalid("trees disagree on feature count"));
        }
        Ok(RandomForest { n_features, trees })
    }
}

impl Classifier for RandomForest {
    fn n_features(&self) -> usize {
        self.n_features
    }

    /// Fraction of trees voting for each class.
    fn predict_proba(&self, features: &[f64]) -> Result<[f64; 3]> {
        let votes = self.votes(features)?;
        let n = self.trees.len() as f64;
        Ok(votes.map(|v| v as f64 / n))
    }
}
