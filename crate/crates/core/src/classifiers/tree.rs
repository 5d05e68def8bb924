//! CART decision tree with Gini impurity.

use ndarray::Array2;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_input, Classifier, Dataset};
use crate::error::{Error, Result};
use crate::stage::Stage;

/// Splits must lower weighted impurity by more than this to count.
/// Guards against accepting rounding noise as an improvement.
pub const MIN_IMPURITY_DECREASE: f64 = 1e-12;

/// `1 - sum(p_i^2)` over class proportions.
pub fn gini_impurity(counts: &[usize; Stage::COUNT]) -> Result<f64> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(Error::invalid("gini impurity of an empty node"));
    }
    Ok(gini_of(counts, total))
}

fn gini_of(counts: &[usize; Stage::COUNT], total: usize) -> f64 {
    let n = total as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    pub impurity_decrease: f64,
}

/// Exhaustive search over midpoints between consecutive distinct values of
/// each candidate feature. Ties keep the lower feature index, then the lower
/// threshold. `None` when no split lowers impurity.
pub fn best_split(
    features: &Array2<f64>,
    labels: &[Stage],
    rows: &[usize],
    candidates: &[usize],
) -> Option<SplitCandidate> {
    if rows.len() < 2 {
        return None;
    }
    let mut parent_counts = [0usize; Stage::COUNT];
    for &r in rows {
        parent_counts[labels[r].index()] += 1;
    }
    let n = rows.len();
    let parent = gini_of(&parent_counts, n);
    if parent == 0.0 {
        return None;
    }

    let mut sorted_candidates = candidates.to_vec();
    sorted_candidates.sort_unstable();
    sorted_candidates.dedup();

    let mut best: Option<SplitCandidate> = None;
    let mut column: Vec<(f64, usize)> = Vec::with_capacity(n);
    for &f in &sorted_candidates {
        column.clear();
        column.extend(rows.iter().map(|&r| (features[[r, f]], labels[r].index())));
        column.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));

        let mut left = [0usize; Stage::COUNT];
        for i in 0..n - 1 {
            left[column[i].1] += 1;
            let (lo, hi) = (column[i].0, column[i + 1].0);
            if lo == hi {
                continue;
            }
            let n_left = i + 1;
            let n_right = n - n_left;
            let mut right = parent_counts;
            for c in 0..Stage::COUNT {
                right[c] -= left[c];
            }
            let weighted = (n_left as f64 / n as f64) * gini_of(&left, n_left)
                + (n_right as f64 / n as f64) * gini_of(&right, n_right);
            let decrease = parent - weighted;
            // near-equal decreases count as ties and keep the earlier split
            if decrease > MIN_IMPURITY_DECREASE
                && best.is_none_or(|b| decrease > b.impurity_decrease + MIN_IMPURITY_DECREASE)
            {
                best = Some(SplitCandidate {
                    feature: f,
                    threshold: midpoint(lo, hi),
                    impurity_decrease: decrease,
                });
            }
        }
    }
    best
}

/// Threshold strictly above `lo` and at most `hi`, so `lo` routes left and
/// `hi` routes right.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid > lo && mid <= hi {
        mid
    } else {
        hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// `None` grows until leaves are pure or unsplittable.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    /// Features sampled as split candidates at each node; `None` uses all.
    pub max_features: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: Some(25),
            min_samples_split: 2,
            max_features: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    /// `x[feature] < threshold` goes left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        counts: [usize; Stage::COUNT],
    },
}

/// Nodes are stored in an arena; index 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    n_features: usize,
    nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn fit(data: &Dataset, params: &TreeParams) -> Result<Self> {
        let rows: Vec<usize> = (0..data.len()).collect();
        Self::fit_rows(data, rows, params, &mut ChaCha8Rng::seed_from_u64(0))
    }

    /// Fits on the given row indices (duplicates allowed, as in a bootstrap
    /// resample). `rng` drives feature subsampling only.
    pub fn fit_rows<R: Rng>(
        data: &Dataset,
        rows: Vec<usize>,
        params: &TreeParams,
        rng: &mut R,
    ) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("cannot fit a tree on zero samples"));
        }
        let n_features = data.n_features();
        if let Some(k) = params.max_features {
            if k == 0 || k > n_features {
                return Err(Error::invalid(format!(
                    "max_features {k} must be in 1..={n_features}"
                )));
            }
        }
        let mut tree = DecisionTree {
            n_features,
            nodes: Vec::new(),
        };
        let mut builder = Builder {
            data,
            params,
            rng,
            all_features: (0..n_features).collect(),
        };
        builder.grow(&mut tree.nodes, rows, 0);
        Ok(tree)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Leaf class counts reached by `features`.
    pub fn leaf_counts(&self, features: &[f64]) -> &[usize; Stage::COUNT] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { counts } => return counts,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if features[*feature] < *threshold {
                        *left
                    } else {
                        *right
                    }
                }
            }
        }
    }

    /// Hand-assembled tree; used for tests and tooling.
    pub fn from_nodes(n_features: usize, nodes: Vec<Node>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::invalid("tree needs at least one node"));
        }
        for n in &nodes {
            match *n {
                Node::Split {
                    feature,
                    left,
                    right,
                    ..
                } if feature >= n_features || left >= nodes.len() || right >= nodes.len() => {
                    return Err(Error::invalid("split node references out of range"));
                }
                Node::Leaf { counts } if counts.iter().sum::<usize>() == 0 => {
                    return Err(Error::invalid("leaf with no samples"));
                }
                _ => {}
            }
        }
        Ok(DecisionTree { n_features, nodes })
    }
}

struct Builder<'a, R> {
    data: &'a Dataset,
    params: &'a TreeParams,
    rng: &'a mut R,
    all_features: Vec<usize>,
}

impl<R: Rng> Builder<'_, R> {
    fn grow(&mut self, nodes: &mut Vec<Node>, rows: Vec<usize>, depth: usize) -> usize {
        let mut counts = [0usize; Stage::COUNT];
        for &r in &rows {
            counts[self.data.labels[r].index()] += 1;
        }
        let id = nodes.len();
        nodes.push(Node::Leaf { counts });

        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let depth_reached = self.params.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_reached || rows.len() < self.params.min_samples_split.max(2) {
            return id;
        }
        let candidates = match self.params.max_features {
            Some(k) if k < self.all_features.len() => {
                sample(self.rng, self.all_features.len(), k).into_vec()
            }
            _ => self.all_features.clone(),
        };
        let Some(split) = best_split(&self.data.features, &self.data.labels, &rows, &candidates)
        else {
            return id;
        };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .into_iter()
            .partition(|&r| self.data.features[[r, split.feature]] < split.threshold);
        let left = self.grow(nodes, left_rows, depth + 1);
        let right = self.grow(nodes, right_rows, depth + 1);
        nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }
}

pub(crate) fn normalize_counts(counts: &[usize; Stage::COUNT]) -> [f64; 3] {
    let total: usize = counts.iter().sum();
    counts.map(|c| c as f64 / total as f64)
}

impl Classifier for DecisionTree {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_proba(&self, features: &[f64]) -> Result<[f64; 3]> {
        check_input(features, self.n_features)?;
        Ok(normalize_counts(self.leaf_counts(features)))
    }
}
