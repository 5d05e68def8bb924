//! Confusion matrix, derived classification metrics and one-vs-rest ROC AUC.
//!
//! Orientation is fixed everywhere: rows are the true class, columns the
//! predicted class, in P, S, W order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stage::Stage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; Stage::COUNT]; Stage::COUNT],
}

impl ConfusionMatrix {
    pub fn get(&self, truth: Stage, predicted: Stage) -> u64 {
        self.counts[truth.index()][predicted.index()]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..Stage::COUNT).map(|i| self.counts[i][i]).sum()
    }

    /// Number of samples whose true class is `c`.
    pub fn row_sum(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }

    /// Number of samples predicted as `c`.
    pub fn column_sum(&self, c: usize) -> u64 {
        self.counts.iter().map(|r| r[c]).sum()
    }
}

pub fn confusion_matrix(truth: &[Stage], predicted: &[Stage]) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(Error::invalid(format!(
            "{} true labels but {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::invalid("no labels to compare"));
    }
    let mut cm = ConfusionMatrix::default();
    for (t, p) in truth.iter().zip(predicted) {
        cm.counts[t.index()][p.index()] += 1;
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// One-vs-rest AUC per class; `None` where the class had no positives or no
/// negatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucReport {
    pub per_class: [Option<f64>; Stage::COUNT],
    /// Unweighted mean over the scored classes.
    pub macro_auc: f64,
}

impl AucReport {
    pub fn skipped(&self) -> Vec<Stage> {
        Stage::ALL
            .into_iter()
            .filter(|s| self.per_class[s.index()].is_none())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    pub per_class: [ClassMetrics; Stage::COUNT],
    pub macro_f1: f64,
    pub auc: Option<AucReport>,
    /// Zero-denominator and skipped-class notices.
    pub warnings: Vec<String>,
}

impl MetricsReport {
    pub fn class(&self, s: Stage) -> &ClassMetrics {
        &self.per_class[s.index()]
    }

    pub fn macro_precision(&self) -> f64 {
        self.per_class.iter().map(|c| c.precision).sum::<f64>() / Stage::COUNT as f64
    }

    pub fn macro_recall(&self) -> f64 {
        self.per_class.iter().map(|c| c.recall).sum::<f64>() / Stage::COUNT as f64
    }

    pub fn with_auc(mut self, auc: AucReport) -> Self {
        for s in auc.skipped() {
            self.warnings.push(format!(
                "class {s}: AUC skipped (no positive or no negative samples)"
            ));
        }
        self.auc = Some(auc);
        self
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Accuracy, per-class precision/recall/F1 and macro F1. Zero denominators
/// produce 0 plus a warning.
pub fn derive_metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::invalid("confusion matrix is empty"));
    }
    let mut warnings = Vec::new();
    let per_class = Stage::ALL.map(|s| {
        let c = s.index();
        let tp = cm.counts[c][c];
        let precision = ratio(tp, cm.column_sum(c)).unwrap_or_else(|| {
            warnings.push(format!(
                "class {s}: precision undefined (never predicted), reported as 0"
            ));
            0.0
        });
        let recall = ratio(tp, cm.row_sum(c)).unwrap_or_else(|| {
            warnings.push(format!(
                "class {s}: recall undefined (absent from truth), reported as 0"
            ));
            0.0
        });
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        ClassMetrics {
            precision,
            recall,
            f1,
        }
    });
    Ok(MetricsReport {
        confusion: *cm,
        accuracy: cm.trace() as f64 / total as f64,
        macro_f1: per_class.iter().map(|c| c.f1).sum::<f64>() / Stage::COUNT as f64,
        per_class,
        auc: None,
        warnings,
    })
}

/// Mann–Whitney AUC with midranks for ties: the probability that a random
/// positive scores above a random negative, ties counting one half.
/// `None` when either side is empty.
pub fn binary_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // 1-based ranks start+1 ..= end share their mean
        let midrank = (start + 1 + end) as f64 / 2.0;
        let group_pos = order[start..end].iter().filter(|&&i| positive[i]).count();
        rank_sum += midrank * group_pos as f64;
        start = end;
    }
    let n_pos_f = n_pos as f64;
    Some((rank_sum - n_pos_f * (n_pos_f + 1.0) / 2.0) / (n_pos_f * n_neg as f64))
}

pub fn roc_auc_ovr(truth: &[Stage], probabilities: &[[f64; 3]]) -> Result<AucReport> {
    if truth.len() != probabilities.len() {
        return Err(Error::invalid(format!(
            "{} labels but {} probability rows",
            truth.len(),
            probabilities.len()
        )));
    }
    if let Some(i) = probabilities.iter().position(|p| {
        p.iter().any(|v| !v.is_finite()) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-6
    }) {
        return Err(Error::invalid(format!(
            "probability row {i} does not sum to 1"
        )));
    }
    let distinct = Stage::ALL.iter().filter(|s| truth.contains(s)).count();
    if distinct < 2 {
        return Err(Error::invalid("AUC needs at least two distinct classes"));
    }
    let per_class = Stage::ALL.map(|s| {
        let scores: Vec<f64> = probabilities.iter().map(|p| p[s.index()]).collect();
        let positive: Vec<bool> = truth.iter().map(|&t| t == s).collect();
        binary_auc(&scores, &positive)
    });
    let scored: Vec<f64> = per_class.iter().flatten().copied().collect();
    Ok(AucReport {
        macro_auc: scored.iter().sum::<f64>() / scored.len() as f64,
        per_class,
    })
}

/// ROC points for one class against the rest, from (0,0) to (1,1).
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<(f64, f64)>,
}

impl RocCurve {
    /// Trapezoidal area under the points.
    pub fn area(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
            .sum()
    }
}

/// Sweeps the threshold from high to low; tied scores move together.
pub fn roc_curve(scores: &[f64], positive: &[bool]) -> Option<RocCurve> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64));
    }
    Some(RocCurve { points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use Stage::{Paradoxical as P, SlowWave as S, Wake as W};

    fn cm(rows: [[u64; 3]; 3]) -> ConfusionMatrix {
        ConfusionMatrix { counts: rows }
    }

    #[test]
    fn perfect_predictions_are_diagonal() {
        let y: Vec<Stage> = (0..10).map(|i| Stage::ALL[i % 3]).collect();
        let m = confusion_matrix(&y, &y).unwrap();
        assert_eq!(m.counts, [[4, 0, 0], [0, 3, 0], [0, 0, 3]]);
        let r = derive_metrics(&m).unwrap();
        assert_eq!(r.accuracy, 1.0);
    }

    #[test]
    fn hand_counted_cells() {
        let m = confusion_matrix(&[P, S, W], &[S, S, W]).unwrap();
        assert_eq!(m.get(P, S), 1);
        assert_eq!(m.get(S, S), 1);
        assert_eq!(m.get(W, W), 1);
        assert_eq!(m.total(), 3);
        assert!(confusion_matrix(&[P], &[P, S]).is_err());
        assert!(confusion_matrix(&[], &[]).is_err());
    }

    #[test]
    fn tally_matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let t: Vec<Stage> = (0..200)
            .map(|_| Stage::ALL[rng.random_range(0..3)])
            .collect();
        let p: Vec<Stage> = (0..200)
            .map(|_| Stage::ALL[rng.random_range(0..3)])
            .collect();
        let m = confusion_matrix(&t, &p).unwrap();
        for a in Stage::ALL {
            for b in Stage::ALL {
                let n = t
                    .iter()
                    .zip(&p)
                    .filter(|(x, y)| **x == a && **y == b)
                    .count() as u64;
                assert_eq!(m.get(a, b), n);
            }
        }
    }

    #[test]
    fn perfect_diagonal_metrics() {
        let r = derive_metrics(&cm([[10, 0, 0], [0, 10, 0], [0, 0, 10]])).unwrap();
        assert_eq!(r.accuracy, 1.0);
        for c in &r.per_class {
            assert_eq!((c.precision, c.recall, c.f1), (1.0, 1.0, 1.0));
        }
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn stated_matrix_metrics() {
        let r = derive_metrics(&cm([[5, 0, 5], [0, 10, 0], [0, 0, 10]])).unwrap();
        assert!((r.accuracy - 25.0 / 30.0).abs() < 1e-15);
        let p = r.class(P);
        assert_eq!(p.precision, 1.0);
        assert_eq!(p.recall, 0.5);
        assert!((p.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.class(W).precision - 10.0 / 15.0).abs() < 1e-15);
    }

    #[test]
    fn absent_class_reports_zero_with_warning() {
        let r = derive_metrics(&cm([[0, 0, 0], [0, 8, 2], [0, 1, 9]])).unwrap();
        assert_eq!(
            *r.class(P),
            ClassMetrics {
                precision: 0.0,
                recall: 0.0,
                f1: 0.0
            }
        );
        assert_eq!(r.warnings.len(), 2);
        assert!((r.class(S).precision - 8.0 / 9.0).abs() < 1e-15);
        assert!(derive_metrics(&ConfusionMatrix::default()).is_err());
    }

    #[test]
    fn perfect_ranking_auc_is_one() {
        let truth = vec![P, S, W, P, S, W];
        let probs: Vec<[f64; 3]> = truth
            .iter()
            .map(|t| {
                let mut p = [0.1, 0.1, 0.1];
                p[t.index()] = 0.8;
                p
            })
            .collect();
        let a = roc_auc_ovr(&truth, &probs).unwrap();
        assert_eq!(a.per_class, [Some(1.0); 3]);
        assert_eq!(a.macro_auc, 1.0);
    }

    #[test]
    fn constant_scores_give_half() {
        let truth = vec![P, S, W, W, S];
        let probs = vec![[0.2, 0.3, 0.5]; 5];
        let a = roc_auc_ovr(&truth, &probs).unwrap();
        assert_eq!(a.per_class, [Some(0.5); 3]);
    }

    #[test]
    fn auc_rejects_single_class_and_skips_missing() {
        assert!(roc_auc_ovr(&[W, W], &[[0.0, 0.0, 1.0]; 2]).is_err());
        assert!(roc_auc_ovr(&[W, P], &[[0.0, 0.0, 0.9]; 2]).is_err());
        let a = roc_auc_ovr(&[W, P], &[[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]]).unwrap();
        assert_eq!(a.per_class[S.index()], None);
        assert_eq!(a.skipped(), vec![S]);
        assert_eq!(a.macro_auc, 1.0);
    }

    fn pairwise_auc(scores: &[f64], positive: &[bool]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if positive[i] && !positive[j] {
                    pairs += 1.0;
                    if scores[i] > scores[j] {
                        wins += 1.0;
                    } else if scores[i] == scores[j] {
                        wins += 0.5;
                    }
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn rank_auc_matches_pairwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let n = rng.random_range(2..300);
            // coarse grid forces plenty of ties
            let scores: Vec<f64> = (0..n)
                .map(|_| rng.random_range(0..20) as f64 / 20.0)
                .collect();
            let positive: Vec<bool> = (0..n)
                .map(|i| i == 0 || (i != 1 && rng.random_bool(0.4)))
                .collect();
            let got = binary_auc(&scores, &positive).unwrap();
            assert!((got - pairwise_auc(&scores, &positive)).abs() < 1e-12);
            let curve = roc_curve(&scores, &positive).unwrap();
            assert_eq!(curve.points.first(), Some(&(0.0, 0.0)));
            assert_eq!(curve.points.last(), Some(&(1.0, 1.0)));
            assert!(curve
                .points
                .windows(2)
                .all(|w| w[1].0 >= w[0].0 && w[1].1 >= w[0].1));
            assert!((curve.area() - got).abs() < 1e-12);
        }
    }

    fn matrix_strategy() -> impl Strategy<Value = ConfusionMatrix> {
        proptest::array::uniform3(proptest::array::uniform3(0u64..50))
            .prop_filter("non-empty", |m| m.iter().flatten().sum::<u64>() > 0)
            .prop_map(|counts| ConfusionMatrix { counts })
    }

    proptest! {
        #[test]
        fn micro_recall_equals_accuracy(m in matrix_strategy()) {
            let r = derive_metrics(&m).unwrap();
            let micro_recall = (0..3).map(|c| m.counts[c][c]).sum::<u64>() as f64
                / (0..3).map(|c| m.row_sum(c)).sum::<u64>() as f64;
            prop_assert!((micro_recall - r.accuracy).abs() < 1e-15);
        }

        #[test]
        fn metrics_follow_class_relabeling(m in matrix_strategy(), perm in Just([2usize, 0, 1])) {
            let mut permuted = ConfusionMatrix::default();
            for i in 0..3 {
                for j in 0..3 {
                    permuted.counts[perm[i]][perm[j]] = m.counts[i][j];
                }
            }
            let a = derive_metrics(&m).unwrap();
            let b = derive_metrics(&permuted).unwrap();
            prop_assert_eq!(a.accuracy, b.accuracy);
            for (c, &pc) in perm.iter().enumerate() {
                prop_assert_eq!(a.per_class[c].precision, b.per_class[pc].precision);
                prop_assert_eq!(a.per_class[c].recall, b.per_class[pc].recall);
            }
        }

        #[test]
        fn self_comparison_is_perfect(idx in proptest::collection::vec(0usize..3, 1..100)) {
            let y: Vec<Stage> = idx.iter().map(|&i| Stage::ALL[i]).collect();
            prop_assert_eq!(derive_metrics(&confusion_matrix(&y, &y).unwrap()).unwrap().accuracy, 1.0);
        }
    }
}
