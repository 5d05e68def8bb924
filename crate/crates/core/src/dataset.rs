//! Windowing, class balancing and the seeded train/validation/test split.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::signal_features::FeatureRow;
use crate::stage::Stage;
use crate::FEATURES_PER_EPOCH;

/// An epoch's 42 features with a known label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledRow {
    pub features: [f64; FEATURES_PER_EPOCH],
    pub label: Stage,
}

impl From<LabeledRow> for FeatureRow {
    fn from(row: LabeledRow) -> Self {
        // from_values only fails on length or non-finite input, both excluded here
        FeatureRow::from_values(&row.features, Some(row.label)).expect("labeled row is valid")
    }
}

impl TryFrom<&FeatureRow> for LabeledRow {
    type Error = Error;

    fn try_from(row: &FeatureRow) -> Result<Self> {
        let label = row
            .label
            .ok_or_else(|| Error::invalid("row has no label"))?;
        Ok(LabeledRow {
            features: row.values(),
            label,
        })
    }
}

/// Concatenated features of consecutive epochs (oldest first) with one label.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedSample {
    pub features: Vec<f64>,
    pub label: Stage,
}

/// Anything that carries a class label.
pub trait Labeled {
    fn label(&self) -> Stage;
}

impl Labeled for WindowedSample {
    fn label(&self) -> Stage {
        self.label
    }
}

impl Labeled for LabeledRow {
    fn label(&self) -> Stage {
        self.label
    }
}

impl Labeled for Stage {
    fn label(&self) -> Stage {
        *self
    }
}

/// Most frequent label; any tie for the top count resolves to the center
/// label, whether or not the center is among the tied classes.
pub fn aggregate_label(labels: &[Stage]) -> Result<Stage> {
    if labels.is_empty() {
        return Err(Error::invalid("cannot aggregate an empty label window"));
    }
    let mut counts = [0usize; Stage::COUNT];
    for l in labels {
        counts[l.index()] += 1;
    }
    let top = *counts.iter().max().expect("three counts");
    let mut winners = Stage::ALL.iter().filter(|s| counts[s.index()] == top);
    let first = *winners.next().expect("at least one class reaches the max");
    if winners.next().is_some() {
        Ok(labels[labels.len() / 2])
    } else {
        Ok(first)
    }
}

/// Stride-1 moving window over labeled rows. Produces `n - width + 1` samples.
pub fn window(rows: &[FeatureRow], width: usize) -> Result<Vec<WindowedSample>> {
    if width == 0 {
        return Err(Error::invalid("window width must be at least 1"));
    }
    if rows.len() < width {
        return Err(Error::invalid(format!(
            "need at least {width} rows to form a window, got {}",
            rows.len()
        )));
    }
    let labels = rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            r.label
                .ok_or_else(|| Error::invalid(format!("row {i} has no label")))
        })
        .collect::<Result<Vec<_>>>()?;
    let flat: Vec<[f64; FEATURES_PER_EPOCH]> = rows.iter().map(FeatureRow::values).collect();

    (0..=rows.len() - width)
        .map(|start| {
            let mut features = Vec::with_capacity(width * FEATURES_PER_EPOCH);
            for row in &flat[start..start + width] {
                features.extend_from_slice(row);
            }
            Ok(WindowedSample {
                features,
                label: aggregate_label(&labels[start..start + width])?,
            })
        })
        .collect()
}

/// Per-class counts and fractions, indexed P, S, W.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDistribution {
    pub counts: [usize; Stage::COUNT],
    pub total: usize,
    pub fractions: [f64; Stage::COUNT],
}

impl ClassDistribution {
    pub fn from_counts(counts: [usize; Stage::COUNT]) -> Self {
        let total = counts.iter().sum();
        let fractions = if total == 0 {
            [0.0; Stage::COUNT]
        } else {
            counts.map(|c| c as f64 / total as f64)
        };
        ClassDistribution {
            counts,
            total,
            fractions,
        }
    }

    pub fn count(&self, stage: Stage) -> usize {
        self.counts[stage.index()]
    }

    pub fn fraction(&self, stage: Stage) -> f64 {
        self.fractions[stage.index()]
    }
}

impl std::fmt::Display for ClassDistribution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "Total: {}", self.total)?;
        for s in Stage::ALL {
            writeln!(
                f,
                "{}: {} ({:.2}%)",
                s,
                self.count(s),
                100.0 * self.fraction(s)
            )?;
        }
        Ok(())
    }
}

pub fn class_distribution<T: Labeled>(samples: &[T]) -> ClassDistribution {
    let mut counts = [0usize; Stage::COUNT];
    for s in samples {
        counts[s.label().index()] += 1;
    }
    ClassDistribution::from_counts(counts)
}

/// Copy multiplier per class: `round(max_count / count)`, at least 1.
pub fn replication_factors(counts: &[usize]) -> Result<Vec<usize>> {
    if let Some(i) = counts.iter().position(|&c| c == 0) {
        return Err(Error::invalid(format!("class {i} has no samples")));
    }
    let max = counts.iter().copied().max().unwrap_or(0) as f64;
    Ok(counts
        .iter()
        .map(|&c| ((max / c as f64).round() as usize).max(1))
        .collect())
}

/// Appends `k_c - 1` whole copies of every class-`c` sample, class by class
/// in P, S, W order. The input order is kept as the prefix.
pub fn balance<T: Labeled + Clone>(samples: &[T]) -> Result<Vec<T>> {
    let dist = class_distribution(samples);
    let absent: Vec<String> = Stage::ALL
        .iter()
        .filter(|s| dist.count(**s) == 0)
        .map(|s| s.to_string())
        .collect();
    if !absent.is_empty() {
        return Err(Error::invalid(format!(
            "cannot balance: no samples for class(es) {}",
            absent.join(", ")
        )));
    }
    let factors = replication_factors(&dist.counts)?;
    let extra: usize = Stage::ALL
        .iter()
        .map(|s| (factors[s.index()] - 1) * dist.count(*s))
        .sum();
    let mut out = Vec::with_capacity(samples.len() + extra);
    out.extend_from_slice(samples);
    for stage in Stage::ALL {
        for _ in 1..factors[stage.index()] {
            out.extend(samples.iter().filter(|s| s.label() == stage).cloned());
        }
    }
    Ok(out)
}

/// Index-level partition of a sample set into train, validation and test.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSplit {
    pub seed: u64,
    pub test_fraction: f64,
    pub validation_fraction: f64,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl DataSplit {
    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Clones the samples at `indices`, in index order.
pub fn select<T: Clone>(samples: &[T], indices: &[usize]) -> Vec<T> {
    indices.iter().map(|&i| samples[i].clone()).collect()
}

/// Fisher–Yates shuffle. Draws are taken as `u64` so the sequence does not
/// depend on the platform's pointer width.
pub fn shuffle<T, R: Rng>(items: &mut [T], rng: &mut R) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i as u64) as usize;
        items.swap(i, j);
    }
}

/// Seeded uniform permutation of `0..n`.
pub fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    shuffle(&mut order, &mut ChaCha8Rng::seed_from_u64(seed));
    order
}

/// Shuffles `0..n` with `seed`, then cuts the permutation into contiguous
/// train, validation and test parts. `validation_fraction` is taken from
/// the non-test remainder, so 0.2 and 0.2 give 64/16/20.
pub fn split(
    n: usize,
    seed: u64,
    test_fraction: f64,
    validation_fraction: f64,
) -> Result<DataSplit> {
    if n == 0 {
        return Err(Error::invalid("cannot split an empty sample set"));
    }
    for (name, f) in [("test", test_fraction), ("validation", validation_fraction)] {
        if !(0.0..1.0).contains(&f) {
            return Err(Error::invalid(format!(
                "{name} fraction {f} is outside [0, 1)"
            )));
        }
    }
    let n_test = (n as f64 * test_fraction).round() as usize;
    let rest = n - n_test;
    let n_val = (rest as f64 * validation_fraction).round() as usize;
    let n_train = rest - n_val;

    let order = permutation(n, seed);
    Ok(DataSplit {
        seed,
        test_fraction,
        validation_fraction,
        train: order[..n_train].to_vec(),
        validation: order[n_train..n_train + n_val].to_vec(),
        test: order[n_train + n_val..].to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use Stage::{Paradoxical as P, SlowWave as S, Wake as W};

    fn rows(labels: &[Stage]) -> Vec<FeatureRow> {
        labels
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                let mut v = [0.0; FEATURES_PER_EPOCH];
                v[0] = i as f64;
                v[41] = 100.0 + i as f64;
                FeatureRow::from_values(&v, Some(l)).unwrap()
            })
            .collect()
    }

    #[test]
    fn aggregate_examples() {
        assert_eq!(aggregate_label(&[S, S, S, W, W]).unwrap(), S);
        assert_eq!(aggregate_label(&[P, P, S, S, W]).unwrap(), S);
        assert_eq!(aggregate_label(&[P, P, W, S, S]).unwrap(), W);
        assert!(aggregate_label(&[]).is_err());
    }

    #[test]
    fn window_minimum_input() {
        let r = rows(&[P, S, S, W, S]);
        let out = window(&r, 5).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].features.len(), 210);
        assert_eq!(out[0].label, S);
        for j in 0..5 {
            assert_eq!(out[0].features[42 * j], j as f64);
            assert_eq!(out[0].features[42 * j + 41], 100.0 + j as f64);
        }
    }

    #[test]
    fn window_stride_is_one() {
        let out = window(&rows(&[P, P, P, W, W, W]), 5).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].features[0], 0.0);
        assert_eq!(out[1].features[0], 1.0);
        assert_eq!(out[1].features[42 * 4], 5.0);
        assert_eq!(out[0].label, P);
        assert_eq!(out[1].label, W);
    }

    #[test]
    fn window_errors() {
        assert!(window(&rows(&[P, P, P, P]), 5).is_err());
        let mut r = rows(&[P, P, P, P, P, P]);
        r[3].label = None;
        let err = window(&r, 5).unwrap_err();
        assert!(err.to_string().contains("row 3"), "{err}");
    }

    #[test]
    fn balance_two_class_arithmetic() {
        assert_eq!(replication_factors(&[10, 30]).unwrap(), vec![3, 1]);
        assert_eq!(
            replication_factors(&[10_028, 64_539, 79_472]).unwrap(),
            vec![8, 1, 1]
        );
        assert!(replication_factors(&[0, 4]).is_err());
    }

    #[test]
    fn balance_no_op_when_balanced() {
        let input = vec![P, S, W, W, S, P];
        assert_eq!(balance(&input).unwrap(), input);
    }

    #[test]
    fn balance_appends_whole_classes() {
        let input = vec![S, P, S, W, S, W, S, W];
        let out = balance(&input).unwrap();
        // max 4; P: round(4/1)=4, W: round(4/3)=1
        assert_eq!(&out[..input.len()], &input[..]);
        assert_eq!(&out[input.len()..], &[P, P, P]);
        let err = balance(&[P, S]).unwrap_err();
        assert!(err.to_string().contains('W'), "{err}");
    }

    #[test]
    fn distribution_empty_and_basic() {
        let d = class_distribution::<Stage>(&[]);
        assert_eq!(d.total, 0);
        assert_eq!(d.fractions, [0.0; 3]);
        let d = class_distribution(&[P, S, S, W]);
        assert_eq!(d.counts, [1, 2, 1]);
        assert_eq!(d.fraction(S), 0.5);
    }

    #[test]
    fn split_sizes() {
        let s = split(100, 7, 0.2, 0.0).unwrap();
        assert_eq!(
            (s.train.len(), s.validation.len(), s.test.len()),
            (80, 0, 20)
        );
        let s = split(100, 7, 0.2, 0.2).unwrap();
        assert_eq!(
            (s.train.len(), s.validation.len(), s.test.len()),
            (64, 16, 20)
        );
        assert!(split(0, 1, 0.2, 0.0).is_err());
        assert!(split(10, 1, 1.0, 0.0).is_err());
        assert!(split(10, 1, 0.2, -0.1).is_err());
    }

    #[test]
    fn split_is_seed_deterministic() {
        let a = split(1000, 42, 0.2, 0.2).unwrap();
        let b = split(1000, 42, 0.2, 0.2).unwrap();
        assert_eq!(a, b);
        let c = split(1000, 43, 0.2, 0.2).unwrap();
        assert_ne!(a.train, c.train);
    }

    fn stage_strategy() -> impl Strategy<Value = Stage> {
        (0usize..3).prop_map(|i| Stage::ALL[i])
    }

    proptest! {
        #[test]
        fn window_length_is_n_minus_four(labels in proptest::collection::vec(stage_strategy(), 5..60)) {
            let out = window(&rows(&labels), 5).unwrap();
            prop_assert_eq!(out.len(), labels.len() - 4);
        }

        #[test]
        fn balance_multiplies_class_counts(labels in proptest::collection::vec(stage_strategy(), 3..200)) {
            prop_assume!(Stage::ALL.iter().all(|s| labels.contains(s)));
            let before = class_distribution(&labels);
            let after = class_distribution(&balance(&labels).unwrap());
            let k = replication_factors(&before.counts).unwrap();
            for s in Stage::ALL {
                prop_assert_eq!(after.count(s), k[s.index()] * before.count(s));
            }
        }

        #[test]
        fn split_partitions_indices(n in 1usize..500, seed in any::<u64>(), tf in 0.0f64..0.9, vf in 0.0f64..0.9) {
            let s = split(n, seed, tf, vf).unwrap();
            let mut all: Vec<usize> = s.train.iter().chain(&s.validation).chain(&s.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            prop_assert!((s.test.len() as f64 - n as f64 * tf).abs() <= 1.0);
            let rest = n as f64 * (1.0 - tf);
            prop_assert!((s.validation.len() as f64 - rest * vf).abs() <= 1.0 + vf);
        }

        #[test]
        fn fractions_sum_to_one(labels in proptest::collection::vec(stage_strategy(), 1..300)) {
            let d = class_distribution(&labels);
            prop_assert!((d.fractions.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert_eq!(d.counts.iter().sum::<usize>(), d.total);
        }
    }
}
