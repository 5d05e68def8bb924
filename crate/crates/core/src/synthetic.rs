//! Seeded class-conditional data: raw EEG/EMG epochs, or feature rows
//! sampled directly in feature space.
//!
//! Default prototypes:
//!
//! | class | EEG band (Hz) | EEG amplitude | EMG level | activity | noise |
//! |-------|---------------|---------------|-----------|----------|-------|
//! | S     | 0.5 – 4.0     | 4.0           | 0.20      | 0.20     | 1.0   |
//! | P     | 6.0 – 9.0     | 1.5           | 0.05      | 0.02     | 1.0   |
//! | W     | 0.5 – 20.0    | 1.0           | 1.00      | 3.00     | 1.0   |
//!
//! Epochs are emitted in bouts of 3–30 same-class epochs so that the 5-epoch
//! windows see realistic transitions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledRow;
use crate::error::{Error, Result};
use crate::signal_features::{
    samples_per_epoch, RawEpoch, BAND_WIDTH_HZ, EPOCH_SECONDS, MAX_BAND_HZ,
};
use crate::stage::Stage;
use crate::{FEATURES_PER_EPOCH, N_BANDS};

const MIN_BOUT: usize = 3;
const MAX_BOUT: usize = 30;
/// Sinusoids per synthetic EEG epoch.
const COMPONENTS: usize = 3;
/// Log-space spread of the per-epoch gain shared by all EEG bands, relative
/// to the class noise scale.
const GAIN_SPREAD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPrototype {
    pub label: Stage,
    /// Dominant EEG band `[lo, hi)` in Hz.
    pub band_hz: (f64, f64),
    pub eeg_amplitude: f64,
    pub emg_level: f64,
    pub activity_level: f64,
    /// Raw generator: white-noise sd at separability 0. Feature generator:
    /// per-feature log-space sd.
    pub noise_scale: f64,
}

impl ClassPrototype {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.band_hz;
        if !(0.0 <= lo && lo < hi && hi <= MAX_BAND_HZ) {
            return Err(Error::invalid(format!(
                "class {} band {lo}..{hi} Hz outside [0, 20)",
                self.label
            )));
        }
        for (name, v) in [
            ("amplitude", self.eeg_amplitude),
            ("EMG level", self.emg_level),
            ("activity level", self.activity_level),
            ("noise scale", self.noise_scale),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!(
                    "class {} {name} must be >= 0",
                    self.label
                )));
            }
        }
        Ok(())
    }
}

/// Prototypes in P, S, W order.
pub fn default_prototypes() -> [ClassPrototype; 3] {
    [
        ClassPrototype {
            label: Stage::Paradoxical,
            band_hz: (6.0, 9.0),
            eeg_amplitude: 1.5,
            emg_level: 0.05,
            activity_level: 0.02,
            noise_scale: 1.0,
        },
        ClassPrototype {
            label: Stage::SlowWave,
            band_hz: (0.5, 4.0),
            eeg_amplitude: 4.0,
            emg_level: 0.2,
            activity_level: 0.2,
            noise_scale: 1.0,
        },
        ClassPrototype {
            label: Stage::Wake,
            band_hz: (0.5, 20.0),
            eeg_amplitude: 1.0,
            emg_level: 1.0,
            activity_level: 3.0,
            noise_scale: 1.0,
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// Indexed by class (P, S, W).
    pub prototypes: [ClassPrototype; 3],
    pub epochs_per_class: usize,
    pub seed: u64,
    /// In (0, 1]; 1 keeps prototypes fully apart, toward 0 they merge.
    pub separability: f64,
}

impl SyntheticSpec {
    pub fn new(epochs_per_class: usize, separability: f64, seed: u64) -> Self {
        SyntheticSpec {
            prototypes: default_prototypes(),
            epochs_per_class,
            seed,
            separability,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs_per_class == 0 {
            return Err(Error::invalid("epochs per class must be at least 1"));
        }
        if !(self.separability > 0.0 && self.separability <= 1.0) {
            return Err(Error::invalid(format!(
                "separability {} outside (0, 1]",
                self.separability
            )));
        }
        for (i, p) in self.prototypes.iter().enumerate() {
            p.validate()?;
            if p.label.index() != i {
                return Err(Error::invalid("prototypes must be ordered P, S, W"));
            }
        }
        Ok(())
    }
}

/// Class sequence: bouts of random length until every class has emitted
/// exactly `per_class` epochs.
fn bout_sequence(per_class: usize, rng: &mut ChaCha8Rng) -> Vec<Stage> {
    let mut remaining = [per_class; Stage::COUNT];
    let mut out = Vec::with_capacity(per_class * Stage::COUNT);
    let mut previous: Option<Stage> = None;
    loop {
        let open: Vec<Stage> = Stage::ALL
            .into_iter()
            .filter(|s| remaining[s.index()] > 0 && Some(*s) != previous)
            .collect();
        let choice = match open.len() {
            0 => match previous {
                Some(p) if remaining[p.index()] > 0 => p,
                _ => break,
            },
            n => open[rng.random_range(0..n)],
        };
        let len = rng
            .random_range(MIN_BOUT..=MAX_BOUT)
            .min(remaining[choice.index()]);
        remaining[choice.index()] -= len;
        out.extend(std::iter::repeat_n(choice, len));
        previous = Some(choice);
    }
    out
}

/// Raw EEG/EMG epochs with labels. EEG is a sum of sinusoids placed on the
/// 0.1 Hz grid of a 10 s epoch inside the class band, plus white noise of sd
/// `noise_scale * (1 - separability)`.
pub fn generate_raw(spec: &SyntheticSpec, sample_rate_hz: f64) -> Result<Vec<(RawEpoch, Stage)>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sequence = bout_sequence(spec.epochs_per_class, &mut rng);
    let n = samples_per_epoch(sample_rate_hz);
    let spread = 1.0 - spec.separability;
    let grid = 1.0 / EPOCH_SECONDS;

    sequence
        .into_iter()
        .map(|label| {
            let proto = &spec.prototypes[label.index()];
            // grid indices k with k / 10 Hz inside [lo, hi)
            let lo = (proto.band_hz.0 * EPOCH_SECONDS - 1e-9).ceil() as i64;
            let hi = ((proto.band_hz.1 * EPOCH_SECONDS - 1e-9).ceil() as i64 - 1).max(lo);
            let components: Vec<(f64, f64, f64)> = (0..COMPONENTS)
                .map(|_| {
                    let freq = rng.random_range(lo..=hi) as f64 * grid;
                    let amp = proto.eeg_amplitude * rng.random_range(0.5..1.0);
                    let phase = rng.random_range(0.0..std::f64::consts::TAU);
                    (freq, amp, phase)
                })
                .collect();
            let eeg_noise = proto.noise_scale * spread;
            let eeg: Vec<f64> = (0..n)
                .map(|i| {
                    let t = i as f64 / sample_rate_hz;
                    let clean: f64 = components
                        .iter()
                        .map(|(f, a, p)| a * (std::f64::consts::TAU * f * t + p).sin())
                        .sum();
                    let z: f64 = StandardNormal.sample(&mut rng);
                    clean + eeg_noise * z
                })
                .collect();
            let emg: Vec<f64> = (0..n)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    proto.emg_level * z
                })
                .collect();
            let z: f64 = StandardNormal.sample(&mut rng);
            let activity = proto.activity_level * (0.5 * proto.noise_scale * spread * z).exp();
            Ok((RawEpoch::new(eeg, emg, activity, sample_rate_hz)?, label))
        })
        .collect()
}

/// Mean log-feature profile of a prototype: pink background plus the class
/// band's power, then log EMG and log activity.
pub fn log_profile(proto: &ClassPrototype) -> [f64; FEATURES_PER_EPOCH] {
    let mut out = [0.0; FEATURES_PER_EPOCH];
    let (lo, hi) = proto.band_hz;
    for (i, slot) in out.iter_mut().take(N_BANDS).enumerate() {
        let center = (i as f64 + 0.5) * BAND_WIDTH_HZ;
        let background = 1.0 / (1.0 + center);
        let in_band = center >= lo && center < hi;
        let signal = if in_band {
            proto.eeg_amplitude.powi(2)
        } else {
            0.0
        };
        *slot = (background + signal).ln();
    }
    out[N_BANDS] = proto.emg_level.max(1e-6).ln();
    out[N_BANDS + 1] = proto.activity_level.max(1e-6).ln();
    out
}

/// Class means in log-feature space, pulled toward the across-class mean
/// by `separability`.
pub fn class_log_means(spec: &SyntheticSpec) -> [[f64; FEATURES_PER_EPOCH]; 3] {
    let profiles = spec.prototypes.clone().map(|p| log_profile(&p));
    let mut center = [0.0; FEATURES_PER_EPOCH];
    for p in &profiles {
        for (c, v) in center.iter_mut().zip(p) {
            *c += v / 3.0;
        }
    }
    profiles.map(|p| {
        let mut m = [0.0; FEATURES_PER_EPOCH];
        for j in 0..FEATURES_PER_EPOCH {
            m[j] = center[j] + spec.separability * (p[j] - center[j]);
        }
        m
    })
}

/// Feature rows drawn from per-class Gaussians in log space: independent
/// per-feature noise of sd `noise_scale`, plus one gain term shared by all
/// 40 EEG bands. Values are exponentiated, so every feature is positive.
pub fn generate_features(spec: &SyntheticSpec) -> Result<Vec<LabeledRow>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sequence = bout_sequence(spec.epochs_per_class, &mut rng);
    let means = class_log_means(spec);
    Ok(sequence
        .into_iter()
        .map(|label| {
            let proto = &spec.prototypes[label.index()];
            let noise = Normal::new(0.0, proto.noise_scale).expect("validated sd");
            let z: f64 = StandardNormal.sample(&mut rng);
            let gain = GAIN_SPREAD * proto.noise_scale * z;
            let mut features = [0.0; FEATURES_PER_EPOCH];
            for (j, f) in features.iter_mut().enumerate() {
                let shared = if j < N_BANDS { gain } else { 0.0 };
                *f = (means[label.index()][j] + shared + noise.sample(&mut rng)).exp();
            }
            LabeledRow { features, label }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::class_distribution;
    use crate::signal_features::extract_features;

    #[test]
    fn default_prototype_properties() {
        let [p, s, w] = default_prototypes();
        assert!(s.band_hz.0 >= 0.5 && s.band_hz.1 <= 4.0);
        assert!(p.emg_level < w.emg_level);
        for proto in [p, s, w] {
            proto.validate().unwrap();
        }
    }

    #[test]
    fn spec_validation() {
        assert!(SyntheticSpec::new(0, 0.5, 1).validate().is_err());
        assert!(SyntheticSpec::new(1, 0.0, 1).validate().is_err());
        assert!(SyntheticSpec::new(1, 1.5, 1).validate().is_err());
        let mut spec = SyntheticSpec::new(1, 1.0, 1);
        spec.prototypes.swap(0, 1);
        assert!(spec.validate().is_err());
    }

    #[test]
    fn bouts_emit_exact_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for per in [1, 2, 7, 100] {
            let seq = bout_sequence(per, &mut rng);
            assert_eq!(class_distribution(&seq).counts, [per; 3]);
        }
    }

    #[test]
    fn one_epoch_per_class_gives_three() {
        let raw = generate_raw(&SyntheticSpec::new(1, 1.0, 9), 100.0).unwrap();
        assert_eq!(raw.len(), 3);
        let rows = generate_features(&SyntheticSpec::new(1, 1.0, 9)).unwrap();
        assert_eq!(rows.len(), 3);
    }

    #[test]
    fn generators_are_deterministic() {
        let spec = SyntheticSpec::new(4, 0.7, 123);
        assert_eq!(
            generate_raw(&spec, 100.0).unwrap(),
            generate_raw(&spec, 100.0).unwrap()
        );
        assert_eq!(
            generate_features(&spec).unwrap(),
            generate_features(&spec).unwrap()
        );
        let other = SyntheticSpec::new(4, 0.7, 124);
        assert_ne!(
            generate_features(&spec).unwrap(),
            generate_features(&other).unwrap()
        );
    }

    #[test]
    fn clean_slow_wave_epochs_peak_below_four_hz() {
        let raw = generate_raw(&SyntheticSpec::new(5, 1.0, 2), 200.0).unwrap();
        for (epoch, label) in raw.iter().filter(|(_, l)| *l == Stage::SlowWave) {
            let row = extract_features(epoch).unwrap();
            let argmax = row
                .eeg_bands
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            assert!((1..=7).contains(&argmax), "{label}: band {argmax}");
        }
    }

    #[test]
    fn feature_rows_are_finite_and_positive() {
        for row in generate_features(&SyntheticSpec::new(50, 0.3, 4)).unwrap() {
            assert!(row.features.iter().all(|v| v.is_finite() && *v > 0.0));
        }
    }

    #[test]
    fn nearest_mean_separates_at_full_separability() {
        let spec = SyntheticSpec::new(100, 1.0, 42);
        let means = class_log_means(&spec);
        let rows = generate_features(&spec).unwrap();
        let correct = rows
            .iter()
            .filter(|r| {
                let logs: Vec<f64> = r.features.iter().map(|v| v.ln()).collect();
                let dist = |m: &[f64; FEATURES_PER_EPOCH]| -> f64 {
                    logs.iter().zip(m).map(|(a, b)| (a - b).powi(2)).sum()
                };
                let best = (0..3)
                    .min_by(|&a, &b| dist(&means[a]).total_cmp(&dist(&means[b])))
                    .unwrap();
                best == r.label.index()
            })
            .count();
        assert!(correct as f64 / rows.len() as f64 >= 0.99, "{correct}");
    }

    #[test]
    fn means_merge_as_separability_vanishes() {
        let means = class_log_means(&SyntheticSpec::new(1, 1e-12, 0));
        for ((p, s), w) in means[0].iter().zip(&means[1]).zip(&means[2]) {
            assert!((p - s).abs() < 1e-9);
            assert!((s - w).abs() < 1e-9);
        }
    }

    fn silhouette(points: &[Vec<f64>], labels: &[Stage]) -> f64 {
        let dist = |a: &[f64], b: &[f64]| {
            a.iter()
                .zip(b)
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        let mut total = 0.0;
        for (i, p) in points.iter().enumerate() {
            let mut sums = [0.0; 3];
            let mut counts = [0usize; 3];
            for (j, q) in points.iter().enumerate() {
                if i != j {
                    sums[labels[j].index()] += dist(p, q);
                    counts[labels[j].index()] += 1;
                }
            }
            let own = labels[i].index();
            let a = sums[own] / counts[own] as f64;
            let b = (0..3)
                .filter(|&c| c != own)
                .map(|c| sums[c] / counts[c] as f64)
                .fold(f64::INFINITY, f64::min);
            total += (b - a) / a.max(b);
        }
        total / points.len() as f64
    }

    #[test]
    fn raw_epochs_cluster_by_class() {
        let spec = SyntheticSpec::new(8, 1.0, 21);
        let epochs = generate_raw(&spec, 100.0).unwrap();
        let (points, labels): (Vec<Vec<f64>>, Vec<Stage>) = epochs
            .iter()
            .map(|(e, l)| {
                let f = extract_features(e).unwrap().values();
                // log scale keeps one large band from dominating the distance
                (f.iter().map(|v| v.ln_1p()).collect(), *l)
            })
            .unzip();
        let s = silhouette(&points, &labels);
        assert!(s > 0.0, "mean silhouette {s}");
    }
}
