//! Epoch-level feature extraction: EEG band powers from the DFT, EMG
//! summary and activity.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stage::Stage;
use crate::{FEATURES_PER_EPOCH, N_BANDS};

/// Length of one scoring epoch in seconds.
pub const EPOCH_SECONDS: f64 = 10.0;
/// Width of one EEG band in Hz.
pub const BAND_WIDTH_HZ: f64 = 0.5;
/// Upper edge of the highest band in Hz.
pub const MAX_BAND_HZ: f64 = 20.0;
/// Lowest sample rate that resolves content up to 20 Hz.
pub const MIN_SAMPLE_RATE_HZ: f64 = 40.0;
/// Sample rate assumed when none is given.
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 500.0;

/// Number of samples in one epoch at `sample_rate_hz`.
pub fn samples_per_epoch(sample_rate_hz: f64) -> usize {
    (EPOCH_SECONDS * sample_rate_hz).round() as usize
}

/// Number of complete epochs in a recording of `n_samples`.
pub fn epoch_count(n_samples: usize, sample_rate_hz: f64) -> usize {
    match samples_per_epoch(sample_rate_hz) {
        0 => 0,
        per => n_samples / per,
    }
}

/// How the EMG trace of an epoch is reduced to one number.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmgSummary {
    /// Mean of |sample|.
    #[default]
    Rectified,
    /// Root mean square.
    Rms,
}

impl std::str::FromStr for EmgSummary {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rectified" => Ok(EmgSummary::Rectified),
            "rms" => Ok(EmgSummary::Rms),
            other => Err(Error::Config(format!(
                "unknown EMG summary {other:?} (rectified|rms)"
            ))),
        }
    }
}

/// One 10-second segment of EEG and EMG plus its activity count.
#[derive(Debug, Clone, PartialEq)]
pub struct RawEpoch {
    pub eeg: Vec<f64>,
    pub emg: Vec<f64>,
    pub activity: f64,
    pub sample_rate_hz: f64,
}

impl RawEpoch {
    pub fn new(eeg: Vec<f64>, emg: Vec<f64>, activity: f64, sample_rate_hz: f64) -> Result<Self> {
        let epoch = RawEpoch {
            eeg,
            emg,
            activity,
            sample_rate_hz,
        };
        epoch.validate()?;
        Ok(epoch)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz >= MIN_SAMPLE_RATE_HZ) {
            return Err(Error::invalid(format!(
                "sample rate {} Hz is below the {MIN_SAMPLE_RATE_HZ} Hz minimum",
                self.sample_rate_hz
            )));
        }
        let expected = samples_per_epoch(self.sample_rate_hz);
        if self.eeg.len() != expected || self.emg.len() != expected {
            return Err(Error::invalid(format!(
                "epoch needs {expected} EEG and EMG samples, got {} and {}",
                self.eeg.len(),
                self.emg.len()
            )));
        }
        if !(self.activity.is_finite() && self.activity >= 0.0) {
            return Err(Error::invalid(format!(
                "activity must be finite and >= 0, got {}",
                self.activity
            )));
        }
        Ok(())
    }
}

/// One-sided power spectrum `|X_k|^2` for `k = 0..=N/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSpectrum {
    sample_rate_hz: f64,
    n_samples: usize,
    power: Vec<f64>,
}

impl PowerSpectrum {
    /// Wraps an existing one-sided power vector computed from `n_samples` inputs.
    pub fn new(sample_rate_hz: f64, n_samples: usize, power: Vec<f64>) -> Result<Self> {
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if n_samples == 0 || power.len() != n_samples / 2 + 1 {
            return Err(Error::invalid(format!(
                "power length {} does not match {n_samples} input samples",
                power.len()
            )));
        }
        if let Some(i) = power.iter().position(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::invalid(format!(
                "power[{i}] is negative or non-finite"
            )));
        }
        Ok(PowerSpectrum {
            sample_rate_hz,
            n_samples,
            power,
        })
    }

    /// Frequency resolution `sample_rate / N`.
    pub fn bin_hz(&self) -> f64 {
        self.sample_rate_hz / self.n_samples as f64
    }

    pub fn power(&self) -> &[f64] {
        &self.power
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    /// Center frequency of bin `k`.
    pub fn frequency(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate_hz / self.n_samples as f64
    }

    /// Index of the 0.5 Hz band that bin `k` falls in, or `None` at or above 20 Hz.
    ///
    /// Computed as `floor(2 k fs / N)` so bins that sit exactly on a band edge
    /// land in the upper band without rounding surprises.
    pub fn band_of_bin(&self, k: usize) -> Option<usize> {
        let scaled = (k as f64 * self.sample_rate_hz) / (BAND_WIDTH_HZ * self.n_samples as f64);
        let band = scaled.floor();
        (band < N_BANDS as f64).then_some(band as usize)
    }
}

/// Power spectrum of `samples` via FFT. No taper is applied.
pub fn dft_power(samples: &[f64], sample_rate_hz: f64) -> Result<PowerSpectrum> {
    if samples.is_empty() {
        return Err(Error::invalid("cannot transform an empty signal"));
    }
    if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
        return Err(Error::invalid(format!(
            "sample rate must be positive, got {sample_rate_hz}"
        )));
    }
    if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
        return Err(Error::invalid(format!("sample {i} is not finite")));
    }
    let n = samples.len();
    let mut buffer: Vec<Complex<f64>> = samples.iter().map(|&x| Complex::new(x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buffer);
    let power = buffer[..=n / 2].iter().map(|c| c.norm_sqr()).collect();
    Ok(PowerSpectrum {
        sample_rate_hz,
        n_samples: n,
        power,
    })
}

/// Sums spectrum power into the 40 half-open 0.5 Hz bands `[0.5 i, 0.5 (i+1))`.
/// The DC bin belongs to band 0.
pub fn band_powers(spectrum: &PowerSpectrum) -> Result<[f64; N_BANDS]> {
    let top = spectrum.frequency(spectrum.power.len() - 1);
    if top < MAX_BAND_HZ {
        return Err(Error::invalid(format!(
            "spectrum reaches only {top} Hz, bands need {MAX_BAND_HZ} Hz"
        )));
    }
    let mut bands = [0.0; N_BANDS];
    for (k, &p) in spectrum.power.iter().enumerate() {
        match spectrum.band_of_bin(k) {
            Some(b) => bands[b] += p,
            None => break,
        }
    }
    Ok(bands)
}

/// 42-value summary of one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub eeg_bands: [f64; N_BANDS],
    pub emg_mean: f64,
    pub activity: f64,
    pub label: Option<Stage>,
}

impl FeatureRow {
    /// Builds a row from a flat 42-value slice (40 bands, EMG, activity).
    pub fn from_values(values: &[f64], label: Option<Stage>) -> Result<Self> {
        if values.len() != FEATURES_PER_EPOCH {
            return Err(Error::invalid(format!(
                "feature row needs {FEATURES_PER_EPOCH} values, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("feature {i} is not finite")));
        }
        let mut eeg_bands = [0.0; N_BANDS];
        eeg_bands.copy_from_slice(&values[..N_BANDS]);
        Ok(FeatureRow {
            eeg_bands,
            emg_mean: values[N_BANDS],
            activity: values[N_BANDS + 1],
            label,
        })
    }

    /// Flat feature vector in column order.
    pub fn values(&self) -> [f64; FEATURES_PER_EPOCH] {
        let mut out = [0.0; FEATURES_PER_EPOCH];
        out[..N_BANDS].copy_from_slice(&self.eeg_bands);
        out[N_BANDS] = self.emg_mean;
        out[N_BANDS + 1] = self.activity;
        out
    }

    pub fn with_label(mut self, label: Stage) -> Self {
        self.label = Some(label);
        self
    }
}

/// Reduces an EMG trace to one non-negative number.
pub fn summarize_emg(emg: &[f64], summary: EmgSummary) -> f64 {
    if emg.is_empty() {
        return 0.0;
    }
    let n = emg.len() as f64;
    match summary {
        EmgSummary::Rectified => emg.iter().map(|x| x.abs()).sum::<f64>() / n,
        EmgSummary::Rms => (emg.iter().map(|x| x * x).sum::<f64>() / n).sqrt(),
    }
}

/// Feature row of one epoch using the rectified EMG mean.
pub fn extract_features(epoch: &RawEpoch) -> Result<FeatureRow> {
    extract_features_with(epoch, EmgSummary::Rectified)
}

pub fn extract_features_with(epoch: &RawEpoch, emg: EmgSummary) -> Result<FeatureRow> {
    epoch.validate()?;
    if let Some(i) = epoch.emg.iter().position(|x| !x.is_finite()) {
        return Err(Error::invalid(format!("EMG sample {i} is not finite")));
    }
    let spectrum = dft_power(&epoch.eeg, epoch.sample_rate_hz)?;
    Ok(FeatureRow {
        eeg_bands: band_powers(&spectrum)?,
        emg_mean: summarize_emg(&epoch.emg, emg),
        activity: epoch.activity,
        label: None,
    })
}

/// Cuts continuous signals into consecutive 10-second epochs. A trailing
/// partial epoch is dropped.
pub fn segment_recording(
    eeg: &[f64],
    emg: &[f64],
    activity_per_epoch: &[f64],
    sample_rate_hz: f64,
) -> Result<Vec<RawEpoch>> {
    if eeg.len() != emg.len() {
        return Err(Error::invalid(format!(
            "EEG has {} samples but EMG has {}",
            eeg.len(),
            emg.len()
        )));
    }
    if !(sample_rate_hz.is_finite() && sample_rate_hz >= MIN_SAMPLE_RATE_HZ) {
        return Err(Error::invalid(format!(
            "sample rate {sample_rate_hz} Hz is below the {MIN_SAMPLE_RATE_HZ} Hz minimum"
        )));
    }
    let per = samples_per_epoch(sample_rate_hz);
    let n_epochs = eeg.len() / per;
    if n_epochs == 0 {
        return Err(Error::invalid(format!(
            "recording of {} samples is shorter than one {per}-sample epoch",
            eeg.len()
        )));
    }
    if activity_per_epoch.len() < n_epochs {
        return Err(Error::invalid(format!(
            "{n_epochs} epochs need activity values, got {}",
            activity_per_epoch.len()
        )));
    }
    eeg.chunks_exact(per)
        .zip(emg.chunks_exact(per))
        .zip(activity_per_epoch)
        .map(|((e, m), &a)| RawEpoch::new(e.to_vec(), m.to_vec(), a, sample_rate_hz))
        .collect()
}
