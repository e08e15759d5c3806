//! Mono PCM audio container, WAV I/O, resampling and per-clip normalization.

mod resample;
mod wav;

pub use resample::{resample, resample_by_ratio, RESAMPLER_TAPS};
pub use wav::{load_wav, write_wav, write_wav_f32};

use std::path::PathBuf;

use thiserror::Error;

use crate::Real;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("{path}: {reason}")]
    Wav { path: PathBuf, reason: String },
    #[error("normalization needs at least 2 samples, got {0}")]
    TooShort(usize),
    #[error("segment [{offset}s, +{duration}s) lies outside a clip of {clip_duration}s")]
    OutOfRange {
        offset: f64,
        duration: f64,
        clip_duration: f64,
    },
    #[error("sample rate must be positive")]
    ZeroRate,
}

/// Mono waveform with amplitudes nominally in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip<T> {
    pub samples: Vec<T>,
    pub sample_rate: u32,
}

impl<T: Real> AudioClip<T> {
    pub fn new(samples: Vec<T>, sample_rate: u32) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::ZeroRate);
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Shifts to zero mean and scales to unit population variance.
    ///
    /// A clip whose samples are all equal maps to all zeros.
    pub fn normalize_zero_mean_unit_var(&self) -> Result<Self, AudioError> {
        let n = self.samples.len();
        if n < 2 {
            return Err(AudioError::TooShort(n));
        }
        let first = self.samples[0];
        if self.samples.iter().all(|&s| s == first) {
            return Ok(Self {
                samples: vec![T::zero(); n],
                sample_rate: self.sample_rate,
            });
        }
        let count = T::from_usize_lossy(n);
        let mean = self.samples.iter().copied().sum::<T>() / count;
        let var = self
            .samples
            .iter()
            .map(|&s| (s - mean) * (s - mean))
            .sum::<T>()
            / count;
        if var <= T::zero() {
            return Ok(Self {
                samples: vec![T::zero(); n],
                sample_rate: self.sample_rate,
            });
        }
        let inv_std = var.sqrt().recip();
        Ok(Self {
            samples: self.samples.iter().map(|&s| (s - mean) * inv_std).collect(),
            sample_rate: self.sample_rate,
        })
    }

    /// Cuts `[round(offset·rate), round((offset+duration)·rate))`.
    ///
    /// The end may overshoot the clip by one sample to absorb rounding of
    /// segment boundaries; it is clamped to the clip length.
    pub fn extract_segment(&self, offset: f64, duration: f64) -> Result<Self, AudioError> {
        let out_of_range = || AudioError::OutOfRange {
            offset,
            duration,
            clip_duration: self.duration_seconds(),
        };
        if !(offset >= 0.0) || !(duration >= 0.0) {
            return Err(out_of_range());
        }
        let rate = self.sample_rate as f64;
        let start = (offset * rate).round() as usize;
        let end = ((offset + duration) * rate).round() as usize;
        if start > self.samples.len() || end > self.samples.len() + 1 {
            return Err(out_of_range());
        }
        let end = end.min(self.samples.len());
        Ok(Self {
            samples: self.samples[start..end].to_vec(),
            sample_rate: self.sample_rate,
        })
    }
}
