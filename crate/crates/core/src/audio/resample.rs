use std::f64::consts::PI;

use super::{AudioClip, AudioError};
use crate::Real;

/// Number of taps in the windowed-sinc interpolation kernel.
pub const RESAMPLER_TAPS: usize = 64;

const HALF_TAPS: i64 = (RESAMPLER_TAPS / 2) as i64;

fn blackman(pos: f64) -> f64 {
    // pos in [-1, 1]
    0.42 + 0.5 * (PI * pos).cos() + 0.08 * (2.0 * PI * pos).cos()
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Resamples to `target_rate` with band-limited interpolation.
///
/// Output length is `round(len · target_rate / sample_rate)`.
pub fn resample<T: Real>(clip: &AudioClip<T>, target_rate: u32) -> Result<AudioClip<T>, AudioError> {
    if target_rate == 0 {
        return Err(AudioError::ZeroRate);
    }
    if target_rate == clip.sample_rate {
        return Ok(clip.clone());
    }
    let ratio = target_rate as f64 / clip.sample_rate as f64;
    Ok(AudioClip {
        samples: resample_by_ratio(&clip.samples, ratio),
        sample_rate: target_rate,
    })
}

/// Band-limited resampling of a raw sample buffer by an arbitrary ratio
/// (output samples per input sample).
pub fn resample_by_ratio<T: Real>(input: &[T], ratio: f64) -> Vec<T> {
    assert!(ratio > 0.0 && ratio.is_finite(), "resampling ratio must be positive");
    let out_len = (input.len() as f64 * ratio).round() as usize;
    if ratio == 1.0 {
        return input.to_vec();
    }
    let cutoff = ratio.min(1.0);
    let n_in = input.len() as i64;
    let mut out = Vec::with_capacity(out_len);
    for n in 0..out_len {
        let t = n as f64 / ratio;
        let base = t.floor() as i64;
        let mut acc = T::zero();
        for k in (base - HALF_TAPS + 1)..=(base + HALF_TAPS) {
            if k < 0 || k >= n_in {
                continue;
            }
            let offset = t - k as f64;
            let weight = cutoff * sinc(cutoff * offset) * blackman(offset / HALF_TAPS as f64);
            acc += input[k as usize] * T::lit(weight);
        }
        out.push(acc);
    }
    out
}
