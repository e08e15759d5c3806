//! On-the-fly source audio augmentation: tempo, pitch and echo.
//!
//! An example is augmented with probability `p_aug`; when it is, all three
//! effects are applied with parameters drawn uniformly from the policy
//! ranges, in the fixed order tempo → pitch → echo.

use std::f64::consts::PI;

use rand::Rng;
use thiserror::Error;

use crate::audio::{resample_by_ratio, AudioClip};
use crate::Real;

/// Analysis window of the time-scale modification.
pub const WSOLA_WINDOW_MS: f64 = 30.0;
/// Maximum shift searched around the nominal analysis position.
pub const WSOLA_SEARCH_MS: f64 = 10.0;

#[derive(Debug, Error, PartialEq)]
pub enum AugmentError {
    #[error("{name} = {value} is outside [{lo}, {hi}]")]
    OutOfRange {
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("invalid augmentation policy: {0}")]
    Policy(String),
}

fn check_range(name: &'static str, value: f64, lo: f64, hi: f64) -> Result<(), AugmentError> {
    if value >= lo && value <= hi {
        Ok(())
    } else {
        Err(AugmentError::OutOfRange { name, value, lo, hi })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentPolicy {
    pub p_aug: f64,
    pub tempo_range: (f64, f64),
    pub pitch_range_cents: (f64, f64),
    pub echo_delay_ms_range: (f64, f64),
    pub echo_decay_range: (f64, f64),
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        Self {
            p_aug: 0.8,
            tempo_range: (0.85, 1.3),
            pitch_range_cents: (-300.0, 300.0),
            echo_delay_ms_range: (20.0, 200.0),
            echo_decay_range: (0.05, 0.2),
        }
    }
}

impl AugmentPolicy {
    pub fn validate(&self) -> Result<(), AugmentError> {
        let bad = |msg: String| Err(AugmentError::Policy(msg));
        if !(0.0..=1.0).contains(&self.p_aug) {
            return bad(format!("p_aug must be in [0, 1], got {}", self.p_aug));
        }
        let ranges = [
            ("tempo", self.tempo_range, (0.5, 2.0)),
            ("pitch", self.pitch_range_cents, (-1200.0, 1200.0)),
            ("echo-delay", self.echo_delay_ms_range, (0.0, f64::INFINITY)),
            ("echo-decay", self.echo_decay_range, (0.0, 1.0 - f64::EPSILON)),
        ];
        for (name, (lo, hi), (min, max)) in ranges {
            if !(lo <= hi) || lo < min || hi > max {
                return bad(format!("{name} range [{lo}, {hi}] must be ordered and within [{min}, {max}]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectParams {
    pub tempo: f64,
    pub pitch_cents: f64,
    pub echo_delay_ms: f64,
    pub echo_decay: f64,
}

impl EffectParams {
    pub const NEUTRAL: EffectParams = EffectParams {
        tempo: 1.0,
        pitch_cents: 0.0,
        echo_delay_ms: 0.0,
        echo_decay: 0.0,
    };
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// With probability `p_aug`, draws every effect parameter independently and
/// uniformly from its range.
pub fn sample_params<R: Rng + ?Sized>(policy: &AugmentPolicy, rng: &mut R) -> Option<EffectParams> {
    if rng.random::<f64>() >= policy.p_aug {
        return None;
    }
    Some(EffectParams {
        tempo: uniform(rng, policy.tempo_range),
        pitch_cents: uniform(rng, policy.pitch_range_cents),
        echo_delay_ms: uniform(rng, policy.echo_delay_ms_range),
        echo_decay: uniform(rng, policy.echo_decay_range),
    })
}

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

fn sample_at<T: Real>(x: &[T], i: isize) -> T {
    if i < 0 {
        T::zero()
    } else {
        x.get(i as usize).copied().unwrap_or_else(T::zero)
    }
}

/// Shift in `[-tol, tol]` whose frame best matches `template`, by normalized
/// cross-correlation. Zero shift wins ties.
fn best_shift<T: Real>(x: &[T], template_start: isize, nominal: isize, len: usize, tol: isize) -> isize {
    let template: Vec<T> = (0..len as isize).map(|i| sample_at(x, template_start + i)).collect();
    let mut best: Option<(isize, f64)> = None;
    let candidates = std::iter::once(0).chain((1..=tol).flat_map(|d| [-d, d]));
    for delta in candidates {
        let start = nominal + delta;
        if start < 0 {
            continue;
        }
        let mut corr = T::zero();
        let mut energy = T::zero();
        for (i, &t) in template.iter().enumerate() {
            let c = sample_at(x, start + i as isize);
            corr += t * c;
            energy += c * c;
        }
        let score = corr.to_f64_lossy() / (energy.to_f64_lossy() + 1e-12).sqrt();
        match best {
            Some((_, b)) if score <= b + 1e-12 * b.abs() => {}
            _ => best = Some((delta, score)),
        }
    }
    best.map_or(0, |(d, _)| d)
}

fn time_stretch<T: Real>(x: &[T], rate: u32, factor: f64, out_len: usize) -> Vec<T> {
    let window_len = ((WSOLA_WINDOW_MS / 1000.0 * rate as f64).round() as usize).max(2);
    let hop = window_len / 2;
    let tol = (WSOLA_SEARCH_MS / 1000.0 * rate as f64).round() as isize;
    let window: Vec<T> = hann(window_len).into_iter().map(T::lit).collect();

    let buf_len = out_len + window_len;
    let mut acc = vec![T::zero(); buf_len];
    let mut weight = vec![T::zero(); buf_len];
    let mut raw = vec![T::zero(); buf_len];
    let mut prev: Option<isize> = None;
    let mut k = 0usize;
    while k * hop < out_len {
        let nominal = (k as f64 * hop as f64 * factor).round() as isize;
        let pos = match prev {
            None => nominal,
            Some(p) => nominal + best_shift(x, p + hop as isize, nominal, window_len, tol),
        };
        let out_start = k * hop;
        for i in 0..window_len {
            let s = sample_at(x, pos + i as isize);
            acc[out_start + i] += s * window[i];
            weight[out_start + i] += window[i];
            raw[out_start + i] = s;
        }
        prev = Some(pos);
        k += 1;
    }
    let floor = T::lit(1e-3);
    (0..out_len)
        .map(|i| if weight[i] > floor { acc[i] / weight[i] } else { raw[i] })
        .collect()
}

/// Pitch-preserving tempo change by waveform-similarity overlap-add
/// (30 ms Hann windows, 50% overlap, ±10 ms search).
///
/// Output length is `round(len / factor)`.
pub fn tempo<T: Real>(clip: &AudioClip<T>, factor: f64) -> Result<AudioClip<T>, AugmentError> {
    check_range("tempo", factor, 0.5, 2.0)?;
    let out_len = (clip.len() as f64 / factor).round() as usize;
    Ok(AudioClip {
        samples: time_stretch(&clip.samples, clip.sample_rate, factor, out_len),
        sample_rate: clip.sample_rate,
    })
}

/// Shifts pitch by `2^(cents/1200)` keeping the length: resample by the
/// inverse shift, then restore the duration with [`tempo`].
pub fn pitch<T: Real>(clip: &AudioClip<T>, cents: f64) -> Result<AudioClip<T>, AugmentError> {
    check_range("pitch", cents, -1200.0, 1200.0)?;
    if cents == 0.0 {
        return Ok(clip.clone());
    }
    let shift = (cents / 1200.0).exp2();
    let squeezed = resample_by_ratio(&clip.samples, 1.0 / shift);
    let mut samples = time_stretch(&squeezed, clip.sample_rate, 1.0 / shift, clip.len());
    samples.resize(clip.len(), T::zero());
    Ok(AudioClip {
        samples,
        sample_rate: clip.sample_rate,
    })
}

/// Single-tap echo `y[n] = (x[n] + decay·x[n−D]) / (1 + decay)`, with
/// `D = round(delay·rate/1000)`.
pub fn echo<T: Real>(clip: &AudioClip<T>, delay_ms: f64, decay: f64) -> Result<AudioClip<T>, AugmentError> {
    check_range("echo-delay", delay_ms, 0.0, f64::INFINITY)?;
    if !(0.0..1.0).contains(&decay) {
        return Err(AugmentError::OutOfRange {
            name: "echo-decay",
            value: decay,
            lo: 0.0,
            hi: 1.0,
        });
    }
    let delay = (delay_ms * clip.sample_rate as f64 / 1000.0).round() as usize;
    let d = T::lit(decay);
    let norm = T::one() + d;
    let x = &clip.samples;
    let samples = (0..x.len())
        .map(|n| {
            let delayed = if n >= delay { x[n - delay] } else { T::zero() };
            (x[n] + d * delayed) / norm
        })
        .collect();
    Ok(AudioClip {
        samples,
        sample_rate: clip.sample_rate,
    })
}

/// Tempo, then pitch, then echo.
pub fn apply_augmentation<T: Real>(clip: &AudioClip<T>, params: &EffectParams) -> Result<AudioClip<T>, AugmentError> {
    let out = tempo(clip, params.tempo)?;
    let out = pitch(&out, params.pitch_cents)?;
    echo(&out, params.echo_delay_ms, params.echo_decay)
}
