use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::{AudioClip, AudioError};
use crate::Real;

const I16_SCALE: f64 = 32768.0;

fn wav_error(path: &Path, reason: impl ToString) -> AudioError {
    AudioError::Wav {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

/// Reads a mono 16-bit integer or 32-bit float PCM WAV file.
///
/// Integer samples are divided by 32768, so `-32768` maps to exactly `-1.0`.
pub fn load_wav<T: Real>(path: impl AsRef<Path>) -> Result<AudioClip<T>, AudioError> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(wav_error(path, "missing file"));
    }
    let reader = WavReader::open(path).map_err(|e| wav_error(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(wav_error(path, format!("non-mono ({} channels)", spec.channels)));
    }
    let samples = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| T::lit(v as f64 / I16_SCALE)))
            .collect::<Result<Vec<_>, _>>(),
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| T::lit(v as f64)))
            .collect::<Result<Vec<_>, _>>(),
        (format, bits) => {
            return Err(wav_error(
                path,
                format!("unsupported encoding ({bits}-bit {format:?})"),
            ))
        }
    }
    .map_err(|e| wav_error(path, e))?;
    AudioClip::new(samples, spec.sample_rate).map_err(|_| wav_error(path, "zero sample rate"))
}

/// Writes 16-bit PCM; samples are scaled by 32768, rounded and clipped.
pub fn write_wav<T: Real>(path: impl AsRef<Path>, clip: &AudioClip<T>) -> Result<(), AudioError> {
    let path = path.as_ref();
    let spec = WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::create(path, spec).map_err(|e| wav_error(path, e))?;
    for &s in &clip.samples {
        let v = (s.to_f64_lossy() * I16_SCALE).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(v).map_err(|e| wav_error(path, e))?;
    }
    writer.finalize().map_err(|e| wav_error(path, e))
}

/// Writes 32-bit float PCM without clipping.
pub fn write_wav_f32<T: Real>(path: impl AsRef<Path>, clip: &AudioClip<T>) -> Result<(), AudioError> {
    let path = path.as_ref();
    let spec = WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut writer = WavWriter::create(path, spec).map_err(|e| wav_error(path, e))?;
    for &s in &clip.samples {
        writer
            .write_sample(s.to_f64_lossy() as f32)
            .map_err(|e| wav_error(path, e))?;
    }
    writer.finalize().map_err(|e| wav_error(path, e))
}
