//! Data pipeline and evaluation toolkit for end-to-end speech translation.
//!
//! The crate covers the full corpus path: ASR-driven audio segmentation,
//! transcript filtering, on-the-fly audio augmentation, epoch sampling and
//! batch packing, resegmented BLEU evaluation, and a numerical reference for
//! the encoder/decoder coupling modules (Adapter, Length Adaptor) together
//! with the fine-tuning parameter selection, learning-rate schedule, loss
//! and checkpoint averaging used to train them.
//!
//! Numerical code is generic over [`Real`] (`f32` / `f64`); the type aliases
//! below fix the scalar for the common cases.

pub mod audio;
pub mod augment;
pub mod corpus;
pub mod coupling;
pub mod eval;
pub mod scalar;
pub mod segmenter;
pub mod text_filter;

pub use scalar::Real;

/// Mono clip with 32-bit samples, the pipeline's working format.
pub type AudioClip32 = audio::AudioClip<f32>;
/// Mono clip with 64-bit samples, used where numerical slack matters.
pub type AudioClip64 = audio::AudioClip<f64>;

pub type FeatureSequence32 = coupling::FeatureSequence<f32>;
pub type FeatureSequence64 = coupling::FeatureSequence<f64>;

pub type AdapterParams32 = coupling::AdapterParams<f32>;
pub type AdapterParams64 = coupling::AdapterParams<f64>;

pub type LengthAdaptorParams32 = coupling::LengthAdaptorParams<f32>;
pub type LengthAdaptorParams64 = coupling::LengthAdaptorParams<f64>;

pub type Checkpoint32 = coupling::Checkpoint<f32>;
pub type Checkpoint64 = coupling::Checkpoint<f64>;
