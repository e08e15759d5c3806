//! Numerical reference for the encoder/decoder coupling modules and the
//! training-side rules around them.

mod adapter;
mod checkpoint;
mod features;
mod inventory;
mod length_adaptor;
mod loss;
mod schedule;

pub use adapter::{adapter_backward, adapter_forward, adapter_param_count, AdapterParams, LAYER_NORM_EPS};
pub use checkpoint::{average_checkpoints, read_checkpoint_dir, write_checkpoint_dir, Checkpoint, Tensor, CHECKPOINT_INDEX};
pub use features::{apply_mask_spans, feature_mask, sample_mask_spans, FeatureSequence, MaskPolicy};
pub use inventory::{
    build_inventory, build_reference_inventory, lna_trainable_mask, ArchConfig, LnaMask, ParamEntry,
    ParamGroup, ParamInventory, REPORTED_FIRST_STEP_TRAINABLE,
};
pub use length_adaptor::{
    length_adaptor_forward, length_adaptor_output_len, length_adaptor_param_count, ConvLayer,
    LengthAdaptorParams, LENGTH_ADAPTOR_KERNEL, LENGTH_ADAPTOR_LAYERS, LENGTH_ADAPTOR_STRIDE,
};
pub use loss::label_smoothed_ce;
pub use schedule::{tri_stage_lr, TriStageConfig};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CouplingError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("step {step} outside [0, {total}]")]
    StepOutOfRange { step: u64, total: u64 },
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("log-probabilities do not form a distribution (logsumexp = {0})")]
    NotADistribution(f64),
    #[error("target {target} out of range for {classes} classes")]
    TargetOutOfRange { target: usize, classes: usize },
    #[error("checkpoint mismatch: {0}")]
    Checkpoint(String),
    #[error("checkpoint I/O at {path}: {reason}")]
    CheckpointIo { path: String, reason: String },
}
