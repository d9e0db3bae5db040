//! Error type shared by all fusion modules.

use std::path::PathBuf;
use thiserror::Error;

/// Errors produced by tensor ops, the network, training, I/O and metrics.
#[derive(Debug, Error)]
pub enum FusionError {
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {left} is {left_dims} but {right} is {right_dims}")]
    DimensionMismatch {
        left: String,
        left_dims: String,
        right: String,
        right_dims: String,
    },

    #[error("unsupported bit depth in {path}: expected 8-bit grayscale")]
    UnsupportedBitDepth { path: PathBuf },

    #[error("non-grayscale image {path}: expected single-channel input")]
    NonGrayscale { path: PathBuf },

    #[error("checkpoint version mismatch: file has {found}, supported {supported}")]
    CheckpointVersion { found: u32, supported: u32 },

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error(
        "non-finite loss at epoch {epoch}, pair {pair_id}: \
         ssim_anat={ssim_anat}, ssim_func={ssim_func}, l2={l2}, total={total}"
    )]
    NonFiniteLoss {
        epoch: usize,
        pair_id: String,
        ssim_anat: f64,
        ssim_func: f64,
        l2: f64,
        total: f64,
    },

    #[error("untrained parameters: {0}")]
    UntrainedParams(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl FusionError {
    /// Stable one-word tag for machine-parsable CLI diagnostics.
    pub fn tag(&self) -> &'static str {
        match self {
            FusionError::InvalidShape(_) => "invalid-shape",
            FusionError::InvalidArgument(_) => "invalid-argument",
            FusionError::DimensionMismatch { .. } => "dimension-mismatch",
            FusionError::UnsupportedBitDepth { .. } => "unsupported-bit-depth",
            FusionError::NonGrayscale { .. } => "non-grayscale",
            FusionError::CheckpointVersion { .. } => "checkpoint-version",
            FusionError::CorruptCheckpoint(_) => "corrupt-checkpoint",
            FusionError::InvalidConfig(_) => "invalid-config",
            FusionError::NonFiniteLoss { .. } => "non-finite-loss",
            FusionError::UntrainedParams(_) => "untrained-params",
            FusionError::EmptyDataset(_) => "empty-dataset",
            FusionError::Io { .. } => "io",
            FusionError::Image { .. } => "image",
        }
    }
}

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, FusionError>;
