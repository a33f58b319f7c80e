//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unsupported channel count {0} (expected 1 or 3)")]
    ChannelCount(usize),

    #[error("kernel size {0} must be odd and >= 1")]
    KernelSize(usize),

    #[error("invalid parameter {name}: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("threshold order violated: low {low} > high {high}")]
    ThresholdOrder { low: f64, high: f64 },

    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("patch size {patch} exceeds image extent {extent}")]
    PatchTooLarge { patch: usize, extent: usize },

    #[error("input {0}x{1} is not divisible by the network stride {2}")]
    StrideMismatch(usize, usize, usize),

    #[error("side-output count {got} does not match weight vector length {want}")]
    LayerCountMismatch { got: usize, want: usize },

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error("checkpoint version {got} unsupported (expected {want})")]
    CheckpointVersion { got: u32, want: u32 },

    #[error("config validation failed: {0}")]
    Config(String),

    #[error("training diverged: loss became non-finite at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("dataset is empty: {0}")]
    EmptyDataset(PathBuf),

    #[error("image decode failed for {path}: {source}")]
    Decode {
        path: PathBuf,
        source: image::ImageError,
    },

    #[error("image encode failed for {path}: {source}")]
    Encode {
        path: PathBuf,
        source: image::ImageError,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether this error stems from bad configuration or inputs rather
    /// than a runtime failure. Drives the CLI exit code split.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::ChannelCount(_)
                | Error::KernelSize(_)
                | Error::InvalidParam { .. }
                | Error::ThresholdOrder { .. }
                | Error::Config(_)
                | Error::EmptyDataset(_)
                | Error::LayerCountMismatch { .. }
        )
    }
}
