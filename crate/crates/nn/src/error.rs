use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, NnError>;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("{op}: dimension mismatch on axis `{axis}` (expected {expected}, found {found})")]
    Shape {
        op: &'static str,
        axis: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("{op}: expected a rank-{expected} tensor, found rank {found}")]
    Rank {
        op: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("tensor data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },

    #[error("batchnorm2d: train mode needs more than one value per channel (N*H*W = 1)")]
    DegenerateBatch,

    #[error("label {label} at (n={n}, h={h}, w={w}) is outside [0, {classes})")]
    Label {
        n: usize,
        h: usize,
        w: usize,
        label: usize,
        classes: usize,
    },

    #[error("non-finite gradient in `{param}`; step aborted")]
    NonFiniteGradient { param: String },

    #[error("input {height}x{width} is not divisible by {multiple}; pad before calling the model")]
    Padding {
        height: usize,
        width: usize,
        multiple: usize,
    },

    #[error("invalid model spec: {0}")]
    Spec(String),

    #[error("weight file: {0}")]
    Format(String),

    #[error("unsupported weight file version {found} (this build reads version {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    #[error("weight file payload too short: needed {needed} bytes, {available} available")]
    PayloadLength { needed: usize, available: usize },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}
