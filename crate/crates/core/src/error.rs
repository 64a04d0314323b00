// SPDX-License-Identifier: MIT OR Apache-2.0

//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the numeric kernels, models, analysis and report emitters.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: left is {left_rows}x{left_cols}, right is {right_rows}x{right_cols}")]
    DimensionMismatch {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    #[error("length mismatch in {op}: {left} vs {right}")]
    LengthMismatch {
        op: &'static str,
        left: usize,
        right: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid model spec: field `{field}` {reason}")]
    InvalidSpec { field: &'static str, reason: String },

    #[error("token id {id} out of range for vocabulary of size {vocab_size}")]
    TokenOutOfRange { id: u32, vocab_size: usize },

    #[error("sequence of length {len} exceeds max_seq {max_seq}")]
    SequenceTooLong { len: usize, max_seq: usize },

    #[error("empty token sequence")]
    EmptySequence,

    #[error("layer {layer} out of range 1..={n_layers}")]
    LayerOutOfRange { layer: usize, n_layers: usize },

    #[error("degenerate trace: no layer has a defined ratio")]
    DegenerateTrace,

    #[error("weight file: bad magic {found:?}")]
    BadMagic { found: [u8; 4] },

    #[error("weight file: unsupported format version {found} (expected {expected})")]
    UnsupportedVersion { found: u16, expected: u16 },

    #[error("weight file: shape inconsistency: {0}")]
    ShapeMismatch(String),

    #[error("weight file: checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    Checksum { stored: u32, computed: u32 },

    #[error("weight file: truncated ({0})")]
    Truncated(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
