//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("idx format error: {0}")]
    IdxFormat(String),

    #[error("idx payload truncated: {0}")]
    IdxTruncated(String),

    #[error("image/label pairing error: {images} images vs {labels} labels")]
    IdxPairing { images: usize, labels: usize },

    #[error("patch geometry error: {0}")]
    Geometry(String),

    #[error("calibration range error: {0}")]
    CalibrationRange(String),

    #[error("dead channel {0}: full-on response is zero")]
    DeadChannel(usize),

    #[error("target of {target_bits:.3} bits is unreachable: RIN plateau caps effective bits at {plateau_bits:.3}")]
    Infeasible {
        target_bits: f64,
        plateau_bits: f64,
    },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("label {0} out of range 0..=9")]
    LabelOutOfRange(u8),

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
