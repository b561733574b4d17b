use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the planner.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("feature map {index} has a non-positive shape ({height}x{width}x{channels})")]
    NonPositiveShape {
        index: usize,
        height: i64,
        width: i64,
        channels: i64,
    },

    #[error("layer {layer} is not spatial; receptive regions only cross conv/pool layers")]
    SpatialOnly { layer: usize },

    #[error("patch grid {rows}x{cols} does not evenly tile the {height}x{width} split map")]
    UnevenGrid {
        rows: usize,
        cols: usize,
        height: usize,
        width: usize,
    },

    #[error("unsupported bitwidth {0}")]
    UnknownBitwidth(u32),

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("{what}: expected length {expected}, got {actual}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("region {region} lies outside the {height}x{width} feature map at depth {depth}")]
    RegionOutOfBounds {
        region: String,
        depth: usize,
        height: usize,
        width: usize,
    },

    #[error("no quantization range for feature map {0}")]
    MissingRange(usize),

    #[error("calibration set is empty")]
    EmptyCalibration,

    #[error("need at least 2 samples for a Gaussian fit, got {0}")]
    TooFewSamples(usize),

    #[error("outlier model has zero standard deviation")]
    DegenerateSigma,

    #[error("bad quantization range [{lo}, {hi}]")]
    BadRange { lo: f64, hi: f64 },

    #[error("empty value set")]
    EmptyValues,

    #[error("empty patch")]
    EmptyPatch,

    #[error("branch has no MACs; BitOPs reduction is undefined")]
    ZeroB,

    #[error("no bitwidth assignment satisfies the memory limit{}", branch_suffix(.branch))]
    Infeasible { branch: Option<String> },

    #[error("bad tensor file {path}: {reason}")]
    TensorFormat { path: PathBuf, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn branch_suffix(branch: &Option<String>) -> String {
    match branch {
        Some(b) => format!(" (branch {b})"),
        None => String::new(),
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
