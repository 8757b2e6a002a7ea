use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("zero shear wavevector at (k={k}, eta={eta}, l={l})")]
    ZeroWavevector { k: i64, eta: f64, l: i64 },

    #[error("input is not divergence free (residual {residual:e})")]
    NotDivergenceFree { residual: f64 },

    #[error("CFL violation at t={t}: courant number {courant:.3} > {limit}")]
    Cfl { t: f64, courant: f64, limit: f64 },

    #[error("non-finite value detected at t={t} in {what}")]
    NonFinite { t: f64, what: String },

    #[error("remap requested at non-commensurate time t={t}")]
    NonCommensurateRemap { t: f64 },

    #[error("jacobian precondition failed at t={t}: sup|d_Y C| = {sup:.4} >= 1/2")]
    Jacobian { t: f64, sup: f64 },

    #[error("sampling cadence mismatch: {0}")]
    Cadence(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint {path}: bad magic {magic:?}")]
    CheckpointMagic { path: PathBuf, magic: [u8; 8] },

    #[error("checkpoint {path}: unsupported version {version:?}")]
    CheckpointVersion { path: PathBuf, version: String },

    #[error("checkpoint {path}: corrupt or truncated ({reason})")]
    CheckpointCorrupt { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
