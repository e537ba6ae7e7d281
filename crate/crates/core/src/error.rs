use std::path::PathBuf;

use num_complex::Complex64;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("matrix is not symmetric (max |H_ij - H_ji| = {0:e})")]
    NotSymmetric(f64),

    /// An eigenvector is (nearly) self-orthogonal under the c-product, which
    /// happens close to an exceptional point.
    #[error("near-defective matrix: |<v|v>| = {c_norm:e} for eigenvalue {energy}")]
    NearDefective { energy: Complex64, c_norm: f64 },

    #[error("degenerate eigenvalue {0} has no unique eigenvector")]
    Degenerate(Complex64),

    #[error("label continuity lost between z = {from} and z = {to} after grid refinement")]
    RefinementLimit { from: f64, to: f64 },

    #[error("step size underflow at z = {z} (h = {h:e})")]
    StepFailure { z: f64, h: f64 },

    #[error("state has vanishing norm (|psi|^2 = {0:e})")]
    ZeroNorm(f64),

    #[error("no threshold: {0}")]
    NoThreshold(String),

    #[error("transfer probability never drops below {level} in the scanned range")]
    NoCrossing { level: f64 },

    #[error("sweep left {holes} of {total} points unresolved")]
    TooManyHoles { holes: usize, total: usize },

    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
