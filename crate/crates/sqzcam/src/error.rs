//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by state analytics, the Fock oracle, frame simulation,
/// and the estimator.
#[derive(Debug, Error)]
pub enum SqzError {
    /// A parameter failed validation (negative photon number, non-finite
    /// phase, bad geometry, ...).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Transmission outside the physical range [0, 1].
    #[error("transmission eta = {0} outside [0, 1]")]
    InvalidTransmission(f64),

    /// A truncated Fock distribution left more probability mass beyond the
    /// cutoff than the caller allowed.
    #[error("insufficient cutoff {cutoff}: tail mass {tail_mass:.3e} exceeds tolerance {tail_tol:.3e}")]
    InsufficientCutoff {
        cutoff: usize,
        tail_mass: f64,
        tail_tol: f64,
    },

    /// The error-propagation denominator |dq/dn_s| is numerically zero.
    #[error("degenerate derivative: |dq/dn_s| = {0:.3e} too small for error propagation")]
    DegenerateDerivative(f64),

    /// Parameter recovery produced an unphysical photon number.
    #[error("non-physical recovery: n_s = {n_s:.6e} with n_total = {n_total:.6e}")]
    NonPhysicalRecovery { n_s: f64, n_total: f64 },

    /// Too few frames or degenerate design for the requested statistic.
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// Frame file I/O failure.
    #[error("frame file I/O: {0}")]
    Io(#[from] std::io::Error),

    /// Frame file is not in the expected container format.
    #[error("frame file corrupt: {0}")]
    CorruptFile(String),

    /// Frame file was written by an incompatible format version.
    #[error("frame file version {found} unsupported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    /// Frame file payload checksum does not match its header.
    #[error("frame file checksum mismatch: stored {stored:#018x}, computed {computed:#018x}")]
    ChecksumMismatch { stored: u64, computed: u64 },

    /// Two inputs that must share parameters do not.
    #[error("config mismatch: {0}")]
    ConfigMismatch(String),
}

pub type Result<T> = std::result::Result<T, SqzError>;
