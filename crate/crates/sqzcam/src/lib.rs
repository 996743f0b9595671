//! Camera-based detection of displaced squeezed vacuum light.
//!
//! The crate reproduces, end to end, the numerical experiment of estimating
//! a squeezing photon number from nothing but per-pixel photon counting
//! statistics:
//!
//! - [`state`]: closed-form moments, the quadratic noise coefficient q, and
//!   the sensitivity calculus showing the method is quantum-limited.
//! - [`fock`]: exact truncated Fock-basis oracle (distribution, loss
//!   channel, sampling) used to validate every closed form.
//! - [`beamsplitter`]: exact two-mode mixing behind the
//!   displaced-squeezed-vacuum approximation.
//! - [`camera`]: Monte Carlo frame batches (total photon draw + multinomial
//!   pixel split), bit-reproducible for a given seed at any thread count.
//! - [`frameio`]: checksummed binary container and CSV export for batches.
//! - [`estimator`]: pixel statistics, nested pixel integration, constrained
//!   quadratic fits, squeezing recovery, and the precision-vs-runs study.

pub mod beamsplitter;
pub mod camera;
pub mod error;
pub mod estimator;
pub mod fock;
pub mod frameio;
pub mod rng;
pub mod state;

pub use camera::{simulate_batch, FrameBatch, SensorGeometry};
pub use error::{Result, SqzError};
pub use estimator::{
    accumulate_stats, estimate_squeezing, fit_free_quadratic, fit_q, integrate_pixels,
    precision_study, IntegrationCurve, PrecisionStudy, QFit, SqueezingEstimate,
};
pub use fock::FockDistribution;
pub use state::{
    camera_sensitivity, homodyne_sensitivity, invert_q, phase_sweep, sensitivity_report,
    StateParams,
};
