//! Hypothesis densities and threshold selection from calibration scores.
//!
//! Normal-frame scores are modelled by a gamma density, anomalous-frame
//! scores by a Gaussian mixture. Both log-densities are floored at
//! ln(10⁻³⁰⁰) so that likelihood ratios stay finite in the tails.

mod gamma;
mod gmm;
mod models;
mod roc;
pub mod special;

pub use gamma::{fit_gamma_mle, GammaParams};
pub use gmm::{fit_gmm_em, GmmFit, GmmParams};
pub use models::{CalibrationConfig, HypothesisModels, ModelMetadata, SampleCounts, ZERO_SCORE_OFFSET};
pub use roc::{roc, youden_threshold, RocCurve, RocPoint, Threshold};

/// ln(10⁻³⁰⁰).
pub const LOG_DENSITY_FLOOR: f64 = -690.775_527_898_213_7;
