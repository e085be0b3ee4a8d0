//! Frame-level anomaly scoring with explainable heatmaps, and sequential
//! probability ratio testing that turns per-frame scores into robust
//! normal/anomaly decisions over video.
//!
//! Stages:
//!
//! 1. **synth** – seeded surrogate frames, sequences and score streams.
//! 2. **fcdd** – small fully convolutional network, pseudo-Huber heatmap,
//!    mean-heatmap score, one-class loss with exact gradients, Adam training,
//!    Gaussian upsampling of heatmaps.
//! 3. **calibrate** – gamma fit for normal scores, Gaussian mixture for
//!    anomalous scores, ROC/Youden threshold.
//! 4. **sprt** – Wald bounds, log-likelihood-ratio accumulation with reset,
//!    decision logs.
//! 5. **eval** – confusion matrices with undecided exclusion and comparison
//!    reports.

pub mod calibrate;
pub mod error;
pub mod eval;
pub mod fcdd;
pub mod frame;
pub mod pipeline;
pub mod rng;
pub mod sprt;
pub mod stream;
pub mod synth;

pub use error::{Error, Result};
pub use frame::{Frame, Label};
pub use stream::{ScoreRecord, ScoreStream};
