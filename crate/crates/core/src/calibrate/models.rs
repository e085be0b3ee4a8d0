use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{fit_gamma_mle, fit_gmm_em, roc, youden_threshold, GammaParams, GmmParams, Threshold};
use crate::error::{Error, Result};
use crate::frame::Label;
use crate::stream::ScoreStream;

/// Scores of exactly 0 are nudged by this before the gamma fit.
pub const ZERO_SCORE_OFFSET: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleCounts {
    pub normal: usize,
    pub anomaly: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub seed: u64,
    #[serde(rename = "K")]
    pub k: usize,
    pub sample_counts: SampleCounts,
}

/// Fitted score densities for both hypotheses plus the per-frame threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisModels {
    pub h0: GammaParams,
    pub h1: GmmParams,
    pub tau: f64,
    pub metadata: ModelMetadata,
}

#[derive(Debug, Clone, Copy)]
pub struct CalibrationConfig {
    pub components: usize,
    pub seed: u64,
    pub em_tol: f64,
    pub em_max_iter: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            components: 2,
            seed: 0,
            em_tol: 1e-9,
            em_max_iter: 500,
        }
    }
}

impl HypothesisModels {
    /// Fits gamma to the normal scores, a mixture to the anomalous scores and
    /// the Youden threshold to both.
    pub fn calibrate(stream: &ScoreStream, cfg: &CalibrationConfig) -> Result<(Self, Threshold)> {
        let normal: Vec<f64> = stream
            .scores_with(Label::Normal)
            .into_iter()
            .map(|z| if z == 0.0 { ZERO_SCORE_OFFSET } else { z })
            .collect();
        let anomalous = stream.scores_with(Label::Anomaly);
        if normal.is_empty() || anomalous.is_empty() {
            return Err(Error::Calibration(format!(
                "calibration needs both classes ({} normal, {} anomalous scores)",
                normal.len(),
                anomalous.len()
            )));
        }
        let h0 = fit_gamma_mle(&normal)?;
        let h1 = fit_gmm_em(&anomalous, cfg.components, cfg.seed, cfg.em_tol, cfg.em_max_iter)?.params;
        let curve = roc(&stream.scores(), &stream.labels())?;
        let threshold = youden_threshold(&curve);
        let models = Self {
            h0,
            h1,
            tau: threshold.tau,
            metadata: ModelMetadata {
                seed: cfg.seed,
                k: cfg.components,
                sample_counts: SampleCounts {
                    normal: normal.len(),
                    anomaly: anomalous.len(),
                },
            },
        };
        Ok((models, threshold))
    }

    pub fn validate(&self) -> Result<()> {
        self.h0.validate()?;
        self.h1.validate()?;
        if !self.tau.is_finite() {
            return Err(Error::Spec("threshold tau must be finite".into()));
        }
        Ok(())
    }

    pub fn log_pdf_h0(&self, z: f64) -> f64 {
        self.h0.log_pdf(z)
    }

    pub fn log_pdf_h1(&self, z: f64) -> f64 {
        self.h1.log_pdf(z)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("models serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}
