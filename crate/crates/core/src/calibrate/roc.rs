//! ROC analysis and Youden-index threshold selection.
//!
//! Decision convention: a frame is flagged anomalous when `z ≥ τ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Label;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// `+∞` for the leading (0, 0) point.
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    /// Sorted by descending threshold, from (0, 0) to (1, 1).
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub tau: f64,
    pub youden_j: f64,
    pub tpr: f64,
    pub fpr: f64,
}

pub fn roc(scores: &[f64], labels: &[Label]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::Calibration(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|z| z.is_nan()) {
        return Err(Error::Calibration("NaN score".into()));
    }
    let pos = labels.iter().filter(|l| l.is_anomaly()).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Calibration(
            "ROC needs at least one normal and one anomalous sample".into(),
        ));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        tpr: 0.0,
        fpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let tau = scores[order[i]];
        // every sample tied at this score crosses together
        while i < order.len() && scores[order[i]] == tau {
            if labels[order[i]].is_anomaly() {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold: tau,
            tpr: tp as f64 / pos as f64,
            fpr: fp as f64 / neg as f64,
        });
    }

    let auc = points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum();
    Ok(RocCurve { points, auc })
}

/// Picks the finite threshold maximizing J = TPR − FPR. Ties go to the lower
/// FPR, then to the higher threshold.
pub fn youden_threshold(curve: &RocCurve) -> Threshold {
    let best = curve
        .points
        .iter()
        .filter(|p| p.threshold.is_finite())
        .max_by(|a, b| {
            let ja = a.tpr - a.fpr;
            let jb = b.tpr - b.fpr;
            ja.total_cmp(&jb)
                .then(b.fpr.total_cmp(&a.fpr))
                .then(a.threshold.total_cmp(&b.threshold))
        })
        .expect("a validated ROC curve has finite thresholds");
    Threshold {
        tau: best.threshold,
        youden_j: best.tpr - best.fpr,
        tpr: best.tpr,
        fpr: best.fpr,
    }
}
