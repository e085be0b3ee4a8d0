//! Fully convolutional data description: a small FCN whose pseudo-Huber
//! output is both the anomaly explanation and, averaged, the frame score.

pub mod augment;
mod head;
mod net;
mod train;
pub mod upsample;

use std::path::Path;

pub use augment::{augment, AugmentParams};
pub use head::{
    forward, frame_tensor, gradient, heatmap, loss, pseudo_huber, pseudo_huber_derivative, sample_loss,
    sample_loss_dz, score, score_frames, FeatureMap, HeatMap, Upsampled, DEFAULT_LOSS_EPSILON,
};
pub use net::{ConvLayer, ForwardCache, LayerShape, NetworkWeights, Tensor, DEFAULT_ARCHITECTURE, DEFAULT_NEGATIVE_SLOPE};
pub use train::{loss_csv, train, train_from, Adam, TrainConfig, TrainOutcome};
pub use upsample::upsample;

use crate::error::Result;
use crate::frame::{encode_pgm, Frame};

/// Heatmap of `frame` with its upsampled map attached.
pub fn explain(weights: &NetworkWeights, frame: &Frame) -> Result<HeatMap> {
    let map = heatmap(&forward(weights, frame)?);
    upsample(&map, (frame.width, frame.height), weights.total_stride())
}

/// The upsampled heatmap scaled by `scale` (or its own maximum) and the 50%
/// blend of that image over the frame, both as P5 bytes.
pub fn overlay_pgms(frame: &Frame, map: &HeatMap, scale: Option<f64>) -> Option<(Vec<u8>, Vec<u8>)> {
    let up = map.upsampled.as_ref()?;
    let max = scale.unwrap_or_else(|| up.values.iter().copied().fold(0.0, f64::max));
    let norm: Vec<f64> = up
        .values
        .iter()
        .map(|&v| if max > 0.0 { (v / max).min(1.0) } else { 0.0 })
        .collect();
    let blend: Vec<f64> = frame
        .pixels
        .iter()
        .zip(&norm)
        .map(|(p, h)| 0.5 * p + 0.5 * h)
        .collect();
    Some((
        encode_pgm(up.width, up.height, &norm),
        encode_pgm(frame.width, frame.height, &blend),
    ))
}

pub fn write_overlay(frame: &Frame, map: &HeatMap, heat_path: &Path, overlay_path: &Path) -> Result<()> {
    if let Some((heat, blend)) = overlay_pgms(frame, map, None) {
        std::fs::write(heat_path, heat).map_err(|e| crate::error::Error::io(heat_path, e))?;
        std::fs::write(overlay_path, blend).map_err(|e| crate::error::Error::io(overlay_path, e))?;
    }
    Ok(())
}
