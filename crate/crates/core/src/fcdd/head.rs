//! FCDD head: pseudo-Huber heatmap, mean-of-heatmap score, and the one-class
//! loss with its gradient.

use rayon::prelude::*;

use super::net::{NetworkWeights, Tensor};
use crate::error::{Error, Result};
use crate::frame::{Frame, Label};
use crate::stream::{ScoreRecord, ScoreStream};

pub const DEFAULT_LOSS_EPSILON: f64 = 1e-6;

/// φ(X): a single-channel `u × v` map.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub u: usize,
    pub v: usize,
    pub values: Vec<f64>,
}

/// A non-negative anomaly map, optionally with its upsampled counterpart at
/// input resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatMap {
    pub u: usize,
    pub v: usize,
    pub values: Vec<f64>,
    pub upsampled: Option<Upsampled>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Upsampled {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl HeatMap {
    pub fn new(u: usize, v: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != u * v {
            return Err(Error::Shape(format!("{} values for a {u}x{v} map", values.len())));
        }
        Ok(Self {
            u,
            v,
            values,
            upsampled: None,
        })
    }
}

pub fn frame_tensor(frame: &Frame) -> Tensor {
    Tensor {
        c: 1,
        h: frame.height,
        w: frame.width,
        data: frame.pixels.clone(),
    }
}

pub fn forward(weights: &NetworkWeights, frame: &Frame) -> Result<FeatureMap> {
    let (u, v) = weights.output_dims(frame.height, frame.width)?;
    let mut cache = weights.forward_cached(frame_tensor(frame));
    let out = cache.outputs.pop().expect("network has layers");
    Ok(FeatureMap {
        u,
        v,
        values: out.data,
    })
}

#[inline]
pub fn pseudo_huber(x: f64) -> f64 {
    // √(x²+1) − 1 without cancellation for small x
    let x2 = x * x;
    x2 / ((x2 + 1.0).sqrt() + 1.0)
}

#[inline]
pub fn pseudo_huber_derivative(x: f64) -> f64 {
    x / (x * x + 1.0).sqrt()
}

/// A = √(φ² + 1) − 1, elementwise.
pub fn heatmap(feat: &FeatureMap) -> HeatMap {
    HeatMap {
        u: feat.u,
        v: feat.v,
        values: feat.values.iter().map(|&x| pseudo_huber(x)).collect(),
        upsampled: None,
    }
}

/// z = ‖A‖₁ / (u·v).
pub fn score(map: &HeatMap) -> Result<f64> {
    if map.u * map.v == 0 || map.values.is_empty() {
        return Err(Error::Shape("cannot score an empty heatmap".into()));
    }
    Ok(map.values.iter().map(|a| a.abs()).sum::<f64>() / (map.u * map.v) as f64)
}

/// Per-sample loss: z for normal samples, −ln(max(1 − e^(−z), ε)) for
/// anomalous ones.
pub fn sample_loss(z: f64, label: Label, epsilon: f64) -> f64 {
    match label {
        Label::Normal => z,
        Label::Anomaly => -(-(-z).exp_m1()).max(epsilon).ln(),
    }
}

/// d(sample_loss)/dz; zero where the clamp is active.
pub fn sample_loss_dz(z: f64, label: Label, epsilon: f64) -> f64 {
    match label {
        Label::Normal => 1.0,
        Label::Anomaly => {
            let arg = -(-z).exp_m1();
            if arg < epsilon {
                0.0
            } else {
                // −e^(−z) / (1 − e^(−z))
                -1.0 / z.exp_m1()
            }
        }
    }
}

fn check_batch(batch: &[Frame]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    Ok(())
}

/// Mean FCDD loss over `batch`, using each frame's label.
pub fn loss(batch: &[Frame], weights: &NetworkWeights, epsilon: f64) -> Result<f64> {
    check_batch(batch)?;
    let per: Vec<f64> = batch
        .par_iter()
        .map(|f| {
            let z = score(&heatmap(&forward(weights, f)?))?;
            Ok(sample_loss(z, f.label, epsilon))
        })
        .collect::<Result<_>>()?;
    Ok(per.iter().sum::<f64>() / batch.len() as f64)
}

fn sample_gradient(weights: &NetworkWeights, frame: &Frame, epsilon: f64) -> Result<(f64, NetworkWeights)> {
    let (u, v) = weights.output_dims(frame.height, frame.width)?;
    let cache = weights.forward_cached(frame_tensor(frame));
    let phi = cache.outputs.last().expect("network has layers");
    let n = (u * v) as f64;
    let z = phi.data.iter().map(|&x| pseudo_huber(x)).sum::<f64>() / n;
    let dz = sample_loss_dz(z, frame.label, epsilon);
    let grad_phi = Tensor {
        c: 1,
        h: u,
        w: v,
        data: phi
            .data
            .iter()
            .map(|&x| dz * pseudo_huber_derivative(x) / n)
            .collect(),
    };
    let mut grad = weights.zeros_like();
    weights.backward(&cache, grad_phi, &mut grad);
    Ok((sample_loss(z, frame.label, epsilon), grad))
}

/// Mean loss and its exact gradient. Per-sample gradients are computed in
/// parallel and summed in batch order.
pub fn gradient(batch: &[Frame], weights: &NetworkWeights, epsilon: f64) -> Result<(f64, NetworkWeights)> {
    check_batch(batch)?;
    let per: Vec<(f64, NetworkWeights)> = batch
        .par_iter()
        .map(|f| sample_gradient(weights, f, epsilon))
        .collect::<Result<_>>()?;
    let scale = 1.0 / batch.len() as f64;
    let mut total = weights.zeros_like();
    let mut loss = 0.0;
    for (l, g) in &per {
        loss += l;
        total.params_mut().zip(g.params()).for_each(|(t, &x)| *t += x);
    }
    total.params_mut().for_each(|t| *t *= scale);
    Ok((loss * scale, total))
}

/// Scores each frame in order; `t` is the frame index.
pub fn score_frames(weights: &NetworkWeights, frames: &[Frame]) -> Result<ScoreStream> {
    let records = frames
        .par_iter()
        .enumerate()
        .map(|(t, f)| {
            let z = score(&heatmap(&forward(weights, f)?))?;
            Ok(ScoreRecord {
                t: t as u64,
                z,
                y: f.label,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ScoreStream::new(records))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pseudo_huber_values() {
        assert_eq!(pseudo_huber(0.0), 0.0);
        let s3 = 3f64.sqrt();
        assert!((pseudo_huber(s3) - 1.0).abs() < 1e-15);
        assert_eq!(pseudo_huber(-s3), pseudo_huber(s3));
        assert_eq!(pseudo_huber_derivative(0.0), 0.0);
        assert!((pseudo_huber(1e-9) - 5e-19).abs() < 1e-30);
    }

    #[test]
    fn scores() {
        let m = HeatMap::new(2, 2, vec![1.0; 4]).unwrap();
        assert_eq!(score(&m).unwrap(), 1.0);
        let m = HeatMap::new(2, 2, vec![0.0, 2.0, 0.0, 2.0]).unwrap();
        assert_eq!(score(&m).unwrap(), 1.0);
        let m = HeatMap::new(3, 1, vec![0.0; 3]).unwrap();
        assert_eq!(score(&m).unwrap(), 0.0);
        let empty = HeatMap { u: 0, v: 0, values: vec![], upsampled: None };
        assert!(score(&empty).is_err());
    }

    #[test]
    fn loss_values() {
        assert_eq!(sample_loss(0.0, Label::Normal, 1e-6), 0.0);
        let ln2 = std::f64::consts::LN_2;
        assert!((sample_loss(ln2, Label::Anomaly, 1e-6) - ln2).abs() < 1e-15);
        let clamped = sample_loss(0.0, Label::Anomaly, 1e-6);
        assert!((clamped + 1e-6f64.ln()).abs() < 1e-12);
        assert_eq!(sample_loss_dz(0.0, Label::Anomaly, 1e-6), 0.0);
    }

    #[test]
    fn anomalous_loss_decreases_in_z() {
        let mut prev = f64::INFINITY;
        for i in 1..200 {
            let l = sample_loss(i as f64 * 0.05, Label::Anomaly, 1e-6);
            assert!(l >= 0.0 && l < prev);
            prev = l;
        }
    }
}
