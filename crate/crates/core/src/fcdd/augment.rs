//! Training-time augmentation: small rotation, integer translation,
//! intensity jitter and additive noise. Masks follow the geometry.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::frame::{Frame, Label};
use crate::rng::{domain, substream};

pub const MAX_ROTATION_DEG: f64 = 10.0;
pub const MAX_TRANSLATION_PX: i32 = 3;
pub const MAX_JITTER: f64 = 0.1;
pub const NOISE_SIGMA: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AugmentParams {
    pub rotation_deg: f64,
    pub dx: i32,
    pub dy: i32,
    /// Additive intensity offset.
    pub jitter: f64,
    pub noise_sigma: f64,
}

impl AugmentParams {
    pub fn draw<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            rotation_deg: rng.random_range(-MAX_ROTATION_DEG..=MAX_ROTATION_DEG),
            dx: rng.random_range(-MAX_TRANSLATION_PX..=MAX_TRANSLATION_PX),
            dy: rng.random_range(-MAX_TRANSLATION_PX..=MAX_TRANSLATION_PX),
            jitter: rng.random_range(-MAX_JITTER..=MAX_JITTER),
            noise_sigma: NOISE_SIGMA,
        }
    }
}

fn bilinear_clamped(f: &Frame, x: f64, y: f64) -> f64 {
    let x = x.clamp(0.0, (f.width - 1) as f64);
    let y = y.clamp(0.0, (f.height - 1) as f64);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(f.width - 1), (y0 + 1).min(f.height - 1));
    let (tx, ty) = (x - x0 as f64, y - y0 as f64);
    if tx == 0.0 && ty == 0.0 {
        return f.at(x0, y0);
    }
    let top = f.at(x0, y0) * (1.0 - tx) + f.at(x1, y0) * tx;
    let bottom = f.at(x0, y1) * (1.0 - tx) + f.at(x1, y1) * tx;
    top * (1.0 - ty) + bottom * ty
}

/// Applies `params`; noise is drawn from `rng`. Geometry is an inverse map:
/// output pixel p samples the source at R⁻¹(p − t − c) + c, c the frame
/// centre. Pixels use bilinear interpolation with edge replication, masks
/// nearest-neighbour with out-of-frame treated as unset.
pub fn apply<R: Rng + ?Sized>(frame: &Frame, params: &AugmentParams, rng: &mut R) -> Frame {
    let (w, h) = (frame.width, frame.height);
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let (sin, cos) = params.rotation_deg.to_radians().sin_cos();
    let mut pixels = Vec::with_capacity(w * h);
    let mut mask = frame.mask.as_ref().map(|_| Vec::with_capacity(w * h));
    for y in 0..h {
        for x in 0..w {
            let px = x as f64 - params.dx as f64 - cx;
            let py = y as f64 - params.dy as f64 - cy;
            let sx = cos * px + sin * py + cx;
            let sy = -sin * px + cos * py + cy;
            let mut v = bilinear_clamped(frame, sx, sy) + params.jitter;
            if params.noise_sigma > 0.0 {
                v += params.noise_sigma * rng.sample::<f64, _>(StandardNormal);
            }
            pixels.push(v.clamp(0.0, 1.0));
            if let (Some(out), Some(src)) = (mask.as_mut(), frame.mask.as_ref()) {
                let (nx, ny) = (sx.round(), sy.round());
                let inside = nx >= 0.0 && ny >= 0.0 && nx < w as f64 && ny < h as f64;
                out.push(inside && src[ny as usize * w + nx as usize]);
            }
        }
    }
    let label = match &mask {
        Some(m) => Label::from(m.iter().any(|&b| b)),
        None => frame.label,
    };
    Frame {
        width: w,
        height: h,
        pixels,
        label,
        mask,
    }
}

/// Random augmentation, deterministic in `seed`.
pub fn augment(frame: &Frame, seed: u64) -> Frame {
    let mut rng = substream(seed, domain::AUGMENT, 0);
    let params = AugmentParams::draw(&mut rng);
    apply(frame, &params, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gen_frame, stamp_disc, FrameSpec};

    #[test]
    fn identity_is_exact() {
        let f = gen_frame(&FrameSpec::default(), Label::Anomaly, 3).unwrap();
        let out = apply(&f, &AugmentParams::default(), &mut substream(0, 0, 0));
        assert_eq!(out, f);
    }

    #[test]
    fn translation_moves_mask_centroid_exactly() {
        let (w, h) = (32, 32);
        let mut px = vec![0.3; w * h];
        let mut mask = vec![false; w * h];
        stamp_disc(&mut px, &mut mask, w, h, (14.3, 16.8, 4.0), 0.4);
        let f = Frame::new(w, h, px, Label::Anomaly, Some(mask)).unwrap();
        let p = AugmentParams { dx: 2, ..Default::default() };
        let g = apply(&f, &p, &mut substream(0, 0, 0));
        let (ax, ay) = f.mask_centroid().unwrap();
        let (bx, by) = g.mask_centroid().unwrap();
        assert!((bx - ax - 2.0).abs() < 1e-12 && (by - ay).abs() < 1e-12);
        assert_eq!(g.mask_count(), f.mask_count());
    }

    #[test]
    fn seeded_augmentation_is_deterministic() {
        let f = gen_frame(&FrameSpec::default(), Label::Anomaly, 5).unwrap();
        assert_eq!(augment(&f, 11), augment(&f, 11));
        assert_ne!(augment(&f, 11), augment(&f, 12));
    }
}
