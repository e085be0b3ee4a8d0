//! Seeded surrogate data: pipe-wall-like grayscale frames with deposit-like
//! blobs, labelled frame sequences with transient blur/illumination
//! perturbations, and raw score streams drawn from the hypothesis densities.

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibrate::{GammaParams, GmmParams};
use crate::error::{Error, Result};
use crate::frame::{encode_pgm, Frame, Label};
use crate::rng::{domain, substream};
use crate::stream::{ScoreRecord, ScoreStream};

/// Supersampling grid per pixel axis for blob coverage.
const COVERAGE_SAMPLES: usize = 4;
/// Mean background intensity and value-noise amplitude.
const BACKGROUND_LEVEL: f64 = 0.3;
const BACKGROUND_AMPLITUDE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSpec {
    pub width: usize,
    pub height: usize,
    /// Value-noise lattice cells across the frame width.
    pub background_texture_scale: f64,
    pub blob_count_range: [u32; 2],
    pub blob_radius_range: [f64; 2],
    /// Signed intensity offset at full blob coverage.
    pub blob_intensity_delta: f64,
    pub noise_sigma: f64,
    pub blur_probability: f64,
    pub seed: u64,
}

impl Default for FrameSpec {
    fn default() -> Self {
        Self {
            width: 32,
            height: 32,
            background_texture_scale: 3.0,
            blob_count_range: [1, 2],
            blob_radius_range: [3.0, 5.0],
            blob_intensity_delta: 0.35,
            noise_sigma: 0.03,
            blur_probability: 0.0,
            seed: 0,
        }
    }
}

impl FrameSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Spec(msg));
        if self.width == 0 || self.height == 0 || !self.width.is_multiple_of(4) || !self.height.is_multiple_of(4) {
            return bad(format!(
                "frame size {}x{} must be positive multiples of 4",
                self.width, self.height
            ));
        }
        if !(0.0..=1.0).contains(&self.blur_probability) {
            return bad(format!("blur_probability {} outside [0,1]", self.blur_probability));
        }
        let [cmin, cmax] = self.blob_count_range;
        let [rmin, rmax] = self.blob_radius_range;
        if cmin == 0 || cmin > cmax {
            return bad(format!("blob_count_range [{cmin},{cmax}] must be non-empty with min ≥ 1"));
        }
        if !(rmin > 0.0 && rmin <= rmax && rmax.is_finite()) {
            return bad(format!("blob_radius_range [{rmin},{rmax}] must be non-empty and positive"));
        }
        if 2.0 * (rmax + 1.0) >= self.width.min(self.height) as f64 {
            return bad(format!("blobs of radius {rmax} do not fit the frame"));
        }
        if !(self.background_texture_scale > 0.0 && self.background_texture_scale.is_finite()) {
            return bad("background_texture_scale must be positive".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite())
            || !self.blob_intensity_delta.is_finite()
        {
            return bad("noise_sigma must be ≥ 0 and blob_intensity_delta finite".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub label: Label,
}

/// Ground truth for a sequence: frames inside a segment take its label,
/// everything else is normal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentPlan {
    pub total_frames: usize,
    pub segments: Vec<Segment>,
}

impl SegmentPlan {
    pub fn new(total_frames: usize, segments: Vec<Segment>) -> Result<Self> {
        let p = Self {
            total_frames,
            segments,
        };
        p.validate()?;
        Ok(p)
    }

    /// A plan whose only segments are anomalous `(start, end)` ranges.
    pub fn anomalies(total_frames: usize, ranges: &[(usize, usize)]) -> Result<Self> {
        Self::new(
            total_frames,
            ranges
                .iter()
                .map(|&(start, end)| Segment {
                    start,
                    end,
                    label: Label::Anomaly,
                })
                .collect(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_frames == 0 {
            return Err(Error::Spec("segment plan has no frames".into()));
        }
        let mut prev_end = 0;
        for s in &self.segments {
            if s.start >= s.end || s.end > self.total_frames {
                return Err(Error::Spec(format!(
                    "segment ({}, {}) invalid for {} frames",
                    s.start, s.end, self.total_frames
                )));
            }
            if s.start < prev_end {
                return Err(Error::Spec("segments overlap or are unsorted".into()));
            }
            prev_end = s.end;
        }
        Ok(())
    }

    pub fn labels(&self) -> Vec<Label> {
        let mut out = vec![Label::Normal; self.total_frames];
        for s in &self.segments {
            out[s.start..s.end].iter_mut().for_each(|l| *l = s.label);
        }
        out
    }

    /// Alternating normal gaps and anomalous runs with uniformly drawn
    /// lengths, starting and ending on a normal gap.
    pub fn random(
        total_frames: usize,
        gap: (usize, usize),
        run: (usize, usize),
        seed: u64,
    ) -> Result<Self> {
        if gap.0 == 0 || gap.0 > gap.1 || run.0 == 0 || run.0 > run.1 {
            return Err(Error::Spec("gap and run ranges must be non-empty and positive".into()));
        }
        let mut rng = substream(seed, domain::PLAN, 0);
        let mut segments = Vec::new();
        let mut t = rng.random_range(gap.0..=gap.1);
        loop {
            let len = rng.random_range(run.0..=run.1);
            if t + len + gap.0 > total_frames {
                break;
            }
            segments.push(Segment {
                start: t,
                end: t + len,
                label: Label::Anomaly,
            });
            t += len + rng.random_range(gap.0..=gap.1);
        }
        Self::new(total_frames, segments)
    }
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

fn render_background(spec: &FrameSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (w, h) = (spec.width, spec.height);
    let cell = w as f64 / spec.background_texture_scale;
    let gw = (w as f64 / cell).ceil() as usize + 2;
    let gh = (h as f64 / cell).ceil() as usize + 2;
    let lattice: Vec<f64> = (0..gw * gh).map(|_| rng.random::<f64>()).collect();
    let mut px = Vec::with_capacity(w * h);
    for y in 0..h {
        let fy = (y as f64 + 0.5) / cell;
        let (iy, ty) = (fy.floor() as usize, smoothstep(fy.fract()));
        for x in 0..w {
            let fx = (x as f64 + 0.5) / cell;
            let (ix, tx) = (fx.floor() as usize, smoothstep(fx.fract()));
            let l = |i: usize, j: usize| lattice[j * gw + i];
            let top = l(ix, iy) * (1.0 - tx) + l(ix + 1, iy) * tx;
            let bottom = l(ix, iy + 1) * (1.0 - tx) + l(ix + 1, iy + 1) * tx;
            let v = top * (1.0 - ty) + bottom * ty;
            let noise: f64 = rng.sample(StandardNormal);
            px.push(BACKGROUND_LEVEL + BACKGROUND_AMPLITUDE * (v - 0.5) + spec.noise_sigma * noise);
        }
    }
    px
}

/// Fraction of pixel `(x, y)` covered by the disc, by regular supersampling.
pub fn disc_coverage(cx: f64, cy: f64, radius: f64, x: usize, y: usize) -> f64 {
    let n = COVERAGE_SAMPLES;
    let r2 = radius * radius;
    let mut inside = 0usize;
    for sy in 0..n {
        let py = y as f64 + (sy as f64 + 0.5) / n as f64;
        for sx in 0..n {
            let px = x as f64 + (sx as f64 + 0.5) / n as f64;
            if (px - cx).powi(2) + (py - cy).powi(2) <= r2 {
                inside += 1;
            }
        }
    }
    inside as f64 / (n * n) as f64
}

/// Adds an anti-aliased disc; pixels with ≥ 50% coverage join the mask.
pub fn stamp_disc(
    pixels: &mut [f64],
    mask: &mut [bool],
    width: usize,
    height: usize,
    (cx, cy, radius): (f64, f64, f64),
    delta: f64,
) {
    let x0 = (cx - radius - 1.0).floor().max(0.0) as usize;
    let y0 = (cy - radius - 1.0).floor().max(0.0) as usize;
    let x1 = ((cx + radius + 1.0).ceil() as usize).min(width - 1);
    let y1 = ((cy + radius + 1.0).ceil() as usize).min(height - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let c = disc_coverage(cx, cy, radius, x, y);
            if c > 0.0 {
                pixels[y * width + x] += delta * c;
                if c >= 0.5 {
                    mask[y * width + x] = true;
                }
            }
        }
    }
}

fn render(spec: &FrameSpec, label: Label, rng: &mut ChaCha8Rng) -> Frame {
    let (w, h) = (spec.width, spec.height);
    let mut pixels = render_background(spec, rng);
    let mut mask = vec![false; w * h];
    if label.is_anomaly() {
        let [cmin, cmax] = spec.blob_count_range;
        let [rmin, rmax] = spec.blob_radius_range;
        let count = rng.random_range(cmin..=cmax);
        for _ in 0..count {
            let r = if rmax > rmin { rng.random_range(rmin..=rmax) } else { rmin };
            let margin = r + 1.0;
            let cx = rng.random_range(margin..=(w as f64 - margin));
            let cy = rng.random_range(margin..=(h as f64 - margin));
            stamp_disc(&mut pixels, &mut mask, w, h, (cx, cy, r), spec.blob_intensity_delta);
        }
    }
    pixels.iter_mut().for_each(|p| *p = p.clamp(0.0, 1.0));
    Frame {
        width: w,
        height: h,
        pixels,
        label,
        mask: Some(mask),
    }
}

/// One frame of the requested label. Normal frames carry an all-false mask.
pub fn gen_frame(spec: &FrameSpec, label: Label, seed: u64) -> Result<Frame> {
    spec.validate()?;
    Ok(render(spec, label, &mut substream(seed, domain::FRAME, 0)))
}

/// One unperturbed frame per label; frame i uses substream i.
pub fn gen_frames(spec: &FrameSpec, labels: &[Label], seed: u64) -> Result<Vec<Frame>> {
    spec.validate()?;
    Ok(labels
        .par_iter()
        .enumerate()
        .map(|(i, &l)| render(spec, l, &mut substream(seed, domain::FRAME, i as u64)))
        .collect())
}

/// Separable [1 2 1]/4 blur with replicated borders.
fn blur121(px: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let l = px[y * w + x.saturating_sub(1)];
            let r = px[y * w + (x + 1).min(w - 1)];
            tmp[y * w + x] = 0.25 * l + 0.5 * px[y * w + x] + 0.25 * r;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let u = tmp[y.saturating_sub(1) * w + x];
            let d = tmp[(y + 1).min(h - 1) * w + x];
            out[y * w + x] = 0.25 * u + 0.5 * tmp[y * w + x] + 0.25 * d;
        }
    }
    out
}

/// Motion-blur and illumination surrogate: 1–3 blur passes then a gain
/// drawn from ±[0.15, 0.4] around 1 (never exactly 1).
pub fn perturb(frame: &mut Frame, rng: &mut ChaCha8Rng) {
    let passes = rng.random_range(1..=3);
    for _ in 0..passes {
        frame.pixels = blur121(&frame.pixels, frame.width, frame.height);
    }
    let magnitude = rng.random_range(0.15..=0.4);
    let gain = if rng.random_bool(0.5) { 1.0 + magnitude } else { 1.0 - magnitude };
    frame
        .pixels
        .iter_mut()
        .for_each(|p| *p = (*p * gain).clamp(0.0, 1.0));
}

/// Frames following `plan`. Frame i is rendered from substream i and, with
/// probability `blur_probability`, perturbed from an independent substream,
/// so the unperturbed content does not depend on the perturbation rate.
pub fn gen_sequence(spec: &FrameSpec, plan: &SegmentPlan, seed: u64) -> Result<Vec<Frame>> {
    spec.validate()?;
    plan.validate()?;
    let labels = plan.labels();
    Ok(labels
        .par_iter()
        .enumerate()
        .map(|(i, &l)| {
            let mut f = render(spec, l, &mut substream(seed, domain::FRAME, i as u64));
            let mut prng = substream(seed, domain::PERTURB, i as u64);
            if prng.random::<f64>() < spec.blur_probability {
                perturb(&mut f, &mut prng);
            }
            f
        })
        .collect())
}

/// Scores drawn from H₁ for anomalous frames and from H₀ otherwise.
pub fn gen_score_stream(
    h0: &GammaParams,
    h1: &GmmParams,
    plan: &SegmentPlan,
    seed: u64,
) -> Result<ScoreStream> {
    h0.validate()?;
    h1.validate()?;
    plan.validate()?;
    let gamma = Gamma::new(h0.k, h0.theta).map_err(|e| Error::Spec(e.to_string()))?;
    let records = plan
        .labels()
        .into_iter()
        .enumerate()
        .map(|(t, y)| {
            let mut rng = substream(seed, domain::SCORE, t as u64);
            let z = if y.is_anomaly() {
                h1.sample(&mut rng)
            } else {
                gamma.sample(&mut rng)
            };
            ScoreRecord { t: t as u64, z, y }
        })
        .collect();
    Ok(ScoreStream::new(records))
}

/// Contents of `manifest.json` next to a written sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceManifest {
    pub spec: FrameSpec,
    pub plan: SegmentPlan,
    pub seed: u64,
    pub frames: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
}

/// Writes `frame_NNNNN.pgm` (plus `mask_NNNNN.pgm` for frames with a
/// non-empty mask) and `manifest.json` into `dir`.
pub fn write_sequence(
    dir: &Path,
    frames: &[Frame],
    spec: &FrameSpec,
    plan: &SegmentPlan,
    seed: u64,
) -> Result<SequenceManifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(frames.len());
    for (i, f) in frames.iter().enumerate() {
        let file = format!("frame_{i:05}.pgm");
        f.write_pgm(&dir.join(&file))?;
        let mask = match &f.mask {
            Some(m) if m.iter().any(|&b| b) => {
                let name = format!("mask_{i:05}.pgm");
                let vals: Vec<f64> = m.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
                let path = dir.join(&name);
                std::fs::write(&path, encode_pgm(f.width, f.height, &vals))
                    .map_err(|e| Error::io(&path, e))?;
                Some(name)
            }
            _ => None,
        };
        entries.push(ManifestEntry {
            file,
            label: f.label,
            mask,
        });
    }
    let manifest = SequenceManifest {
        spec: spec.clone(),
        plan: plan.clone(),
        seed,
        frames: entries,
    };
    let path = dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Reads a sequence written by [`write_sequence`], restoring labels and masks.
pub fn read_sequence(dir: &Path) -> Result<(SequenceManifest, Vec<Frame>)> {
    let path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: SequenceManifest = serde_json::from_str(&text)?;
    let mut frames = Vec::with_capacity(manifest.frames.len());
    for entry in &manifest.frames {
        let mut f = Frame::read_pgm(&dir.join(&entry.file))?;
        f.label = entry.label;
        if let Some(name) = &entry.mask {
            let m = Frame::read_pgm(&dir.join(name))?;
            f = Frame::new(f.width, f.height, f.pixels, entry.label, Some(m.pixels.iter().map(|&v| v >= 0.5).collect()))?;
        } else if !entry.label.is_anomaly() {
            f.mask = Some(vec![false; f.width * f.height]);
        }
        frames.push(f);
    }
    Ok((manifest, frames))
}
