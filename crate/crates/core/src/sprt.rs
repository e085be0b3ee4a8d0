//! Sequential probability ratio test over a stream of frame scores.
//!
//! Evidence Λ accumulates log p(z|H₁) − log p(z|H₀) per frame. Crossing the
//! lower bound `a` accepts normal, crossing the upper bound `b` accepts
//! anomaly; either way Λ restarts at zero and a new window opens on the next
//! frame.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calibrate::HypothesisModels;
use crate::error::{Error, Result};
use crate::stream::ScoreStream;

/// Guard against runaway accumulation; unreachable with floored densities.
pub const LAMBDA_CLAMP: f64 = 1e6;

/// Type I (α, false alarm) and Type II (β, miss) error targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSpec {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for ErrorSpec {
    fn default() -> Self {
        Self {
            alpha: 1e-6,
            beta: 0.01,
        }
    }
}

impl ErrorSpec {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let s = Self { alpha, beta };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |p: f64| p > 0.0 && p < 1.0;
        if !(ok(self.alpha) && ok(self.beta) && self.alpha + self.beta < 1.0) {
            return Err(Error::Spec(format!(
                "need 0 < alpha, beta < 1 and alpha + beta < 1 (alpha={}, beta={})",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SprtBounds {
    pub a: f64,
    pub b: f64,
}

/// Wald's approximate stopping bounds: a = ln(β/(1−α)), b = ln((1−β)/α).
pub fn bounds(spec: ErrorSpec) -> Result<SprtBounds> {
    spec.validate()?;
    let a = (spec.beta / (1.0 - spec.alpha)).ln();
    let b = ((1.0 - spec.beta) / spec.alpha).ln();
    Ok(SprtBounds { a, b })
}

/// Anything that can turn a score into a log-likelihood ratio increment.
pub trait LikelihoodRatio {
    fn llr(&self, z: f64) -> f64;
}

impl LikelihoodRatio for HypothesisModels {
    fn llr(&self, z: f64) -> f64 {
        llr_increment(z, self)
    }
}

impl<F: Fn(f64) -> f64> LikelihoodRatio for F {
    fn llr(&self, z: f64) -> f64 {
        self(z)
    }
}

pub fn llr_increment(z: f64, models: &HypothesisModels) -> f64 {
    models.log_pdf_h1(z) - models.log_pdf_h0(z)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Normal,
    Anomaly,
    Undecided,
}

impl Decision {
    pub fn is_decided(self) -> bool {
        self != Decision::Undecided
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SprtState {
    pub lambda: f64,
    /// Index of the first frame after the last reset.
    pub window_start: usize,
    /// Index of the next frame to be consumed.
    pub t: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionEvent {
    pub window_start: u64,
    pub t_decided: u64,
    pub verdict: Decision,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub state: SprtState,
    pub increment: f64,
    /// Λ after the update; 0 when a decision reset it.
    pub lambda_after: f64,
    /// Verdict and window start index, when a bound was crossed.
    pub verdict: Option<(Decision, usize)>,
}

/// Advances the test by one frame with a precomputed increment.
pub fn step_increment(state: SprtState, increment: f64, bounds: SprtBounds) -> Step {
    let lambda = (state.lambda + increment).clamp(-LAMBDA_CLAMP, LAMBDA_CLAMP);
    let t = state.t;
    let verdict = if lambda <= bounds.a {
        Some(Decision::Normal)
    } else if lambda >= bounds.b {
        Some(Decision::Anomaly)
    } else {
        None
    };
    match verdict {
        Some(v) => Step {
            state: SprtState {
                lambda: 0.0,
                window_start: t + 1,
                t: t + 1,
            },
            increment,
            lambda_after: 0.0,
            verdict: Some((v, state.window_start)),
        },
        None => Step {
            state: SprtState {
                lambda,
                window_start: state.window_start,
                t: t + 1,
            },
            increment,
            lambda_after: lambda,
            verdict: None,
        },
    }
}

/// Advances the test by one frame with score `z`.
pub fn step(state: SprtState, z: f64, bounds: SprtBounds, models: &impl LikelihoodRatio) -> Step {
    step_increment(state, models.llr(z), bounds)
}

/// How a closed window's verdict is written onto its frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Labelling {
    /// Every frame since the last reset receives the verdict.
    #[default]
    Window,
    /// Only the frame that crossed the bound receives it.
    ClosingFrame,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub t: u64,
    pub z: f64,
    pub dllr: f64,
    pub lambda: f64,
    pub decision: Decision,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DecisionLog {
    pub frames: Vec<FrameRecord>,
    pub events: Vec<DecisionEvent>,
}

impl DecisionLog {
    pub fn decisions(&self) -> Vec<Decision> {
        self.frames.iter().map(|f| f.decision).collect()
    }

    pub fn undecided(&self) -> usize {
        self.frames.iter().filter(|f| !f.decision.is_decided()).count()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for f in &self.frames {
            out.push_str(&serde_json::to_string(f).expect("frame record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut frames = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            frames.push(
                serde_json::from_str::<FrameRecord>(line)
                    .map_err(|e| Error::Format(format!("line {}: {e}", i + 1)))?,
            );
        }
        Ok(Self {
            events: events_from_frames(&frames),
            frames,
        })
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_jsonl().as_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_jsonl(&text)
    }
}

/// Rebuilds window events from per-frame records: a window closes on every
/// frame whose Λ was reset. Only exact for window labelling.
fn events_from_frames(frames: &[FrameRecord]) -> Vec<DecisionEvent> {
    let mut events = Vec::new();
    let mut start = frames.first().map_or(0, |f| f.t);
    for f in frames {
        if f.decision.is_decided() && f.lambda == 0.0 && f.dllr != 0.0 {
            events.push(DecisionEvent {
                window_start: start,
                t_decided: f.t,
                verdict: f.decision,
            });
            start = f.t + 1;
        }
    }
    events
}

/// Summary written next to the per-frame log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SprtSummary {
    pub alpha: f64,
    pub beta: f64,
    pub bounds: SprtBounds,
    pub labelling: Labelling,
    pub frames: usize,
    pub decided_frames: usize,
    pub undecided_frames: usize,
    pub anomaly_events: usize,
    pub normal_events: usize,
    pub events: Vec<DecisionEvent>,
}

impl SprtSummary {
    pub fn new(log: &DecisionLog, spec: ErrorSpec, bounds: SprtBounds, labelling: Labelling) -> Self {
        let undecided = log.undecided();
        Self {
            alpha: spec.alpha,
            beta: spec.beta,
            bounds,
            labelling,
            frames: log.frames.len(),
            decided_frames: log.frames.len() - undecided,
            undecided_frames: undecided,
            anomaly_events: log.events.iter().filter(|e| e.verdict == Decision::Anomaly).count(),
            normal_events: log.events.iter().filter(|e| e.verdict == Decision::Normal).count(),
            events: log.events.clone(),
        }
    }
}

/// Folds [`step`] over a stream and labels frames per `labelling`. Frames of
/// a window still open at the end of the stream stay undecided.
pub fn run(
    stream: &ScoreStream,
    models: &impl LikelihoodRatio,
    spec: ErrorSpec,
    labelling: Labelling,
) -> Result<DecisionLog> {
    let bounds = bounds(spec)?;
    let mut state = SprtState::default();
    let mut log = DecisionLog {
        frames: Vec::with_capacity(stream.len()),
        events: Vec::new(),
    };
    for rec in &stream.records {
        let s = step(state, rec.z, bounds, models);
        log.frames.push(FrameRecord {
            t: rec.t,
            z: rec.z,
            dllr: s.increment,
            lambda: s.lambda_after,
            decision: Decision::Undecided,
        });
        if let Some((verdict, start)) = s.verdict {
            let end = state.t;
            match labelling {
                Labelling::Window => log.frames[start..=end]
                    .iter_mut()
                    .for_each(|f| f.decision = verdict),
                Labelling::ClosingFrame => log.frames[end].decision = verdict,
            }
            log.events.push(DecisionEvent {
                window_start: stream.records[start].t,
                t_decided: rec.t,
                verdict,
            });
        }
        state = s.state;
    }
    Ok(log)
}

/// Per-frame thresholding (`z ≥ τ` ⇒ anomaly) expressed as a decision log in
/// which every frame is its own window.
pub fn threshold_log(stream: &ScoreStream, tau: f64) -> DecisionLog {
    let mut log = DecisionLog::default();
    for rec in &stream.records {
        let decision = if rec.z >= tau {
            Decision::Anomaly
        } else {
            Decision::Normal
        };
        log.frames.push(FrameRecord {
            t: rec.t,
            z: rec.z,
            dllr: 0.0,
            lambda: 0.0,
            decision,
        });
        log.events.push(DecisionEvent {
            window_start: rec.t,
            t_decided: rec.t,
            verdict: decision,
        });
    }
    log
}
