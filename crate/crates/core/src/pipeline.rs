//! End-to-end run from a single seed: synthesize training, calibration and
//! test data, train the network, score, calibrate, run thresholding and
//! SPRT, and compare them.

use serde::{Deserialize, Serialize};

use crate::calibrate::{roc, CalibrationConfig, HypothesisModels, Threshold};
use crate::error::Result;
use crate::eval::{compare, Report};
use crate::fcdd::{score_frames, train, NetworkWeights, TrainConfig};
use crate::frame::{Frame, Label};
use crate::sprt::{self, DecisionLog, ErrorSpec, Labelling};
use crate::stream::ScoreStream;
use crate::synth::{gen_frames, gen_sequence, FrameSpec, SegmentPlan};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub seed: u64,
    pub frame: FrameSpec,
    pub train_normal: usize,
    pub train_anomaly: usize,
    pub calib_normal: usize,
    pub calib_anomaly: usize,
    pub video_frames: usize,
    /// Normal-gap and anomalous-run length ranges for the test video.
    pub gap: (usize, usize),
    pub run: (usize, usize),
    /// Perturbation rate for calibration and test frames; training frames
    /// are clean.
    pub blur_probability: f64,
    pub train: TrainConfig,
    pub components: usize,
    pub errors: ErrorSpec,
    pub labelling: Labelling,
    /// Replaces the calibrated τ for the thresholding baseline.
    pub tau_override: Option<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            frame: FrameSpec::default(),
            train_normal: 400,
            train_anomaly: 100,
            calib_normal: 300,
            calib_anomaly: 150,
            video_frames: 3000,
            gap: (100, 300),
            run: (30, 120),
            blur_probability: 0.3,
            train: TrainConfig {
                learning_rate: 1e-3,
                epochs: 80,
                ..TrainConfig::default()
            },
            components: 2,
            errors: ErrorSpec::default(),
            labelling: Labelling::Window,
            tau_override: None,
        }
    }
}

/// Seeds for the independent stages, all derived from `PipelineConfig::seed`.
fn stage_seed(seed: u64, stage: u64) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(stage)
}

pub struct PipelineData {
    pub train: Vec<Frame>,
    pub calibration: Vec<Frame>,
    pub plan: SegmentPlan,
    pub video: Vec<Frame>,
}

pub struct PipelineRun {
    pub data: PipelineData,
    pub weights: NetworkWeights,
    pub loss_trace: Vec<f64>,
    pub calibration_scores: ScoreStream,
    pub video_scores: ScoreStream,
    pub models: HypothesisModels,
    pub threshold: Threshold,
    pub video_auc: f64,
    pub threshold_log: DecisionLog,
    pub sprt_log: DecisionLog,
    pub report: Report,
}

fn labelled(normal: usize, anomaly: usize) -> Vec<Label> {
    // interleave so that prefixes stay balanced
    let mut out = Vec::with_capacity(normal + anomaly);
    let (mut n, mut a) = (0, 0);
    while n < normal || a < anomaly {
        if a * normal <= n * anomaly && a < anomaly || n == normal {
            out.push(Label::Anomaly);
            a += 1;
        } else {
            out.push(Label::Normal);
            n += 1;
        }
    }
    out
}

pub fn synthesize(cfg: &PipelineConfig) -> Result<PipelineData> {
    let clean = FrameSpec {
        blur_probability: 0.0,
        ..cfg.frame.clone()
    };
    let noisy = FrameSpec {
        blur_probability: cfg.blur_probability,
        ..cfg.frame.clone()
    };
    let train = gen_frames(&clean, &labelled(cfg.train_normal, cfg.train_anomaly), stage_seed(cfg.seed, 1))?;
    let calib_labels = labelled(cfg.calib_normal, cfg.calib_anomaly);
    let calib_plan = SegmentPlan::new(
        calib_labels.len(),
        calib_labels
            .iter()
            .enumerate()
            .filter(|(_, l)| l.is_anomaly())
            .map(|(i, _)| crate::synth::Segment {
                start: i,
                end: i + 1,
                label: Label::Anomaly,
            })
            .collect(),
    )?;
    let calibration = gen_sequence(&noisy, &calib_plan, stage_seed(cfg.seed, 2))?;
    let plan = SegmentPlan::random(cfg.video_frames, cfg.gap, cfg.run, stage_seed(cfg.seed, 3))?;
    let video = gen_sequence(&noisy, &plan, stage_seed(cfg.seed, 4))?;
    Ok(PipelineData {
        train,
        calibration,
        plan,
        video,
    })
}

pub fn run(cfg: &PipelineConfig) -> Result<PipelineRun> {
    let data = synthesize(cfg)?;
    let train_cfg = TrainConfig {
        seed: stage_seed(cfg.seed, 5),
        ..cfg.train.clone()
    };
    let outcome = train(&data.train, &train_cfg)?;
    let weights = outcome.weights;

    let calibration_scores = score_frames(&weights, &data.calibration)?;
    let (mut models, threshold) = HypothesisModels::calibrate(
        &calibration_scores,
        &CalibrationConfig {
            components: cfg.components,
            seed: stage_seed(cfg.seed, 6),
            ..Default::default()
        },
    )?;
    if let Some(tau) = cfg.tau_override {
        models.tau = tau;
    }

    let video_scores = score_frames(&weights, &data.video)?;
    let video_auc = roc(&video_scores.scores(), &video_scores.labels())?.auc;
    let threshold_log = sprt::threshold_log(&video_scores, models.tau);
    let sprt_log = sprt::run(&video_scores, &models, cfg.errors, cfg.labelling)?;
    let report = compare(&threshold_log, &sprt_log, &video_scores.labels())?;

    Ok(PipelineRun {
        data,
        weights,
        loss_trace: outcome.loss_trace,
        calibration_scores,
        video_scores,
        models,
        threshold,
        video_auc,
        threshold_log,
        sprt_log,
        report,
    })
}
