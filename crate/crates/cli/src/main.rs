use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use sewerwatch::calibrate::{CalibrationConfig, HypothesisModels};
use sewerwatch::eval::compare;
use sewerwatch::fcdd::{explain, loss_csv, score_frames, train, write_overlay, NetworkWeights, TrainConfig};
use sewerwatch::pipeline::{self, PipelineConfig};
use sewerwatch::sprt::{self, DecisionLog, ErrorSpec, SprtSummary};
use sewerwatch::synth::{gen_sequence, read_sequence, write_sequence, FrameSpec, SegmentPlan};
use sewerwatch::{Frame, ScoreStream};
use sewerwatch_cli::{config, plot};

/// Sewer deposit detection on synthetic inspection video: FCDD scoring,
/// score calibration and sequential (SPRT) decisions.
#[derive(Parser)]
#[command(name = "sewerwatch", version)]
struct RunConfig {
    /// Plain-text file of `flag = value` lines for the subcommand; flags on
    /// the command line take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct OutDir {
    /// Directory for all outputs of the subcommand.
    #[arg(long, env = "SEWERWATCH_OUT", default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct FrameArgs {
    /// Frame width in pixels (multiple of 4).
    #[arg(long, default_value_t = FrameSpec::default().width)]
    width: usize,
    /// Frame height in pixels (multiple of 4).
    #[arg(long, default_value_t = FrameSpec::default().height)]
    height: usize,
    /// Background value-noise cells across the frame width.
    #[arg(long, default_value_t = FrameSpec::default().background_texture_scale)]
    texture_scale: f64,
    #[arg(long, default_value_t = FrameSpec::default().blob_count_range[0])]
    blob_count_min: u32,
    #[arg(long, default_value_t = FrameSpec::default().blob_count_range[1])]
    blob_count_max: u32,
    #[arg(long, default_value_t = FrameSpec::default().blob_radius_range[0])]
    blob_radius_min: f64,
    #[arg(long, default_value_t = FrameSpec::default().blob_radius_range[1])]
    blob_radius_max: f64,
    /// Intensity offset of a deposit blob at full coverage.
    #[arg(long, default_value_t = FrameSpec::default().blob_intensity_delta)]
    blob_delta: f64,
    /// Standard deviation of per-pixel Gaussian noise.
    #[arg(long, default_value_t = FrameSpec::default().noise_sigma)]
    noise_sigma: f64,
}

impl FrameArgs {
    fn spec(&self, blur_probability: f64, seed: u64) -> FrameSpec {
        FrameSpec {
            width: self.width,
            height: self.height,
            background_texture_scale: self.texture_scale,
            blob_count_range: [self.blob_count_min, self.blob_count_max],
            blob_radius_range: [self.blob_radius_min, self.blob_radius_max],
            blob_intensity_delta: self.blob_delta,
            noise_sigma: self.noise_sigma,
            blur_probability,
            seed,
        }
    }
}

/// Training overrides; unset values fall back to the subcommand's defaults.
#[derive(Args)]
struct TrainArgs {
    /// Adam learning rate [train: 1e-4, pipeline: 1e-3].
    #[arg(long)]
    lr: Option<f64>,
    /// Mini-batch size [32].
    #[arg(long)]
    batch_size: Option<usize>,
    /// Passes over the training set [train: 30, pipeline: 80].
    #[arg(long)]
    epochs: Option<usize>,
    /// Probability of augmenting each training image [0.5].
    #[arg(long)]
    augment_fraction: Option<f64>,
    /// Clamp on 1 - exp(-z) inside the anomaly log term [1e-6].
    #[arg(long)]
    loss_epsilon: Option<f64>,
}

impl TrainArgs {
    fn apply(&self, base: TrainConfig) -> TrainConfig {
        TrainConfig {
            learning_rate: self.lr.unwrap_or(base.learning_rate),
            batch_size: self.batch_size.unwrap_or(base.batch_size),
            epochs: self.epochs.unwrap_or(base.epochs),
            augment_fraction: self.augment_fraction.unwrap_or(base.augment_fraction),
            loss_clamp_epsilon: self.loss_epsilon.unwrap_or(base.loss_clamp_epsilon),
            ..base
        }
    }
}

#[derive(Args)]
struct PlanArgs {
    /// Shortest and longest normal stretch between deposits.
    #[arg(long, default_value_t = 100)]
    gap_min: usize,
    #[arg(long, default_value_t = 300)]
    gap_max: usize,
    /// Shortest and longest deposit run.
    #[arg(long, default_value_t = 30)]
    run_min: usize,
    #[arg(long, default_value_t = 120)]
    run_max: usize,
}

#[derive(Args)]
struct SprtArgs {
    /// Target type I error (false alarm) rate.
    #[arg(long, default_value_t = ErrorSpec::default().alpha)]
    alpha: f64,
    /// Target type II error (miss) rate.
    #[arg(long, default_value_t = ErrorSpec::default().beta)]
    beta: f64,
    /// Frames labelled by each decision.
    #[arg(long, value_enum, default_value_t = Labelling::Window)]
    labelling: Labelling,
}

#[derive(Clone, Copy, ValueEnum)]
enum Labelling {
    /// Every frame of the window that produced the decision.
    Window,
    /// Only the frame at which the bound was crossed.
    ClosingFrame,
}

impl From<Labelling> for sprt::Labelling {
    fn from(l: Labelling) -> Self {
        match l {
            Labelling::Window => sprt::Labelling::Window,
            Labelling::ClosingFrame => sprt::Labelling::ClosingFrame,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PlotKind {
    Timeline,
    Histogram,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Render a labelled synthetic sequence as PGM frames, masks and manifest.json.
    Synth {
        #[arg(long, default_value_t = 500)]
        frames: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Probability that a frame gets a transient blur and gain change.
        #[arg(long, default_value_t = 0.0)]
        blur_probability: f64,
        #[command(flatten)]
        plan: PlanArgs,
        #[command(flatten)]
        frame: FrameArgs,
        #[command(flatten)]
        out: OutDir,
    },
    /// Train the network on a synthesized sequence; writes weights.json and loss.csv.
    Train {
        /// Directory written by `synth`.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        out: OutDir,
    },
    /// Score every frame of a sequence; writes scores.jsonl and optional heatmap overlays.
    Score {
        #[arg(long)]
        weights: PathBuf,
        /// Directory written by `synth`.
        #[arg(long)]
        data: PathBuf,
        /// Number of deposit frames to write heatmap overlays for.
        #[arg(long, default_value_t = 0)]
        heatmaps: usize,
        #[command(flatten)]
        out: OutDir,
    },
    /// Fit the H0/H1 score densities and the Youden threshold; writes models.json and threshold.json.
    Calibrate {
        /// Labelled calibration scores (JSONL).
        #[arg(long)]
        scores: PathBuf,
        /// Gaussian mixture components for H1.
        #[arg(long, default_value_t = 2)]
        components: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = CalibrationConfig::default().em_tol)]
        em_tol: f64,
        #[arg(long, default_value_t = CalibrationConfig::default().em_max_iter)]
        em_max_iter: usize,
        #[command(flatten)]
        out: OutDir,
    },
    /// Run the SPRT over a score stream; writes decisions.jsonl and sprt_summary.json.
    Sprt {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        models: PathBuf,
        #[command(flatten)]
        sprt: SprtArgs,
        #[command(flatten)]
        out: OutDir,
    },
    /// Compare per-frame thresholding with SPRT decisions; writes report.csv and report.txt.
    Eval {
        /// Score stream with ground truth (JSONL).
        #[arg(long)]
        scores: PathBuf,
        /// Fitted models; supplies the threshold.
        #[arg(long)]
        models: PathBuf,
        /// SPRT decision log (JSONL).
        #[arg(long)]
        decisions: PathBuf,
        /// Use this threshold instead of the calibrated one.
        #[arg(long)]
        tau: Option<f64>,
        #[command(flatten)]
        out: OutDir,
    },
    /// Draw timeline.svg (scores and decisions) and/or histogram.svg (calibration fit).
    Plot {
        #[arg(long, value_enum, default_value_t = PlotKind::Both)]
        kind: PlotKind,
        /// Scores for the timeline (test stream) and histogram (calibration stream).
        #[arg(long)]
        scores: PathBuf,
        /// Calibration scores for the histogram when they differ from --scores.
        #[arg(long)]
        calibration_scores: Option<PathBuf>,
        #[arg(long)]
        models: PathBuf,
        /// SPRT decision log, needed for the timeline.
        #[arg(long)]
        decisions: Option<PathBuf>,
        #[command(flatten)]
        out: OutDir,
    },
    /// Run every stage from one seed and write all artifacts.
    Pipeline {
        #[arg(long, default_value_t = PipelineConfig::default().seed)]
        seed: u64,
        #[arg(long, default_value_t = PipelineConfig::default().train_normal)]
        train_normal: usize,
        #[arg(long, default_value_t = PipelineConfig::default().train_anomaly)]
        train_anomaly: usize,
        #[arg(long, default_value_t = PipelineConfig::default().calib_normal)]
        calib_normal: usize,
        #[arg(long, default_value_t = PipelineConfig::default().calib_anomaly)]
        calib_anomaly: usize,
        /// Length of the test video.
        #[arg(long, default_value_t = PipelineConfig::default().video_frames)]
        video_frames: usize,
        /// Transient blur probability for calibration and test frames.
        #[arg(long, default_value_t = PipelineConfig::default().blur_probability)]
        blur_probability: f64,
        #[arg(long, default_value_t = 2)]
        components: usize,
        /// Replace the calibrated threshold for the thresholding baseline.
        #[arg(long)]
        tau: Option<f64>,
        /// Number of deposit frames to write heatmap overlays for.
        #[arg(long, default_value_t = 8)]
        heatmaps: usize,
        /// Also write the test video as PGM frames.
        #[arg(long)]
        write_frames: bool,
        #[command(flatten)]
        plan: PlanArgs,
        #[command(flatten)]
        frame: FrameArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        sprt: SprtArgs,
        #[command(flatten)]
        out: OutDir,
    },
}

struct Failure {
    code: u8,
    msg: String,
}

impl From<sewerwatch::Error> for Failure {
    fn from(e: sewerwatch::Error) -> Self {
        use sewerwatch::Error::*;
        let code = match e {
            Spec(_) | Config(_) => 2,
            _ => 3,
        };
        Failure { code, msg: e.to_string() }
    }
}

fn fail(code: u8, msg: impl Into<String>) -> Failure {
    Failure { code, msg: msg.into() }
}

/// Prefixes errors from reading `path` with the path unless they carry it.
fn at<T>(path: &Path, r: sewerwatch::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| {
        let io = matches!(e, sewerwatch::Error::Io { .. });
        let mut f = Failure::from(e);
        if !io {
            f.msg = format!("{}: {}", path.display(), f.msg);
        }
        f
    })
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| fail(3, format!("{}: {e}", dir.display())))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|e| fail(3, format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| fail(3, e.to_string()))?;
    text.push('\n');
    write(path, text)
}

fn write_heatmaps(dir: &Path, weights: &NetworkWeights, frames: &[Frame], count: usize) -> Result<(), Failure> {
    if count == 0 {
        return Ok(());
    }
    create_dir(dir)?;
    for (t, frame) in frames.iter().enumerate().filter(|(_, f)| f.label.is_anomaly()).take(count) {
        let map = explain(weights, frame)?;
        write_overlay(
            frame,
            &map,
            &dir.join(format!("heat_{t:05}.pgm")),
            &dir.join(format!("overlay_{t:05}.pgm")),
        )?;
    }
    Ok(())
}

fn write_plots(
    out: &Path,
    kind: PlotKind,
    log: Option<&DecisionLog>,
    test: &ScoreStream,
    calibration: &ScoreStream,
    models: &HypothesisModels,
) -> Result<(), Failure> {
    if matches!(kind, PlotKind::Timeline | PlotKind::Both) {
        let log = log.ok_or_else(|| fail(2, "the timeline needs --decisions"))?;
        if log.frames.len() != test.len() {
            return Err(fail(3, "decision log and score stream differ in length"));
        }
        if log.frames.is_empty() {
            return Err(fail(3, "empty decision log"));
        }
        write(&out.join("timeline.svg"), plot::plot_timeline(log, &test.labels(), models.tau))?;
    }
    if matches!(kind, PlotKind::Histogram | PlotKind::Both) {
        let h0 = calibration.scores_with(sewerwatch::Label::Normal);
        let h1 = calibration.scores_with(sewerwatch::Label::Anomaly);
        if h0.is_empty() || h1.is_empty() {
            return Err(fail(3, "the histogram needs scores of both classes"));
        }
        write(&out.join("histogram.svg"), plot::plot_histogram(&h0, &h1, models))?;
    }
    Ok(())
}

fn error_spec(a: &SprtArgs) -> Result<ErrorSpec, Failure> {
    ErrorSpec::new(a.alpha, a.beta).map_err(|e| fail(2, e.to_string()))
}

fn run(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Synth { frames, seed, blur_probability, plan, frame, out } => {
            let spec = frame.spec(blur_probability, seed);
            let plan = SegmentPlan::random(frames, (plan.gap_min, plan.gap_max), (plan.run_min, plan.run_max), seed)?;
            let video = gen_sequence(&spec, &plan, seed)?;
            create_dir(&out.out_dir)?;
            write_sequence(&out.out_dir, &video, &spec, &plan, seed)?;
            let anomalous = video.iter().filter(|f| f.label.is_anomaly()).count();
            println!("wrote {} frames ({anomalous} with deposits) to {}", video.len(), out.out_dir.display());
        }
        Command::Train { data, seed, train: args, out } => {
            let (_, frames) = at(&data, read_sequence(&data))?;
            let cfg = TrainConfig { seed, ..args.apply(TrainConfig::default()) };
            let outcome = train(&frames, &cfg)?;
            create_dir(&out.out_dir)?;
            outcome.weights.write(&out.out_dir.join("weights.json"))?;
            outcome.write_loss_csv(&out.out_dir.join("loss.csv"))?;
            if let Some(last) = outcome.loss_trace.last() {
                println!("trained {} epochs, final loss {last:.6}", outcome.loss_trace.len());
            }
        }
        Command::Score { weights, data, heatmaps, out } => {
            let net = at(&weights, NetworkWeights::read(&weights))?;
            let (_, frames) = at(&data, read_sequence(&data))?;
            let scores = score_frames(&net, &frames)?;
            create_dir(&out.out_dir)?;
            scores.write(&out.out_dir.join("scores.jsonl"))?;
            write_heatmaps(&out.out_dir.join("heatmaps"), &net, &frames, heatmaps)?;
            println!("scored {} frames", scores.len());
        }
        Command::Calibrate { scores, components, seed, em_tol, em_max_iter, out } => {
            let stream = at(&scores, ScoreStream::read(&scores))?;
            let cfg = CalibrationConfig { components, seed, em_tol, em_max_iter };
            let (models, threshold) = HypothesisModels::calibrate(&stream, &cfg)?;
            create_dir(&out.out_dir)?;
            models.write(&out.out_dir.join("models.json"))?;
            write_json(&out.out_dir.join("threshold.json"), &threshold)?;
            println!(
                "H0 gamma k={:.4} theta={:.4}; tau={:.6} (J={:.4})",
                models.h0.k, models.h0.theta, threshold.tau, threshold.youden_j
            );
        }
        Command::Sprt { scores, models, sprt: args, out } => {
            let stream = at(&scores, ScoreStream::read(&scores))?;
            let models = at(&models, HypothesisModels::read(&models))?;
            let spec = error_spec(&args)?;
            let log = sprt::run(&stream, &models, spec, args.labelling.into())?;
            let summary = SprtSummary::new(&log, spec, sprt::bounds(spec)?, args.labelling.into());
            create_dir(&out.out_dir)?;
            log.write_jsonl(&out.out_dir.join("decisions.jsonl"))?;
            write_json(&out.out_dir.join("sprt_summary.json"), &summary)?;
            println!(
                "bounds a={:.4} b={:.4}; {} decisions, {} undecided frames",
                summary.bounds.a,
                summary.bounds.b,
                summary.events.len(),
                summary.undecided_frames
            );
        }
        Command::Eval { scores, models, decisions, tau, out } => {
            let stream = at(&scores, ScoreStream::read(&scores))?;
            let models = at(&models, HypothesisModels::read(&models))?;
            let log = at(&decisions, DecisionLog::read_jsonl(&decisions))?;
            let tau = tau.unwrap_or(models.tau);
            let report = compare(&sprt::threshold_log(&stream, tau), &log, &stream.labels())?;
            create_dir(&out.out_dir)?;
            write(&out.out_dir.join("report.csv"), report.to_csv())?;
            let table = report.to_table();
            write(&out.out_dir.join("report.txt"), &table)?;
            print!("{table}");
        }
        Command::Plot { kind, scores, calibration_scores, models, decisions, out } => {
            let test = at(&scores, ScoreStream::read(&scores))?;
            let calibration = match &calibration_scores {
                Some(p) => at(p, ScoreStream::read(p))?,
                None => test.clone(),
            };
            let models = at(&models, HypothesisModels::read(&models))?;
            let log = match &decisions {
                Some(p) => Some(at(p, DecisionLog::read_jsonl(p))?),
                None => None,
            };
            create_dir(&out.out_dir)?;
            write_plots(&out.out_dir, kind, log.as_ref(), &test, &calibration, &models)?;
        }
        Command::Pipeline {
            seed,
            train_normal,
            train_anomaly,
            calib_normal,
            calib_anomaly,
            video_frames,
            blur_probability,
            components,
            tau,
            heatmaps,
            write_frames,
            plan,
            frame,
            train: train_args,
            sprt: sprt_args,
            out,
        } => {
            let base = PipelineConfig::default();
            let cfg = PipelineConfig {
                seed,
                frame: frame.spec(0.0, seed),
                train_normal,
                train_anomaly,
                calib_normal,
                calib_anomaly,
                video_frames,
                gap: (plan.gap_min, plan.gap_max),
                run: (plan.run_min, plan.run_max),
                blur_probability,
                train: train_args.apply(base.train.clone()),
                components,
                errors: error_spec(&sprt_args)?,
                labelling: sprt_args.labelling.into(),
                tau_override: tau,
            };
            cfg.train.validate()?;
            let r = pipeline::run(&cfg)?;
            let dir = &out.out_dir;
            create_dir(dir)?;
            write_json(&dir.join("config.json"), &cfg)?;
            r.weights.write(&dir.join("weights.json"))?;
            write(&dir.join("loss.csv"), loss_csv(&r.loss_trace))?;
            r.calibration_scores.write(&dir.join("calibration_scores.jsonl"))?;
            r.video_scores.write(&dir.join("scores.jsonl"))?;
            r.models.write(&dir.join("models.json"))?;
            write_json(&dir.join("threshold.json"), &r.threshold)?;
            r.threshold_log.write_jsonl(&dir.join("threshold_decisions.jsonl"))?;
            r.sprt_log.write_jsonl(&dir.join("decisions.jsonl"))?;
            let summary = SprtSummary::new(&r.sprt_log, cfg.errors, sprt::bounds(cfg.errors)?, cfg.labelling);
            write_json(&dir.join("sprt_summary.json"), &summary)?;
            write(&dir.join("report.csv"), r.report.to_csv())?;
            let table = r.report.to_table();
            write(&dir.join("report.txt"), &table)?;
            write_plots(dir, PlotKind::Both, Some(&r.sprt_log), &r.video_scores, &r.calibration_scores, &r.models)?;
            write_heatmaps(&dir.join("heatmaps"), &r.weights, &r.data.video, heatmaps)?;
            if write_frames {
                let video_dir = dir.join("video");
                create_dir(&video_dir)?;
                let spec = FrameSpec { blur_probability, ..cfg.frame.clone() };
                write_sequence(&video_dir, &r.data.video, &spec, &r.data.plan, seed)?;
            }
            println!("test ROC AUC {:.4}, tau {:.6}", r.video_auc, r.models.tau);
            print!("{table}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = match config::apply(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("sewerwatch: {msg}");
            return ExitCode::from(2);
        }
    };
    let command = RunConfig::command().mut_subcommands(|s| s.args_override_self(true));
    let cli = command
        .try_get_matches_from(args)
        .and_then(|m| RunConfig::from_arg_matches(&m))
        .unwrap_or_else(|e| e.exit());
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("sewerwatch: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
