use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::error;

use omnisum::pipeline::evaluate::{evaluate, DecisionTable, EvaluationReport};
use omnisum::pipeline::fixture::{generate_fixture, write_fixture, FixtureKind, FixtureParams, GroundTruth};
use omnisum::pipeline::{run_pipeline, PipelineConfig, RunError, RunOptions, Stage, SummaryManifest};
use omnisum::saliency::{load_saliency_sequence, SaliencySource};
use omnisum::summarize::KnapsackValue;

const EXIT_CONFIG: u8 = 2;
const EXIT_STAGE: u8 = 3;

#[derive(Parser)]
#[command(name = "omnisum", version, about = "Saliency-driven summarization of 360-degree video")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage and write the summary.
    Run(PipelineArgs),
    /// Classify the camera as static or moving.
    Decide(PipelineArgs),
    /// Run up to salient-region extraction.
    Regions(PipelineArgs),
    /// Run up to sub-volume tracking.
    Track(PipelineArgs),
    /// Run up to rendering of the 2D video.
    Render(PipelineArgs),
    /// Run up to summary selection (same as `run`).
    Summarize(PipelineArgs),
    /// Generate a synthetic fixture with ground truth.
    Fixture(FixtureArgs),
    /// Compare manifests with fixture ground truth.
    Evaluate(EvaluateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum StageArg {
    Decide,
    Saliency,
    Regions,
    Track,
    Render,
    Summarize,
}

impl From<StageArg> for Stage {
    fn from(s: StageArg) -> Stage {
        match s {
            StageArg::Decide => Stage::Decide,
            StageArg::Saliency => Stage::Saliency,
            StageArg::Regions => Stage::Regions,
            StageArg::Track => Stage::Track,
            StageArg::Render => Stage::Render,
            StageArg::Summarize => Stage::Summarize,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ValueArg {
    ScoreTimesLength,
    Score,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    StaticEvent,
    Panning,
    TwoEvents,
    Dropout,
}

impl From<KindArg> for FixtureKind {
    fn from(k: KindArg) -> FixtureKind {
        match k {
            KindArg::StaticEvent => FixtureKind::StaticEvent,
            KindArg::Panning => FixtureKind::Panning,
            KindArg::TwoEvents => FixtureKind::TwoEvents,
            KindArg::Dropout => FixtureKind::Dropout,
        }
    }
}

/// Flags override values from `--config`.
#[derive(Args)]
struct PipelineArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory of numbered ERP frames.
    #[arg(long, short)]
    input: Option<PathBuf>,
    /// Directory of numbered grayscale saliency maps.
    #[arg(long)]
    saliency_dir: Option<PathBuf>,
    /// JSON array of per-frame scores for the 2D video.
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Output directory [default: out].
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Reuse earlier stages from the manifest in the output directory.
    #[arg(long, value_enum)]
    resume_from: Option<StageArg>,
    /// Worker threads [default: available parallelism].
    #[arg(long)]
    jobs: Option<usize>,
    /// Motion-score threshold per sampled frame pair.
    #[arg(long)]
    t0: Option<f64>,
    /// Saliency threshold for region pixels (0-255).
    #[arg(long)]
    t1: Option<u8>,
    /// Clustering radius in radians of great-circle distance.
    #[arg(long)]
    t2: Option<f64>,
    /// Max centroid distance for linking regions, in ERP pixels.
    #[arg(long)]
    t3: Option<f64>,
    /// Max frames a sub-volume may go unobserved before closing.
    #[arg(long)]
    t4: Option<usize>,
    /// Height of the north and south polar bands, as a fraction of the frame.
    #[arg(long)]
    band_fraction: Option<f64>,
    /// Fraction of moving pairs needed to call the camera moving.
    #[arg(long)]
    majority_fraction: Option<f64>,
    /// Use every n-th frame for the camera decision.
    #[arg(long)]
    decision_stride: Option<usize>,
    /// Minimum neighbours for a core pixel.
    #[arg(long)]
    min_pts: Option<usize>,
    /// Saliency downscale factor before clustering.
    #[arg(long)]
    region_downscale: Option<usize>,
    /// Shorter sub-volumes are dropped.
    #[arg(long)]
    min_subvolume_len: Option<usize>,
    /// Horizontal field of view in degrees.
    #[arg(long)]
    fov_h: Option<f64>,
    /// Vertical field of view in degrees.
    #[arg(long)]
    fov_v: Option<f64>,
    /// Rendered width in pixels.
    #[arg(long)]
    out_w: Option<usize>,
    /// Rendered height in pixels.
    #[arg(long)]
    out_h: Option<usize>,
    /// Odd moving-average window for view centers.
    #[arg(long)]
    smoothing_window: Option<usize>,
    /// Summary length as a fraction of the 2D video.
    #[arg(long)]
    summary_ratio: Option<f64>,
    /// Item value used by the selection.
    #[arg(long, value_enum)]
    knapsack_value: Option<ValueArg>,
    /// Frame rate of the input frames; enables subsampling.
    #[arg(long)]
    input_fps: Option<f64>,
    /// Target analysis rate when --input-fps is set.
    #[arg(long)]
    analysis_fps: Option<f64>,
    /// Executable used to encode the summary frames (ffmpeg-compatible).
    #[arg(long)]
    encoder: Option<PathBuf>,
}

macro_rules! override_fields {
    ($cfg:ident, $args:ident, [$($f:ident),*]) => {
        $(if let Some(v) = $args.$f { $cfg.$f = v; })*
    };
}

impl PipelineArgs {
    fn to_config(&self) -> omnisum::Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(p) = &self.input {
            cfg.input_dir = p.clone();
        }
        if let Some(p) = &self.output {
            cfg.output_dir = p.clone();
        }
        if self.saliency_dir.is_some() {
            cfg.saliency_dir = self.saliency_dir.clone();
        }
        if self.scores.is_some() {
            cfg.scores = self.scores.clone();
        }
        if self.encoder.is_some() {
            cfg.encoder = self.encoder.clone();
        }
        if self.jobs.is_some() {
            cfg.jobs = self.jobs;
        }
        if self.input_fps.is_some() {
            cfg.input_fps = self.input_fps;
        }
        override_fields!(
            cfg,
            self,
            [
                t0, t1, t2, t3, t4, band_fraction, majority_fraction, decision_stride, min_pts, region_downscale,
                min_subvolume_len, fov_h, fov_v, out_w, out_h, smoothing_window, summary_ratio, analysis_fps
            ]
        );
        if let Some(v) = self.knapsack_value {
            cfg.knapsack_value = match v {
                ValueArg::ScoreTimesLength => KnapsackValue::ScoreTimesLength,
                ValueArg::Score => KnapsackValue::Score,
            };
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct FixtureArgs {
    #[arg(long, value_enum)]
    kind: KindArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (receives frames/, saliency/ and ground_truth.json).
    #[arg(long, short)]
    output: PathBuf,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    fps: Option<f64>,
    #[arg(long)]
    dropout_len: Option<usize>,
    /// Pan speed in ERP pixels per frame.
    #[arg(long)]
    pan_speed: Option<usize>,
    #[arg(long)]
    noise_sigma: Option<f64>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Manifest of a run; repeat together with --ground-truth.
    #[arg(long, required = true)]
    manifest: Vec<PathBuf>,
    /// Fixture ground truth, one per --manifest.
    #[arg(long, required = true)]
    ground_truth: Vec<PathBuf>,
    /// Ground-truth saliency maps (single run only). Defaults to the
    /// fixture's saliency/ directory when present.
    #[arg(long)]
    gt_saliency: Option<PathBuf>,
    /// Report JSON path. Defaults to evaluation.json next to the first manifest.
    #[arg(long)]
    report: Option<PathBuf>,
}

fn run_stages(args: &PipelineArgs, until: Stage) -> ExitCode {
    let config = match args.to_config() {
        Ok(c) => c,
        Err(e) => {
            error!("{e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let options = RunOptions {
        until,
        resume_from: args.resume_from.map(Stage::from),
    };
    match run_pipeline(&config, &options) {
        Ok(outcome) => {
            let m = &outcome.manifest;
            if let Some(d) = &m.decision {
                println!("camera: {:?} (route saliency to {})", d.label, d.recommended_saliency_model);
            }
            if let Some(svs) = &m.subvolumes {
                println!("sub-volumes: {}", svs.len());
            }
            if let Some(v) = &m.video {
                println!("2D video: {} fragments, {} frames", v.fragments.len(), v.total_frames);
            }
            if let (Some(sel), Some(s)) = (&m.selection, &m.summary) {
                println!(
                    "summary: fragments {:?}, {} frames (capacity {})",
                    sel.selected_ids, s.frame_count, sel.capacity_frames
                );
            }
            println!("manifest: {}", outcome.manifest_path.display());
            ExitCode::SUCCESS
        }
        Err(e @ RunError::Config(_)) => {
            error!("{e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(e @ RunError::Stage { .. }) => {
            error!("{e}");
            ExitCode::from(EXIT_STAGE)
        }
    }
}

fn fixture(args: &FixtureArgs) -> ExitCode {
    let d = FixtureParams::default();
    let params = FixtureParams {
        width: args.width.unwrap_or(d.width),
        height: args.height.unwrap_or(d.height),
        frame_count: args.frames.unwrap_or(d.frame_count),
        fps: args.fps.unwrap_or(d.fps),
        dropout_len: args.dropout_len.unwrap_or(d.dropout_len),
        pan_speed_px: args.pan_speed,
        noise_sigma: args.noise_sigma.unwrap_or(d.noise_sigma),
        ..d
    };
    let fx = match generate_fixture(args.kind.into(), args.seed, &params) {
        Ok(f) => f,
        Err(e) => {
            error!("{e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Err(e) = write_fixture(&fx, &args.output) {
        error!("{e}");
        return ExitCode::from(EXIT_STAGE);
    }
    println!(
        "{} fixture (seed {}): {} frames, {} events, camera {:?} -> {}",
        fx.truth.kind,
        fx.truth.seed,
        fx.frames.len(),
        fx.truth.events.len(),
        fx.truth.camera_label,
        args.output.display()
    );
    ExitCode::SUCCESS
}

fn evaluate_one(manifest_path: &Path, gt_path: &Path, gt_saliency: Option<&Path>) -> omnisum::Result<EvaluationReport> {
    let manifest = SummaryManifest::load(manifest_path)?;
    let truth = GroundTruth::load(gt_path)?;
    let default_gt = gt_path.parent().map(|p| p.join("saliency")).filter(|p| p.is_dir());
    let gt_dir = gt_saliency.map(Path::to_path_buf).or(default_gt);
    let pred_dir = manifest.saliency.as_ref().map(|r| match r.source {
        SaliencySource::External => PathBuf::from(&r.dir),
        SaliencySource::Fallback => manifest_path.parent().unwrap_or(Path::new(".")).join(&r.dir),
    });
    let sequences = match (pred_dir, gt_dir) {
        (Some(p), Some(g)) => {
            let n = truth.params.frame_count;
            Some((load_saliency_sequence(&p, Some(n), None)?, load_saliency_sequence(&g, Some(n), None)?))
        }
        _ => None,
    };
    evaluate(&manifest, &truth, sequences.as_ref().map(|(p, g)| (p, g)))
}

fn evaluate_cmd(args: &EvaluateArgs) -> ExitCode {
    if args.manifest.len() != args.ground_truth.len() {
        error!(
            "{} manifests but {} ground-truth files",
            args.manifest.len(),
            args.ground_truth.len()
        );
        return ExitCode::from(EXIT_CONFIG);
    }
    if args.gt_saliency.is_some() && args.manifest.len() > 1 {
        error!("--gt-saliency applies to a single run");
        return ExitCode::from(EXIT_CONFIG);
    }
    let mut reports = Vec::new();
    let mut table = DecisionTable::default();
    for (m, g) in args.manifest.iter().zip(&args.ground_truth) {
        match evaluate_one(m, g, args.gt_saliency.as_deref()) {
            Ok(r) => {
                if let Some(t) = &r.decision {
                    table.static_camera.correct += t.static_camera.correct;
                    table.static_camera.total += t.static_camera.total;
                    table.moving_camera.correct += t.moving_camera.correct;
                    table.moving_camera.total += t.moving_camera.total;
                }
                reports.push(r);
            }
            Err(e) => {
                error!("{}: {e}", m.display());
                return ExitCode::from(EXIT_STAGE);
            }
        }
    }
    if reports.len() == 1 {
        print!("{}", reports[0].render());
    } else {
        println!("Camera motion decision ({} runs)", reports.len());
        print!("{}", table.render());
    }
    let json = serde_json::json!({
        "runs": reports,
        "decision": table,
        "decision_accuracy": table.accuracy(),
    });
    let path = args
        .report
        .clone()
        .unwrap_or_else(|| args.manifest[0].parent().unwrap_or(Path::new(".")).join("evaluation.json"));
    if let Err(e) = fs::write(&path, serde_json::to_string_pretty(&json).expect("report serializes") + "\n") {
        error!("{}: {e}", path.display());
        return ExitCode::from(EXIT_STAGE);
    }
    println!("report: {}", path.display());
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Run(a) | Command::Summarize(a) => run_stages(a, Stage::Summarize),
        Command::Decide(a) => run_stages(a, Stage::Decide),
        Command::Regions(a) => run_stages(a, Stage::Regions),
        Command::Track(a) => run_stages(a, Stage::Track),
        Command::Render(a) => run_stages(a, Stage::Render),
        Command::Fixture(a) => fixture(a),
        Command::Evaluate(a) => evaluate_cmd(a),
    }
}
