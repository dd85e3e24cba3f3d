//! Command-line front end for the detection and tracking engine: dataset
//! synthesis, full replay, single-stage inspection, and evaluation.
//!
//! Exit codes: 0 on success, 1 on a runtime failure (corrupt data, I/O
//! mid-run, mismatched inputs), 2 on a usage or configuration error
//! (unknown flags, missing input paths, invalid config).
//!
//! All diagnostic output goes to stderr; stdout carries only the requested
//! results (latency table, metrics table, progress notes).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use dynobs_core::depth::detect_depth;
use dynobs_core::eval::{
    dynamic_gt_boxes, dynamic_pred_boxes, evaluate_sweep, pair_frames, sweep_thresholds,
    write_metrics_csv, write_report_jsonl, MatchStrategy, ThresholdMetrics,
};
use dynobs_core::fusion::fuse;
use dynobs_core::io::{read_gt, read_results, write_results, Dataset, IoError};
use dynobs_core::lidar::detect_lidar;
use dynobs_core::obstacle::{Obstacle3d, Source};
use dynobs_core::pipeline::{
    run_dataset, thinning_seed, PipelineConfig, PipelineError, PipelineMode,
};
use dynobs_core::synth::{benchmark_scene, close_pair_scene, mini_scene, write_dataset, SceneSpec};

const EXIT_RUNTIME: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "dynobs", version, about = "Multi-sensor dynamic obstacle detection and tracking")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Replay a dataset through the full pipeline and write tracked results.
    Track(TrackArgs),
    /// Run a single detection stage over a dataset, without tracking.
    Detect(DetectArgs),
    /// Render a synthetic scene into a dataset directory.
    Synth(SynthArgs),
    /// Score a results file against ground truth over an IoU sweep.
    Eval(EvalArgs),
}

#[derive(Args)]
struct TrackArgs {
    /// Dataset directory (manifest.jsonl plus referenced files).
    #[arg(long)]
    dataset: PathBuf,
    /// Pipeline config JSON; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output results file (JSON lines, one record per frame).
    #[arg(long)]
    out: PathBuf,
    /// Override the config's RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's sensor mode.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Skip unreadable frames instead of aborting the run.
    #[arg(long)]
    skip_bad_frames: bool,
}

#[derive(Args)]
struct DetectArgs {
    /// Dataset directory (manifest.jsonl plus referenced files).
    #[arg(long)]
    dataset: PathBuf,
    /// Pipeline config JSON; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output detections file (JSON lines, one record per frame).
    #[arg(long)]
    out: PathBuf,
    /// Which stage to run in isolation.
    #[arg(long, value_enum)]
    stage: StageArg,
    /// Override the config's RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Skip unreadable frames instead of aborting the run.
    #[arg(long)]
    skip_bad_frames: bool,
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("source").required(true).multiple(false))]
struct SynthArgs {
    /// Scene description JSON.
    #[arg(long, group = "source")]
    scene: Option<PathBuf>,
    /// One of the scenes shipped with the tool.
    #[arg(long, value_enum, group = "source")]
    builtin: Option<BuiltinScene>,
    /// Output dataset directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// RNG seed for the rendered sensor noise.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EvalArgs {
    /// Results file produced by `track`.
    #[arg(long)]
    results: PathBuf,
    /// Ground-truth file (gt.jsonl of a synthetic dataset, or hand-made).
    #[arg(long)]
    gt: PathBuf,
    /// First IoU threshold of the sweep.
    #[arg(long, default_value_t = 0.3)]
    iou_start: f64,
    /// Last IoU threshold of the sweep (inclusive).
    #[arg(long, default_value_t = 0.7)]
    iou_end: f64,
    /// Sweep step.
    #[arg(long, default_value_t = 0.2)]
    iou_step: f64,
    /// Use maximum-cardinality matching instead of greedy descending-IoU.
    #[arg(long)]
    optimal: bool,
    /// Write the per-threshold metrics as JSON lines.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write the per-threshold metrics as a CSV table.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Full,
    LidarOnly,
    VisualOnly,
}

impl From<ModeArg> for PipelineMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Full => PipelineMode::Full,
            ModeArg::LidarOnly => PipelineMode::LidarOnly,
            ModeArg::VisualOnly => PipelineMode::VisualOnly,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum StageArg {
    /// Point-cloud cascade only.
    Lidar,
    /// Depth-image detectors only (ensemble output).
    Depth,
    /// Both detectors plus fusion.
    Fused,
}

#[derive(Clone, Copy, ValueEnum)]
enum BuiltinScene {
    /// 30 s benchmark: four walkers and three pillars.
    Benchmark,
    /// Two walkers passing close to each other.
    ClosePair,
    /// 2 s smoke-test scene: one walker, one pillar.
    Mini,
}

struct CliError {
    code: u8,
    msg: String,
}

impl CliError {
    fn usage(msg: impl Into<String>) -> Self {
        CliError { code: EXIT_USAGE, msg: msg.into() }
    }

    fn runtime(msg: impl Into<String>) -> Self {
        CliError { code: EXIT_RUNTIME, msg: msg.into() }
    }
}

/// Missing input paths are invocation mistakes; anything that goes wrong
/// after the file opened is a runtime failure.
fn io_error(e: IoError) -> CliError {
    let code = match &e {
        IoError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => EXIT_USAGE,
        _ => EXIT_RUNTIME,
    };
    CliError { code, msg: e.to_string() }
}

fn pipeline_error(e: PipelineError) -> CliError {
    match e {
        PipelineError::Config(msg) => CliError::usage(format!("configuration: {msg}")),
        PipelineError::Io(e) => io_error(e),
    }
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig, CliError> {
    let Some(path) = path else {
        return Ok(PipelineConfig::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
    let cfg: PipelineConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
    cfg.validate().map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Track(a) => cmd_track(a),
        Cmd::Detect(a) => cmd_detect(a),
        Cmd::Synth(a) => cmd_synth(a),
        Cmd::Eval(a) => cmd_eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.msg);
            ExitCode::from(e.code)
        }
    }
}

fn cmd_track(a: TrackArgs) -> Result<(), CliError> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(mode) = a.mode {
        cfg.mode = mode.into();
    }
    if a.skip_bad_frames {
        cfg.skip_bad_frames = true;
    }

    let out = run_dataset(&a.dataset, &cfg).map_err(pipeline_error)?;
    write_results(&a.out, &out.frames).map_err(io_error)?;
    if !out.skipped.is_empty() {
        log::warn!("skipped {} unreadable frame(s)", out.skipped.len());
    }
    print!("{}", out.timings.table_string());
    Ok(())
}

/// One frame of single-stage output: enough to inspect a stage without
/// dragging in track identities or motion state.
#[derive(Serialize)]
struct DetectFrame {
    stamp: f64,
    obstacles: Vec<DetectBox>,
}

#[derive(Serialize)]
struct DetectBox {
    center: [f64; 3],
    size: [f64; 3],
    source: Source,
}

fn detect_rows(obstacles: &[Obstacle3d]) -> Vec<DetectBox> {
    obstacles
        .iter()
        .map(|o| DetectBox {
            center: [o.bbox.center.x, o.bbox.center.y, o.bbox.center.z],
            size: o.bbox.size,
            source: o.source,
        })
        .collect()
}

fn cmd_detect(a: DetectArgs) -> Result<(), CliError> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let ds = Dataset::open(&a.dataset).map_err(io_error)?;

    let mut lines = String::new();
    for i in 0..ds.len() {
        let bundle = match ds.load_frame(i) {
            Ok(b) => b,
            Err(e) if a.skip_bad_frames => {
                log::warn!("skipping frame {i}: {e}");
                continue;
            }
            Err(e) => return Err(io_error(e)),
        };
        // The stage runs exactly as it would inside `track`: same config,
        // same per-frame seed, so stage output here matches a full run.
        let seed = thinning_seed(cfg.seed, i as u64);
        let obstacles = match a.stage {
            StageArg::Lidar => detect_lidar(&bundle.cloud, &bundle.odom, &cfg.lidar, seed),
            StageArg::Depth => bundle
                .depth
                .as_ref()
                .map(|d| detect_depth(d, &bundle.odom, &cfg.depth).ensemble)
                .unwrap_or_default(),
            StageArg::Fused => {
                let lidar = detect_lidar(&bundle.cloud, &bundle.odom, &cfg.lidar, seed);
                let visual = bundle
                    .depth
                    .as_ref()
                    .map(|d| detect_depth(d, &bundle.odom, &cfg.depth).ensemble);
                fuse(
                    Some(&lidar),
                    visual.as_deref(),
                    &bundle.det2d,
                    ds.camera.as_ref(),
                    &bundle.odom,
                    &cfg.fusion,
                )
                .obstacles
            }
        };
        let row = DetectFrame { stamp: bundle.stamp, obstacles: detect_rows(&obstacles) };
        let json = serde_json::to_string(&row)
            .map_err(|e| CliError::runtime(format!("encoding frame {i}: {e}")))?;
        lines.push_str(&json);
        lines.push('\n');
    }
    fs::write(&a.out, lines)
        .map_err(|e| CliError::runtime(format!("writing {}: {e}", a.out.display())))?;
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<(), CliError> {
    let spec: SceneSpec = match (&a.scene, a.builtin) {
        (Some(path), None) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::usage(format!("scene {}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::usage(format!("scene {}: {e}", path.display())))?
        }
        (None, Some(BuiltinScene::Benchmark)) => benchmark_scene(),
        (None, Some(BuiltinScene::ClosePair)) => close_pair_scene(),
        (None, Some(BuiltinScene::Mini)) => mini_scene(),
        _ => unreachable!("clap enforces exactly one scene source"),
    };
    spec.validate().map_err(CliError::usage)?;
    let frames = write_dataset(&spec, &a.out, a.seed).map_err(io_error)?;
    println!("wrote {frames} frames to {}", a.out.display());
    Ok(())
}

fn metrics_table(metrics: &[ThresholdMetrics]) -> String {
    let mut out =
        String::from("iou_thresh       tp       fp       fn  precision   recall       f1  mean_pos_err\n");
    for m in metrics {
        let pos = m.mean_pos_err.map_or("      n/a".to_string(), |d| format!("{d:>9.4}"));
        let _ = writeln!(
            out,
            "{:>10.2} {:>8} {:>8} {:>8} {:>10.4} {:>8.4} {:>8.4}     {pos}",
            m.iou_thresh, m.tp, m.fp, m.fn_, m.precision, m.recall, m.f1
        );
    }
    out
}

fn cmd_eval(a: EvalArgs) -> Result<(), CliError> {
    if !(a.iou_step > 0.0 && a.iou_start > 0.0 && a.iou_end >= a.iou_start) {
        return Err(CliError::usage(format!(
            "invalid sweep grid: start {} end {} step {}",
            a.iou_start, a.iou_end, a.iou_step
        )));
    }
    let results = read_results(&a.results).map_err(io_error)?;
    let gt = read_gt(&a.gt).map_err(io_error)?;
    let (pairs, unpaired_gt) = pair_frames(&results, &gt).map_err(CliError::runtime)?;
    if unpaired_gt > 0 {
        log::warn!("{unpaired_gt} ground-truth frame(s) had no matching result frame");
    }
    let frames: Vec<_> =
        pairs.iter().map(|(r, g)| (dynamic_pred_boxes(r), dynamic_gt_boxes(g))).collect();
    let strategy = if a.optimal { MatchStrategy::Optimal } else { MatchStrategy::Greedy };
    let thresholds = sweep_thresholds(a.iou_start, a.iou_end, a.iou_step);
    let metrics = evaluate_sweep(&frames, &thresholds, strategy);

    print!("{}", metrics_table(&metrics));
    if let Some(path) = &a.report {
        write_report_jsonl(path, &metrics).map_err(io_error)?;
    }
    if let Some(path) = &a.csv {
        write_metrics_csv(path, &metrics).map_err(io_error)?;
    }
    Ok(())
}
