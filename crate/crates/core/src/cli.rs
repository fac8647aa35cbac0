//! Command-line surface: `suppress`, `evaluate`, `synth` and `bench`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport, GroundTruth};
use crate::io::{
    group_by_image, image_path, load_config, load_detections, load_groundtruth, load_image, save_detections,
    save_groundtruth, save_image, RunReport,
};
use crate::pipeline::{suppress, Detection, Method, Preset, SolverStatus, StageTimes, SuppressionConfig};
use crate::synth::{synth_scene, SceneSpec};

pub const GROUNDTRUTH_FILE: &str = "groundtruth.json";
pub const DETECTIONS_FILE: &str = "detections.json";

#[derive(Debug, Parser)]
#[command(name = "qubo-suppress", version, about = "QUBO-based suppression of redundant detection boxes")]
struct Cli {
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Suppress redundant detections.
    Suppress(SuppressArgs),
    /// Score predictions against ground truth (COCO-style).
    Evaluate(EvaluateArgs),
    /// Generate a synthetic scene directory.
    Synth(SynthArgs),
    /// Compare per-stage run times of several methods on a scene directory.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// Flat key-value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named preprocessing preset: main, regime1, regime2, regime3.
    #[arg(long, conflicts_with = "config")]
    preset: Option<Preset>,
}

#[derive(Debug, Args)]
struct SuppressArgs {
    #[arg(long)]
    detections: PathBuf,
    /// Directory holding `<image_id>.png`.
    #[arg(long)]
    images: Option<PathBuf>,
    /// nms, soft_nms, qf, qsqs, qsqs_c, qaqs or qaqs_c.
    #[arg(long)]
    method: Option<Method>,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    output: PathBuf,
    /// Per-image run report (JSON).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    groundtruth: PathBuf,
    /// Also write the report as JSON.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    objects: usize,
    #[arg(long)]
    occlusion: f64,
    #[arg(long)]
    out: PathBuf,
    /// Number of images; ids run from 1.
    #[arg(long, default_value_t = 1)]
    images: usize,
    /// Side length of each square image.
    #[arg(long, default_value_t = 512)]
    size: usize,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Directory produced by `synth`.
    #[arg(long)]
    scene: PathBuf,
    /// Comma-separated methods.
    #[arg(long, value_delimiter = ',', default_value = "nms,soft_nms,qf,qsqs,qsqs_c,qaqs,qaqs_c")]
    methods: Vec<Method>,
    #[command(flatten)]
    config: ConfigArgs,
    /// Also write every run report as a JSON array.
    #[arg(long)]
    report: Option<PathBuf>,
}

fn resolve_config(args: &ConfigArgs, method: Option<Method>) -> Result<SuppressionConfig> {
    match (&args.config, args.preset) {
        (Some(path), _) => load_config(path, method),
        (None, preset) => {
            let cfg = SuppressionConfig::preset(preset.unwrap_or(Preset::Main), method.unwrap_or(Method::QaqsC));
            cfg.validate()?;
            Ok(cfg)
        }
    }
}

/// Suppresses every image's detections, in parallel over images. Output
/// and report are ordered by image id whatever the schedule.
pub fn run_suppression(
    dets: &[Detection],
    images: Option<&Path>,
    cfg: &SuppressionConfig,
) -> Result<(Vec<Detection>, RunReport)> {
    if cfg.method.needs_image() && images.is_none() {
        return Err(Error::MissingImage(cfg.method.name().into()));
    }
    let groups: Vec<(i64, Vec<Detection>)> = group_by_image(dets).into_iter().collect();
    let results: Vec<_> = groups
        .par_iter()
        .map(|(id, group)| {
            let raster = match images {
                Some(dir) if cfg.method.needs_image() => Some(load_image(&image_path(dir, *id))?),
                _ => None,
            };
            suppress(raster.as_ref(), group, cfg)
        })
        .collect::<Result<_>>()?;
    let mut kept = Vec::new();
    let mut reports = Vec::with_capacity(results.len());
    for r in results {
        kept.extend(r.detections);
        reports.push(r.report);
    }
    Ok((kept, RunReport { method: cfg.method, images: reports }))
}

fn cmd_suppress(args: &SuppressArgs) -> Result<String> {
    let cfg = resolve_config(&args.config, args.method)?;
    if cfg.method.needs_image() && args.images.is_none() {
        return Err(Error::Config(format!("method {} compares image crops and needs --images", cfg.method.name())));
    }
    let dets = load_detections(&args.detections)?;
    let (kept, report) = run_suppression(&dets, args.images.as_deref(), &cfg)?;
    save_detections(&args.output, &kept)?;
    if let Some(path) = &args.report {
        report.save(path)?;
    }
    Ok(format!("{}: kept {} of {} detections over {} images\n", cfg.method.name(), kept.len(), dets.len(), report.images.len()))
}

pub fn format_report(report: &EvalReport) -> String {
    let mut out = String::new();
    for (name, value) in report.metrics() {
        match value {
            Some(v) => writeln!(out, "{name:<8} {v:.4}"),
            None => writeln!(out, "{name:<8} n/a"),
        }
        .expect("writing to a String");
    }
    out
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<String> {
    let preds = load_detections(&args.predictions)?;
    let gts = load_groundtruth(&args.groundtruth)?;
    let report = evaluate(&preds, &gts)?;
    if let Some(path) = &args.output {
        let text = serde_json::to_string_pretty(&report).map_err(|source| Error::Json { path: path.clone(), source })?;
        std::fs::write(path, text + "\n").map_err(|source| Error::Io { path: path.clone(), source })?;
    }
    Ok(format_report(&report))
}

fn cmd_synth(args: &SynthArgs) -> Result<String> {
    if args.images == 0 {
        return Err(Error::Config("--images must be at least 1".into()));
    }
    std::fs::create_dir_all(&args.out).map_err(|source| Error::Io { path: args.out.clone(), source })?;
    let mut gts: Vec<GroundTruth> = Vec::new();
    let mut dets: Vec<Detection> = Vec::new();
    for id in 1..=args.images as i64 {
        let spec = SceneSpec { image_id: id, ..SceneSpec::new(args.seed, args.objects, args.occlusion, args.size) };
        let scene = synth_scene(&spec)?;
        save_image(&image_path(&args.out, id), &scene.image)?;
        gts.extend(scene.groundtruth);
        dets.extend(scene.detections);
    }
    save_groundtruth(&args.out.join(GROUNDTRUTH_FILE), &gts)?;
    save_detections(&args.out.join(DETECTIONS_FILE), &dets)?;
    Ok(format!("wrote {} images, {} objects, {} detections to {}\n", args.images, gts.len(), dets.len(), args.out.display()))
}

fn cmd_bench(args: &BenchArgs) -> Result<String> {
    let dets = load_detections(&args.scene.join(DETECTIONS_FILE))?;
    let mut table = String::new();
    writeln!(
        table,
        "{:<9} {:>6} {:>6} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>8}  status",
        "method", "input", "kept", "patch_ms", "ssim_ms", "build_ms", "solve_ms", "soft_ms", "total_ms", "ssim_ev"
    )
    .expect("writing to a String");
    let mut reports = Vec::new();
    for &method in &args.methods {
        let cfg = resolve_config(&args.config, Some(method))?;
        let (kept, report) = run_suppression(&dets, Some(&args.scene), &cfg)?;
        let mut t = StageTimes::default();
        for r in &report.images {
            t.accumulate(&r.stage_times);
        }
        let evals: usize = report.images.iter().map(|r| r.ssim_evaluations).sum();
        let status = report.images.iter().fold(SolverStatus::NotApplicable, |acc, r| acc.combine(r.status)).name();
        let ms = |s: f64| s * 1e3;
        writeln!(
            table,
            "{:<9} {:>6} {:>6} {:>9.2} {:>9.2} {:>9.2} {:>9.2} {:>9.2} {:>9.2} {:>8}  {status}",
            method.name(),
            dets.len(),
            kept.len(),
            ms(t.patch_extraction),
            ms(t.ssim),
            ms(t.build),
            ms(t.solve),
            ms(t.soft_score),
            ms(t.total()),
            evals,
        )
        .expect("writing to a String");
        reports.push(report);
    }
    if let Some(path) = &args.report {
        let text = serde_json::to_string_pretty(&reports).map_err(|source| Error::Json { path: path.clone(), source })?;
        std::fs::write(path, text + "\n").map_err(|source| Error::Io { path: path.clone(), source })?;
    }
    Ok(table)
}

fn dispatch(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Suppress(a) => cmd_suppress(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Bench(a) => cmd_bench(a),
    }
}

/// Parses `argv` and runs the command, printing results to stdout and
/// errors to stderr. Returns the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let outcome = match cli.workers {
        Some(0) => Err(Error::Config("--workers must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(e.to_string()))
            .and_then(|pool| pool.install(|| dispatch(&cli))),
        None => dispatch(&cli),
    };
    match outcome {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
