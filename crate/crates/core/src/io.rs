//! File formats: COCO-results-style detection and ground-truth JSON, the
//! flat key-value suppression config, grayscale PNG rasters, and the JSON
//! run report.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::appearance::GrayImage;
use crate::error::{Error, Result};
use crate::eval::GroundTruth;
use crate::geometry::BBox;
use crate::pipeline::{Detection, ImageReport, Method, Preprocess, Preset, SoftScore, SuppressionConfig};
use crate::qubo::{PairwiseMode, Weights};
use crate::solver::SolverKind;

/// One record of the wire format; `score` is absent in ground truth.
/// Other COCO fields (`area`, `iscrowd`, `id`, ...) are ignored.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct Record {
    image_id: i64,
    category_id: i64,
    bbox: [f64; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_owned(), source })
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io { path: path.to_owned(), source })
}

fn parse_records(text: &str, path: &Path) -> Result<Vec<Record>> {
    serde_json::from_str(text).map_err(|source| Error::Json { path: path.to_owned(), source })
}

fn record_box(index: usize, r: &Record) -> Result<BBox> {
    let [x, y, w, h] = r.bbox;
    if !(w > 0.0 && h > 0.0) {
        return Err(Error::Record { index, reason: format!("non-positive extent {w} x {h}") });
    }
    BBox::from_xywh(x, y, w, h).map_err(|e| Error::Record { index, reason: e.to_string() })
}

pub fn parse_detections(text: &str, path: &Path) -> Result<Vec<Detection>> {
    parse_records(text, path)?
        .iter()
        .enumerate()
        .map(|(index, r)| {
            let bbox = record_box(index, r)?;
            let score = r.score.ok_or_else(|| Error::Record { index, reason: "missing score".into() })?;
            Detection::new(bbox, score, r.category_id, r.image_id)
                .map_err(|_| Error::Record { index, reason: format!("score {score} outside (0, 1]") })
        })
        .collect()
}

pub fn parse_groundtruth(text: &str, path: &Path) -> Result<Vec<GroundTruth>> {
    parse_records(text, path)?
        .iter()
        .enumerate()
        .map(|(index, r)| Ok(GroundTruth { bbox: record_box(index, r)?, category: r.category_id, image: r.image_id }))
        .collect()
}

pub fn load_detections(path: &Path) -> Result<Vec<Detection>> {
    parse_detections(&read(path)?, path)
}

pub fn load_groundtruth(path: &Path) -> Result<Vec<GroundTruth>> {
    parse_groundtruth(&read(path)?, path)
}

fn to_json<T: Serialize>(value: &T, path: &Path) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json { path: path.to_owned(), source })?;
    text.push('\n');
    Ok(text)
}

fn wire(bbox: &BBox, category: i64, image: i64, score: Option<f64>) -> Record {
    Record { image_id: image, category_id: category, bbox: bbox.to_xywh(), score }
}

pub fn detections_to_json(dets: &[Detection]) -> Result<String> {
    let records: Vec<Record> = dets.iter().map(|d| wire(&d.bbox, d.category, d.image, Some(d.score))).collect();
    to_json(&records, Path::new("<detections>"))
}

pub fn save_detections(path: &Path, dets: &[Detection]) -> Result<()> {
    write(path, &detections_to_json(dets)?)
}

pub fn save_groundtruth(path: &Path, gts: &[GroundTruth]) -> Result<()> {
    let records: Vec<Record> = gts.iter().map(|g| wire(&g.bbox, g.category, g.image, None)).collect();
    write(path, &to_json(&records, path)?)
}

/// Grayscale raster at `<dir>/<image_id>.png`.
pub fn image_path(dir: &Path, image_id: i64) -> PathBuf {
    dir.join(format!("{image_id}.png"))
}

/// Decodes any supported raster to grayscale intensities in `[0, 1]`.
/// 8-bit grayscale is read exactly as `value / 255`.
pub fn load_image(path: &Path) -> Result<GrayImage> {
    let decoded = image::open(path).map_err(|source| Error::Image { path: path.to_owned(), source })?;
    let (width, height) = (decoded.width() as usize, decoded.height() as usize);
    let pixels: Vec<f64> = match decoded {
        image::DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(|v| f64::from(v) / 255.0).collect(),
        other => other.into_luma16().into_raw().into_iter().map(|v| f64::from(v) / 65535.0).collect(),
    };
    GrayImage::new(width, height, pixels)
}

/// Writes an 8-bit grayscale PNG, rounding each intensity to the nearest level.
pub fn save_image(path: &Path, img: &GrayImage) -> Result<()> {
    let bytes: Vec<u8> = img.pixels().iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8).collect();
    let buf = image::GrayImage::from_raw(img.width() as u32, img.height() as u32, bytes)
        .expect("buffer matches dimensions");
    buf.save(path).map_err(|source| Error::Image { path: path.to_owned(), source })
}

/// Flat config document. Every key is optional; absent keys keep the
/// preset's value.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    preset: Option<String>,
    method: Option<String>,
    w1: Option<f64>,
    w2: Option<f64>,
    w3: Option<f64>,
    pairwise: Option<PairwiseMode>,
    preprocess: Option<String>,
    confidence_threshold: Option<f64>,
    preprocess_nms_threshold: Option<f64>,
    soft_score: Option<bool>,
    soft_score_sigma: Option<f64>,
    soft_score_threshold: Option<f64>,
    nms_iou_threshold: Option<f64>,
    soft_nms_sigma: Option<f64>,
    soft_nms_score_floor: Option<f64>,
    solver: Option<String>,
    time_budget: Option<f64>,
    seed: Option<u64>,
    anneal_initial_temperature: Option<f64>,
    anneal_final_temperature: Option<f64>,
    anneal_sweeps: Option<usize>,
    ssim_c1: Option<f64>,
    ssim_c2: Option<f64>,
    ssim_c3: Option<f64>,
    ssim_window_size: Option<usize>,
    ssim_window_sigma: Option<f64>,
    ssim_resize: Option<usize>,
    block_threshold: Option<usize>,
}

fn parse_solver(name: &str) -> Result<SolverKind> {
    match name.trim().to_ascii_lowercase().replace('-', "_").as_str() {
        "exhaustive" => Ok(SolverKind::Exhaustive),
        "branch_and_bound" | "bnb" => Ok(SolverKind::BranchAndBound),
        "annealing" | "anneal" => Ok(SolverKind::Annealing),
        other => match other.strip_prefix("quantum:") {
            Some(backend) => Ok(SolverKind::Quantum { backend: backend.to_owned() }),
            None => Err(Error::Config(format!("unknown solver `{name}`"))),
        },
    }
}

/// Parses a config document. `method` overrides the document's `method`
/// key; with neither, QAQS-C is used.
pub fn parse_config(text: &str, method: Option<Method>) -> Result<SuppressionConfig> {
    let f: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let preset = f.preset.as_deref().map(str::parse).transpose()?.unwrap_or(Preset::Main);
    let method = match (method, &f.method) {
        (Some(m), _) => m,
        (None, Some(name)) => name.parse()?,
        (None, None) => Method::QaqsC,
    };
    let mut cfg = SuppressionConfig::preset(preset, method);

    if f.w1.is_some() || f.w2.is_some() || f.w3.is_some() {
        let Weights { w1, w2, w3 } = cfg.weights;
        cfg.weights = Weights { w1: f.w1.unwrap_or(w1), w2: f.w2.unwrap_or(w2), w3: f.w3.unwrap_or(w3) };
    }
    if let Some(mode) = f.pairwise {
        cfg.pairwise_mode = mode;
    }
    if let Some(kind) = &f.preprocess {
        cfg.preprocess = match kind.trim().to_ascii_lowercase().as_str() {
            "none" => Preprocess::None,
            "confidence" => Preprocess::Confidence { threshold: 0.25 },
            "nms" => Preprocess::Nms { iou_threshold: 0.5 },
            other => return Err(Error::Config(format!("unknown preprocess `{other}`"))),
        };
    }
    match (&mut cfg.preprocess, f.confidence_threshold, f.preprocess_nms_threshold) {
        (Preprocess::Confidence { threshold }, Some(t), None) => *threshold = t,
        (Preprocess::Nms { iou_threshold }, None, Some(t)) => *iou_threshold = t,
        (_, None, None) => {}
        _ => return Err(Error::Config("preprocess threshold does not match the preprocess kind".into())),
    }
    if let Some(on) = f.soft_score {
        cfg.soft_score = on.then(|| cfg.soft_score.unwrap_or(SoftScore { sigma: 0.5, score_threshold: 0.01 }));
    }
    if f.soft_score_sigma.is_some() || f.soft_score_threshold.is_some() {
        let s = cfg
            .soft_score
            .as_mut()
            .ok_or_else(|| Error::Config("soft_score parameters given but soft_score is off".into()))?;
        s.sigma = f.soft_score_sigma.unwrap_or(s.sigma);
        s.score_threshold = f.soft_score_threshold.unwrap_or(s.score_threshold);
    }
    cfg.nms_iou_threshold = f.nms_iou_threshold.unwrap_or(cfg.nms_iou_threshold);
    cfg.soft_nms_sigma = f.soft_nms_sigma.unwrap_or(cfg.soft_nms_sigma);
    cfg.soft_nms_score_floor = f.soft_nms_score_floor.unwrap_or(cfg.soft_nms_score_floor);

    if let Some(name) = &f.solver {
        cfg.solver.kind = parse_solver(name)?;
    }
    if let Some(secs) = f.time_budget {
        cfg.solver.time_budget = Duration::try_from_secs_f64(secs)
            .map_err(|_| Error::Config(format!("time_budget {secs} is not a valid duration")))?;
    }
    cfg.solver.seed = f.seed.unwrap_or(cfg.solver.seed);
    let sched = &mut cfg.solver.schedule;
    sched.initial_temperature = f.anneal_initial_temperature.unwrap_or(sched.initial_temperature);
    sched.final_temperature = f.anneal_final_temperature.unwrap_or(sched.final_temperature);
    sched.sweeps = f.anneal_sweeps.unwrap_or(sched.sweeps);

    let ssim = &mut cfg.ssim;
    ssim.c1 = f.ssim_c1.unwrap_or(ssim.c1);
    if let Some(c2) = f.ssim_c2 {
        ssim.c2 = c2;
        ssim.c3 = 2.0 * c2;
    }
    ssim.c3 = f.ssim_c3.unwrap_or(ssim.c3);
    ssim.window_size = f.ssim_window_size.unwrap_or(ssim.window_size);
    ssim.window_sigma = f.ssim_window_sigma.unwrap_or(ssim.window_sigma);
    ssim.resize_dim = f.ssim_resize.unwrap_or(ssim.resize_dim);
    cfg.block_threshold = f.block_threshold.unwrap_or(cfg.block_threshold);

    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path, method: Option<Method>) -> Result<SuppressionConfig> {
    parse_config(&read(path)?, method)
}

/// Per-image outcomes of one `suppress` run, ordered by image id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method: Method,
    pub images: Vec<ImageReport>,
}

impl RunReport {
    pub fn save(&self, path: &Path) -> Result<()> {
        write(path, &to_json(self, path)?)
    }
}

/// Groups detections by image id, preserving their relative order.
pub fn group_by_image(dets: &[Detection]) -> BTreeMap<i64, Vec<Detection>> {
    let mut groups: BTreeMap<i64, Vec<Detection>> = BTreeMap::new();
    for d in dets {
        groups.entry(d.image).or_default().push(*d);
    }
    groups
}
