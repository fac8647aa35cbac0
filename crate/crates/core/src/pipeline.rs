//! End-to-end suppression for one image: preprocessing, per-category QUBO
//! construction and solving, the optional soft-scoring pass, and the greedy
//! NMS / Soft-NMS baselines.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::appearance::{extract_patches, ssim_matrix_blocked, GrayImage, SsimConfig};
use crate::error::{Error, Result};
use crate::geometry::{intersection_matrix, iou, BBox};
use crate::qubo::{build, pairwise_terms, Formulation, PairwiseMode, Weights};
use crate::reorder::rcm_order;
use crate::solver::{QuboProblem, QuboSolver, SolverConfig, SolverKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    pub score: f64,
    pub category: i64,
    pub image: i64,
}

impl Detection {
    pub fn new(bbox: BBox, score: f64, category: i64, image: i64) -> Result<Self> {
        if !(score > 0.0 && score <= 1.0) {
            return Err(Error::Config(format!("detection score {score} outside (0, 1]")));
        }
        Ok(Self { bbox, score, category, image })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Nms,
    SoftNms,
    Qf,
    Qsqs,
    QsqsC,
    Qaqs,
    QaqsC,
}

impl Method {
    pub const ALL: [Method; 7] =
        [Self::Nms, Self::SoftNms, Self::Qf, Self::Qsqs, Self::QsqsC, Self::Qaqs, Self::QaqsC];

    pub fn formulation(self) -> Option<Formulation> {
        match self {
            Self::Nms | Self::SoftNms => None,
            Self::Qf => Some(Formulation::Qf),
            Self::Qsqs => Some(Formulation::Qsqs),
            Self::QsqsC => Some(Formulation::QsqsC),
            Self::Qaqs => Some(Formulation::Qaqs),
            Self::QaqsC => Some(Formulation::QaqsC),
        }
    }

    pub fn needs_image(self) -> bool {
        self.formulation().is_some_and(Formulation::uses_appearance)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Nms => "nms",
            Self::SoftNms => "soft_nms",
            Self::Qf => "qf",
            Self::Qsqs => "qsqs",
            Self::QsqsC => "qsqs_c",
            Self::Qaqs => "qaqs",
            Self::QaqsC => "qaqs_c",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|m| m.name() == key)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

/// Filtering applied before suppression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preprocess {
    None,
    Confidence { threshold: f64 },
    Nms { iou_threshold: f64 },
}

/// Post-pass that rescales QUBO-suppressed boxes against the kept set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoftScore {
    pub sigma: f64,
    /// Rescaled scores at or above this are restored.
    pub score_threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuppressionConfig {
    pub method: Method,
    pub weights: Weights,
    pub pairwise_mode: PairwiseMode,
    pub preprocess: Preprocess,
    pub soft_score: Option<SoftScore>,
    pub nms_iou_threshold: f64,
    pub soft_nms_sigma: f64,
    pub soft_nms_score_floor: f64,
    pub solver: SolverConfig,
    pub ssim: SsimConfig,
    pub block_threshold: usize,
}

impl Default for SuppressionConfig {
    fn default() -> Self {
        Self::preset(Preset::Main, Method::QaqsC)
    }
}

/// Named preprocessing / post-pass combinations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Confidence >= 0.25, QUBO solution only.
    Main,
    /// Confidence >= 0.25, then soft-scoring.
    Regime1,
    /// NMS at IoU 0.5, QUBO solution only.
    Regime2,
    /// NMS at IoU 0.5, then soft-scoring.
    Regime3,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "main" => Ok(Self::Main),
            "regime1" => Ok(Self::Regime1),
            "regime2" => Ok(Self::Regime2),
            "regime3" => Ok(Self::Regime3),
            other => Err(Error::Config(format!("unknown preset `{other}`"))),
        }
    }
}

/// QF has no spatial-feature term; its default folds `w3` into `w2`.
pub fn default_weights(method: Method) -> Weights {
    match method {
        Method::Qf => Weights { w1: 0.4, w2: 0.6, w3: 0.0 },
        _ => Weights::default(),
    }
}

impl SuppressionConfig {
    pub fn preset(preset: Preset, method: Method) -> Self {
        let soft = SoftScore { sigma: 0.5, score_threshold: 0.01 };
        let (preprocess, soft_score) = match preset {
            Preset::Main => (Preprocess::Confidence { threshold: 0.25 }, None),
            Preset::Regime1 => (Preprocess::Confidence { threshold: 0.25 }, Some(soft)),
            Preset::Regime2 => (Preprocess::Nms { iou_threshold: 0.5 }, None),
            Preset::Regime3 => (Preprocess::Nms { iou_threshold: 0.5 }, Some(soft)),
        };
        Self {
            method,
            weights: default_weights(method),
            pairwise_mode: PairwiseMode::Iou,
            preprocess,
            soft_score,
            nms_iou_threshold: 0.3,
            soft_nms_sigma: 0.5,
            soft_nms_score_floor: 0.001,
            solver: SolverConfig::default(),
            ssim: SsimConfig::default(),
            block_threshold: 8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} = {v} outside [0, 1]")))
            }
        };
        let positive = |name: &str, v: f64| {
            if v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} = {v} must be positive")))
            }
        };
        self.weights.validate()?;
        unit("nms_iou_threshold", self.nms_iou_threshold)?;
        unit("soft_nms_score_floor", self.soft_nms_score_floor)?;
        positive("soft_nms_sigma", self.soft_nms_sigma)?;
        match self.preprocess {
            Preprocess::None => {}
            Preprocess::Confidence { threshold } => unit("confidence threshold", threshold)?,
            Preprocess::Nms { iou_threshold } => unit("preprocess nms threshold", iou_threshold)?,
        }
        if let Some(s) = self.soft_score {
            positive("soft_score sigma", s.sigma)?;
            unit("soft_score threshold", s.score_threshold)?;
        }
        if self.method == Method::Qf && self.weights.w3 != 0.0 {
            return Err(Error::Config("qf requires w3 = 0".into()));
        }
        if self.block_threshold == 0 {
            return Err(Error::Config("block_threshold must be at least 1".into()));
        }
        self.solver.validate()?;
        if self.method.needs_image() {
            self.ssim.validate()?;
        }
        Ok(())
    }
}

/// Keeps detections scoring at least `threshold`, preserving order.
pub fn preprocess_confidence(dets: &[Detection], threshold: f64) -> Vec<Detection> {
    dets.iter().filter(|d| d.score >= threshold).copied().collect()
}

/// Indices in descending score order, ties by position.
fn by_score(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));
    order
}

fn nms_keep(dets: &[Detection], iou_threshold: f64) -> Vec<bool> {
    let mut keep = vec![false; dets.len()];
    let mut removed = vec![false; dets.len()];
    let order = by_score(dets);
    for (rank, &i) in order.iter().enumerate() {
        if removed[i] {
            continue;
        }
        keep[i] = true;
        for &j in &order[rank + 1..] {
            if !removed[j] && iou(&dets[i].bbox, &dets[j].bbox) > iou_threshold {
                removed[j] = true;
            }
        }
    }
    keep
}

/// Greedy NMS for one category. Survivors keep their input order.
pub fn nms(dets: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let keep = nms_keep(dets, iou_threshold);
    dets.iter().zip(keep).filter(|(_, k)| *k).map(|(d, _)| *d).collect()
}

fn soft_nms_indexed(dets: &[Detection], sigma: f64, score_floor: f64) -> Vec<(usize, f64)> {
    let mut scores: Vec<f64> = dets.iter().map(|d| d.score).collect();
    let mut alive: Vec<usize> = (0..dets.len()).collect();
    let mut out = Vec::with_capacity(dets.len());
    while !alive.is_empty() {
        let (pos, &best) = alive
            .iter()
            .enumerate()
            .max_by(|(_, &a), (_, &b)| scores[a].total_cmp(&scores[b]).then(b.cmp(&a)))
            .expect("non-empty");
        alive.swap_remove(pos);
        out.push((best, scores[best]));
        alive.retain(|&j| {
            let overlap = iou(&dets[best].bbox, &dets[j].bbox);
            let factor = (-(overlap * overlap) / sigma).exp();
            scores[j] *= factor;
            factor == 1.0 || scores[j] >= score_floor
        });
    }
    out
}

/// Gaussian Soft-NMS for one category.
///
/// Repeatedly selects the highest remaining score and decays every other
/// remaining score by `exp(-IoU² / sigma)`. A detection whose score was
/// decayed below `score_floor` is dropped; untouched scores are never
/// dropped. Output is in selection order with rescored values.
pub fn soft_nms(dets: &[Detection], sigma: f64, score_floor: f64) -> Vec<Detection> {
    soft_nms_indexed(dets, sigma, score_floor)
        .into_iter()
        .map(|(i, score)| Detection { score, ..dets[i] })
        .collect()
}

fn soft_score_indexed(kept: &[Detection], suppressed: &[Detection], params: SoftScore) -> Vec<(usize, f64)> {
    if kept.is_empty() {
        return suppressed.iter().enumerate().map(|(i, d)| (i, d.score)).collect();
    }
    suppressed
        .iter()
        .enumerate()
        .filter_map(|(i, d)| {
            let overlap = kept.iter().map(|k| iou(&d.bbox, &k.bbox)).fold(0.0, f64::max);
            let score = d.score * (-(overlap * overlap) / params.sigma).exp();
            (score >= params.score_threshold).then_some((i, score))
        })
        .collect()
}

/// Soft-scoring of QUBO-suppressed detections against the kept set.
///
/// Each suppressed detection is rescaled by `exp(-IoU² / sigma)` using its
/// largest IoU with any kept box, and returned if the new score reaches the
/// threshold. With nothing kept, the suppressed set comes back unchanged.
pub fn soft_score(kept: &[Detection], suppressed: &[Detection], sigma: f64, score_threshold: f64) -> Vec<Detection> {
    soft_score_indexed(kept, suppressed, SoftScore { sigma, score_threshold })
        .into_iter()
        .map(|(i, score)| Detection { score, ..suppressed[i] })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    /// Every sub-problem was solved to proven optimality.
    Optimal,
    /// A heuristic solver produced the answer.
    Incumbent,
    /// The exact solver hit its time budget on at least one sub-problem.
    Timeout,
    /// No QUBO was solved (baseline method or nothing to suppress).
    NotApplicable,
}

/// Wall time spent per stage, summed over categories.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    pub patch_extraction: f64,
    pub ssim: f64,
    pub build: f64,
    pub solve: f64,
    pub soft_score: f64,
}

impl StageTimes {
    pub fn total(&self) -> f64 {
        self.patch_extraction + self.ssim + self.build + self.solve + self.soft_score
    }

    pub fn accumulate(&mut self, other: &StageTimes) {
        self.patch_extraction += other.patch_extraction;
        self.ssim += other.ssim;
        self.build += other.build;
        self.solve += other.solve;
        self.soft_score += other.soft_score;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageReport {
    pub image_id: i64,
    pub status: SolverStatus,
    pub input: usize,
    pub preprocessed: usize,
    pub kept: usize,
    pub ssim_evaluations: usize,
    /// Seconds per stage.
    pub stage_times: StageTimes,
}

#[derive(Debug, Clone)]
pub struct Suppressed {
    pub detections: Vec<Detection>,
    pub report: ImageReport,
}

struct CategoryOutcome {
    /// (index into the image's detections, output score)
    selected: Vec<(usize, f64)>,
    preprocessed: usize,
    status: SolverStatus,
    ssim_evaluations: usize,
    times: StageTimes,
}

fn seconds(d: Duration) -> f64 {
    d.as_secs_f64()
}

impl SolverStatus {
    /// Status of a run made of both parts; the weaker guarantee wins.
    pub fn combine(self, other: SolverStatus) -> SolverStatus {
        use SolverStatus::*;
        match (self, other) {
            (Timeout, _) | (_, Timeout) => Timeout,
            (Incumbent, _) | (_, Incumbent) => Incumbent,
            (Optimal, _) | (_, Optimal) => Optimal,
            _ => NotApplicable,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Optimal => "optimal",
            Self::Incumbent => "incumbent",
            Self::Timeout => "timeout",
            Self::NotApplicable => "n/a",
        }
    }
}

fn suppress_category(
    image: Option<&GrayImage>,
    all: &[Detection],
    members: &[usize],
    cfg: &SuppressionConfig,
) -> Result<CategoryOutcome> {
    let local: Vec<Detection> = members.iter().map(|&i| all[i]).collect();
    let pre: Vec<usize> = match cfg.preprocess {
        Preprocess::None => (0..local.len()).collect(),
        Preprocess::Confidence { threshold } => (0..local.len()).filter(|&i| local[i].score >= threshold).collect(),
        Preprocess::Nms { iou_threshold } => {
            let keep = nms_keep(&local, iou_threshold);
            (0..local.len()).filter(|&i| keep[i]).collect()
        }
    };
    let dets: Vec<Detection> = pre.iter().map(|&i| local[i]).collect();
    let to_global = |i: usize| members[pre[i]];
    let mut out = CategoryOutcome {
        selected: Vec::new(),
        preprocessed: dets.len(),
        status: SolverStatus::NotApplicable,
        ssim_evaluations: 0,
        times: StageTimes::default(),
    };
    if dets.is_empty() {
        return Ok(out);
    }

    let Some(formulation) = cfg.method.formulation() else {
        out.selected = match cfg.method {
            Method::Nms => {
                let keep = nms_keep(&dets, cfg.nms_iou_threshold);
                (0..dets.len()).filter(|&i| keep[i]).map(|i| (to_global(i), dets[i].score)).collect()
            }
            _ => soft_nms_indexed(&dets, cfg.soft_nms_sigma, cfg.soft_nms_score_floor)
                .into_iter()
                .map(|(i, s)| (to_global(i), s))
                .collect(),
        };
        return Ok(out);
    };

    let boxes: Vec<BBox> = dets.iter().map(|d| d.bbox).collect();
    let scores: Vec<f64> = dets.iter().map(|d| d.score).collect();

    let appearance = if formulation.uses_appearance() {
        let image = image.ok_or_else(|| Error::MissingImage(cfg.method.name().into()))?;
        let t = Instant::now();
        let patches = extract_patches(image, &boxes, &cfg.ssim).map_err(|e| match e {
            Error::BoxOutsideImage { index: Some(i), bbox } => {
                Error::BoxOutsideImage { index: Some(to_global(i)), bbox }
            }
            other => other,
        })?;
        out.times.patch_extraction = seconds(t.elapsed());

        let t = Instant::now();
        let inter = intersection_matrix(&boxes);
        let perm = rcm_order(&inter);
        let blocked = ssim_matrix_blocked(&patches, &inter, &perm, &cfg.ssim, cfg.block_threshold)?;
        out.times.ssim = seconds(t.elapsed());
        out.ssim_evaluations = blocked.evaluations;
        Some(blocked.matrix)
    } else {
        None
    };

    let t = Instant::now();
    let terms = pairwise_terms(&boxes, cfg.pairwise_mode);
    let q = build(formulation, &scores, &terms, appearance.as_ref(), &cfg.weights)?;
    out.times.build = seconds(t.elapsed());

    let t = Instant::now();
    let solution = cfg.solver.solve(&QuboProblem::maximize(q.q)?)?;
    out.times.solve = seconds(t.elapsed());
    out.status = match (&cfg.solver.kind, solution.optimal) {
        (_, true) => SolverStatus::Optimal,
        (SolverKind::BranchAndBound, false) => SolverStatus::Timeout,
        _ => SolverStatus::Incumbent,
    };

    let (kept, dropped): (Vec<usize>, Vec<usize>) = (0..dets.len()).partition(|&i| solution.assignment[i]);
    out.selected = kept.iter().map(|&i| (to_global(i), dets[i].score)).collect();

    if let Some(params) = cfg.soft_score {
        let t = Instant::now();
        let kept_dets: Vec<Detection> = kept.iter().map(|&i| dets[i]).collect();
        let dropped_dets: Vec<Detection> = dropped.iter().map(|&i| dets[i]).collect();
        out.selected.extend(
            soft_score_indexed(&kept_dets, &dropped_dets, params)
                .into_iter()
                .map(|(k, s)| (to_global(dropped[k]), s)),
        );
        out.times.soft_score = seconds(t.elapsed());
    }
    Ok(out)
}

/// Suppresses the detections of one image, category by category.
///
/// The result is sorted by descending score, ties by input position. The
/// image raster is only consulted by appearance-based methods.
pub fn suppress(image: Option<&GrayImage>, dets: &[Detection], cfg: &SuppressionConfig) -> Result<Suppressed> {
    cfg.validate()?;
    if cfg.method.needs_image() && image.is_none() && !dets.is_empty() {
        return Err(Error::MissingImage(cfg.method.name().into()));
    }
    let image_id = dets.first().map_or(0, |d| d.image);
    if let Some(d) = dets.iter().find(|d| d.image != image_id) {
        return Err(Error::Config(format!("detections span images {image_id} and {}", d.image)));
    }

    let mut categories: Vec<i64> = dets.iter().map(|d| d.category).collect();
    categories.sort_unstable();
    categories.dedup();

    let mut report = ImageReport {
        image_id,
        status: SolverStatus::NotApplicable,
        input: dets.len(),
        preprocessed: 0,
        kept: 0,
        ssim_evaluations: 0,
        stage_times: StageTimes::default(),
    };
    let mut selected = Vec::new();
    for cat in categories {
        let members: Vec<usize> = (0..dets.len()).filter(|&i| dets[i].category == cat).collect();
        let outcome = suppress_category(image, dets, &members, cfg)?;
        report.preprocessed += outcome.preprocessed;
        report.ssim_evaluations += outcome.ssim_evaluations;
        report.status = report.status.combine(outcome.status);
        report.stage_times.accumulate(&outcome.times);
        selected.extend(outcome.selected);
    }

    selected.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let detections: Vec<Detection> = selected
        .into_iter()
        .map(|(i, score)| Detection { score, ..dets[i] })
        .collect();
    report.kept = detections.len();
    Ok(Suppressed { detections, report })
}
