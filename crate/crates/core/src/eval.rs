//! COCO-style detection metrics: greedy matching, 101-point interpolated
//! AP over IoU thresholds 0.50:0.05:0.95, recall under per-image detection
//! caps, and small / medium / large buckets by ground-truth area.
//!
//! Follows the reference COCO evaluator except where noted: all ground
//! truths are matchable (no crowd regions), box area is `w * h`, equal-IoU
//! matches go to the lowest ground-truth index, and size buckets are
//! half-open (`S < 32²`, `32² <= M < 96²`, `L >= 96²`).

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou, BBox};
use crate::pipeline::Detection;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub bbox: BBox,
    pub category: i64,
    pub image: i64,
}

/// Metric suite; `None` where no ground truth makes the metric meaningful.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(rename = "mAP")]
    pub map: Option<f64>,
    #[serde(rename = "mAP@50")]
    pub map50: Option<f64>,
    #[serde(rename = "mAP@75")]
    pub map75: Option<f64>,
    #[serde(rename = "mAP@S")]
    pub map_small: Option<f64>,
    #[serde(rename = "mAP@M")]
    pub map_medium: Option<f64>,
    #[serde(rename = "mAP@L")]
    pub map_large: Option<f64>,
    #[serde(rename = "mAR@1")]
    pub mar1: Option<f64>,
    #[serde(rename = "mAR@10")]
    pub mar10: Option<f64>,
    #[serde(rename = "mAR@100")]
    pub mar100: Option<f64>,
    #[serde(rename = "mAR@S")]
    pub mar_small: Option<f64>,
    #[serde(rename = "mAR@M")]
    pub mar_medium: Option<f64>,
    #[serde(rename = "mAR@L")]
    pub mar_large: Option<f64>,
}

impl EvalReport {
    pub fn metrics(&self) -> [(&'static str, Option<f64>); 12] {
        [
            ("mAP", self.map),
            ("mAP@50", self.map50),
            ("mAP@75", self.map75),
            ("mAP@S", self.map_small),
            ("mAP@M", self.map_medium),
            ("mAP@L", self.map_large),
            ("mAR@1", self.mar1),
            ("mAR@10", self.mar10),
            ("mAR@100", self.mar100),
            ("mAR@S", self.mar_small),
            ("mAR@M", self.mar_medium),
            ("mAR@L", self.mar_large),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matching {
    /// Index of the matched ground truth per prediction.
    pub pred_match: Vec<Option<usize>>,
    pub gt_matched: Vec<bool>,
}

impl Matching {
    pub fn is_tp(&self, pred: usize) -> bool {
        self.pred_match[pred].is_some()
    }
}

/// Matches predictions, already in descending score order, to ground truth
/// of one image and category. Each prediction takes the unmatched ground
/// truth of highest IoU at or above the threshold.
pub fn match_greedy(preds: &[BBox], gts: &[BBox], iou_threshold: f64) -> Matching {
    let ignore = vec![false; gts.len()];
    match_with_ignore(preds, gts, &ignore, iou_threshold)
}

/// Matching with ignorable ground truth, which must come after every
/// regular one. A prediction prefers regular ground truth and only falls
/// back to an ignorable one when no regular match exists.
fn match_with_ignore(preds: &[BBox], gts: &[BBox], ignore: &[bool], iou_threshold: f64) -> Matching {
    let threshold = iou_threshold.min(1.0 - 1e-10);
    let mut gt_matched = vec![false; gts.len()];
    let mut pred_match = vec![None; preds.len()];
    for (p, pred) in preds.iter().enumerate() {
        let mut best = threshold;
        let mut pick: Option<usize> = None;
        for (g, gt) in gts.iter().enumerate() {
            if gt_matched[g] {
                continue;
            }
            if pick.is_some_and(|m| !ignore[m]) && ignore[g] {
                break;
            }
            let overlap = iou(pred, gt);
            if overlap < best || (pick.is_some() && overlap == best) {
                continue;
            }
            best = overlap;
            pick = Some(g);
        }
        if let Some(g) = pick {
            gt_matched[g] = true;
            pred_match[p] = Some(g);
        }
    }
    Matching { pred_match, gt_matched }
}

/// Recall sample points 0, 0.01, ..., 1.
fn recall_thresholds() -> [f64; 101] {
    let mut r = [0.0; 101];
    for (i, v) in r.iter_mut().enumerate() {
        *v = i as f64 * (1.0 / 100.0);
    }
    r[100] = 1.0;
    r
}

/// IoU thresholds 0.50, 0.55, ..., 0.95.
fn iou_thresholds() -> [f64; 10] {
    let step = (0.95 - 0.5) / 9.0;
    let mut t = [0.0; 10];
    for (i, v) in t.iter_mut().enumerate() {
        *v = i as f64 * step + 0.5;
    }
    t[9] = 0.95;
    t
}

/// Interpolated precision at each recall sample point, from true-positive
/// flags in ranked order.
fn interpolated_precision(ranked_tp: &[bool], n_gt: usize) -> [f64; 101] {
    let mut tp = 0.0;
    let mut fp = 0.0;
    let mut recall = Vec::with_capacity(ranked_tp.len());
    let mut precision = Vec::with_capacity(ranked_tp.len());
    for &hit in ranked_tp {
        if hit {
            tp += 1.0;
        } else {
            fp += 1.0;
        }
        recall.push(tp / n_gt as f64);
        precision.push(tp / (tp + fp));
    }
    for i in (1..precision.len()).rev() {
        if precision[i] > precision[i - 1] {
            precision[i - 1] = precision[i];
        }
    }
    let mut out = [0.0; 101];
    for (slot, r) in out.iter_mut().zip(recall_thresholds()) {
        let idx = recall.partition_point(|&v| v < r);
        match precision.get(idx) {
            Some(&p) => *slot = p,
            None => break,
        }
    }
    out
}

/// 101-point interpolated average precision of `(score, is_tp)` labels
/// pooled across images. `None` when there is no ground truth.
///
/// Labels are ranked by descending score; equal scores keep input order.
pub fn average_precision(labels: &[(f64, bool)], n_gt: usize) -> Option<f64> {
    if n_gt == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| labels[b].0.total_cmp(&labels[a].0));
    let ranked: Vec<bool> = order.iter().map(|&i| labels[i].1).collect();
    let p = interpolated_precision(&ranked, n_gt);
    Some(p.iter().sum::<f64>() / p.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum AreaRange {
    All,
    Small,
    Medium,
    Large,
}

impl AreaRange {
    const ALL: [AreaRange; 4] = [Self::All, Self::Small, Self::Medium, Self::Large];

    fn contains(self, area: f64) -> bool {
        const S: f64 = 32.0 * 32.0;
        const M: f64 = 96.0 * 96.0;
        match self {
            Self::All => true,
            Self::Small => area < S,
            Self::Medium => (S..M).contains(&area),
            Self::Large => area >= M,
        }
    }
}

const MAX_DETS: [usize; 3] = [1, 10, 100];

/// Per (image, category, area range) matching across all IoU thresholds.
struct ImageEval {
    /// Scores of the first `MAX_DETS[2]` predictions in ranked order.
    scores: Vec<f64>,
    /// `[threshold][pred]`: matched a regular ground truth.
    matched: Vec<Vec<bool>>,
    /// `[threshold][pred]`: excluded from counting.
    ignored: Vec<Vec<bool>>,
    regular_gts: usize,
}

fn evaluate_image(preds: &[&Detection], gts: &[&GroundTruth], range: AreaRange) -> ImageEval {
    let ignore_gt: Vec<bool> = gts.iter().map(|g| !range.contains(g.bbox.area())).collect();
    let mut gt_order: Vec<usize> = (0..gts.len()).collect();
    gt_order.sort_by_key(|&g| ignore_gt[g]);
    let gt_boxes: Vec<BBox> = gt_order.iter().map(|&g| gts[g].bbox).collect();
    let gt_ignore: Vec<bool> = gt_order.iter().map(|&g| ignore_gt[g]).collect();

    let mut pred_order: Vec<usize> = (0..preds.len()).collect();
    pred_order.sort_by(|&a, &b| preds[b].score.total_cmp(&preds[a].score));
    pred_order.truncate(MAX_DETS[2]);
    let pred_boxes: Vec<BBox> = pred_order.iter().map(|&p| preds[p].bbox).collect();

    let mut matched = Vec::with_capacity(10);
    let mut ignored = Vec::with_capacity(10);
    for t in iou_thresholds() {
        let m = match_with_ignore(&pred_boxes, &gt_boxes, &gt_ignore, t);
        let mut hit = Vec::with_capacity(pred_boxes.len());
        let mut skip = Vec::with_capacity(pred_boxes.len());
        for (p, bbox) in pred_boxes.iter().enumerate() {
            match m.pred_match[p] {
                Some(g) => {
                    hit.push(!gt_ignore[g]);
                    skip.push(gt_ignore[g]);
                }
                None => {
                    hit.push(false);
                    skip.push(!range.contains(bbox.area()));
                }
            }
        }
        matched.push(hit);
        ignored.push(skip);
    }
    ImageEval {
        scores: pred_order.iter().map(|&p| preds[p].score).collect(),
        matched,
        ignored,
        regular_gts: gt_ignore.iter().filter(|&&i| !i).count(),
    }
}

/// Precision (averaged over recall points) and final recall for one
/// category, area range and detection cap; one entry per IoU threshold.
/// `None` when the category has no regular ground truth.
fn accumulate(images: &[ImageEval], max_det: usize) -> Option<Vec<(f64, f64)>> {
    let n_gt: usize = images.iter().map(|e| e.regular_gts).sum();
    if n_gt == 0 {
        return None;
    }
    let mut pooled: Vec<(f64, usize, usize)> = Vec::new();
    for (img, e) in images.iter().enumerate() {
        for p in 0..e.scores.len().min(max_det) {
            pooled.push((e.scores[p], img, p));
        }
    }
    pooled.sort_by(|a, b| b.0.total_cmp(&a.0));

    let out = (0..iou_thresholds().len())
        .map(|t| {
            let ranked: Vec<bool> = pooled
                .iter()
                .filter(|&&(_, img, p)| !images[img].ignored[t][p])
                .map(|&(_, img, p)| images[img].matched[t][p])
                .collect();
            let recall = ranked.iter().filter(|&&h| h).count() as f64 / n_gt as f64;
            let precision = interpolated_precision(&ranked, n_gt);
            (precision.iter().sum::<f64>() / precision.len() as f64, recall)
        })
        .collect();
    Some(out)
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, count) = values.into_iter().fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

/// Evaluates predictions against ground truth over every image that
/// appears in either list. Categories come from the ground truth; a
/// prediction in any other category is an error.
pub fn evaluate(preds: &[Detection], gts: &[GroundTruth]) -> Result<EvalReport> {
    let categories: BTreeSet<i64> = gts.iter().map(|g| g.category).collect();
    let unknown: BTreeSet<i64> = preds.iter().map(|p| p.category).filter(|c| !categories.contains(c)).collect();
    if !unknown.is_empty() {
        return Err(Error::UnknownCategories(unknown.into_iter().collect()));
    }
    let images: BTreeSet<i64> = gts.iter().map(|g| g.image).chain(preds.iter().map(|p| p.image)).collect();

    let mut pred_groups: BTreeMap<(i64, i64), Vec<&Detection>> = BTreeMap::new();
    for p in preds {
        pred_groups.entry((p.category, p.image)).or_default().push(p);
    }
    let mut gt_groups: BTreeMap<(i64, i64), Vec<&GroundTruth>> = BTreeMap::new();
    for g in gts {
        gt_groups.entry((g.category, g.image)).or_default().push(g);
    }

    // results[range][cap][category] -> per-threshold (precision, recall)
    let mut results: Vec<Vec<Vec<Vec<(f64, f64)>>>> = vec![vec![Vec::new(); MAX_DETS.len()]; AreaRange::ALL.len()];
    for &cat in &categories {
        for (r, range) in AreaRange::ALL.into_iter().enumerate() {
            let evals: Vec<ImageEval> = images
                .iter()
                .map(|&img| {
                    let p = pred_groups.get(&(cat, img)).map_or(&[][..], Vec::as_slice);
                    let g = gt_groups.get(&(cat, img)).map_or(&[][..], Vec::as_slice);
                    evaluate_image(p, g, range)
                })
                .collect();
            for (k, &cap) in MAX_DETS.iter().enumerate() {
                if let Some(per_t) = accumulate(&evals, cap) {
                    results[r][k].push(per_t);
                }
            }
        }
    }

    let top = MAX_DETS.len() - 1;
    let ap = |r: usize, t: Option<usize>| {
        mean(results[r][top].iter().flat_map(|c| {
            c.iter().enumerate().filter(move |(i, _)| t.is_none_or(|t| t == *i)).map(|(_, v)| v.0)
        }))
    };
    let ar = |r: usize, k: usize| mean(results[r][k].iter().flat_map(|c| c.iter().map(|v| v.1)));

    Ok(EvalReport {
        map: ap(0, None),
        map50: ap(0, Some(0)),
        map75: ap(0, Some(5)),
        map_small: ap(1, None),
        map_medium: ap(2, None),
        map_large: ap(3, None),
        mar1: ar(0, 0),
        mar10: ar(0, 1),
        mar100: ar(0, 2),
        mar_small: ar(1, 2),
        mar_medium: ar(2, 2),
        mar_large: ar(3, 2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    fn pred(bbox: BBox, score: f64, image: i64) -> Detection {
        Detection { bbox, score, category: 1, image }
    }

    fn gt(bbox: BBox, image: i64) -> GroundTruth {
        GroundTruth { bbox, category: 1, image }
    }

    #[test]
    fn thresholds() {
        let t = iou_thresholds();
        assert_eq!(t[0], 0.5);
        assert_eq!(t[9], 0.95);
        assert!((t[5] - 0.75).abs() < 1e-15);
        let r = recall_thresholds();
        assert_eq!((r[0], r[100]), (0.0, 1.0));
    }

    #[test]
    fn matching_examples() {
        let gts = [b(0.0, 0.0, 10.0, 10.0), b(20.0, 20.0, 30.0, 30.0)];
        let m = match_greedy(&gts, &gts, 0.5);
        assert_eq!(m.pred_match, vec![Some(0), Some(1)]);
        assert_eq!(m.gt_matched, vec![true, true]);

        let m = match_greedy(&gts, &[], 0.5);
        assert_eq!(m.pred_match, vec![None, None]);

        // IoU 0.9 and 0.7 against the single ground truth
        let g = b(0.0, 0.0, 10.0, 10.0);
        let p1 = b(0.0, 0.0, 10.0, 9.0);
        let p2 = b(0.0, 0.0, 10.0, 7.0);
        assert!((iou(&p1, &g) - 0.9).abs() < 1e-12 && (iou(&p2, &g) - 0.7).abs() < 1e-12);
        let m = match_greedy(&[p1, p2], &[g], 0.5);
        assert_eq!(m.pred_match, vec![Some(0), None]);
    }

    #[test]
    fn equal_iou_goes_to_lowest_index() {
        let g = b(0.0, 0.0, 10.0, 10.0);
        let m = match_greedy(&[g], &[g, g], 0.5);
        assert_eq!(m.pred_match, vec![Some(0)]);
    }

    #[test]
    fn ap_examples() {
        assert_eq!(average_precision(&[(0.9, true)], 1), Some(1.0));
        assert_eq!(average_precision(&[(0.9, false)], 1), Some(0.0));
        assert_eq!(average_precision(&[(0.9, true), (0.5, false)], 1), Some(1.0));
        assert_eq!(average_precision(&[(0.9, true)], 0), None);
        // hand PR curve: FP then TP gives precision 0.5 at recall 1
        assert_eq!(average_precision(&[(0.5, true), (0.9, false)], 1), Some(0.5));
        // one of two GTs found at rank 1: recall points 0..=0.5 at precision 1
        let ap = average_precision(&[(0.9, true)], 2).unwrap();
        assert!((ap - 51.0 / 101.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_predictions_score_one() {
        let gts = vec![
            gt(b(0.0, 0.0, 20.0, 20.0), 1),
            gt(b(50.0, 50.0, 110.0, 100.0), 3),
            gt(b(0.0, 0.0, 200.0, 150.0), 2),
        ];
        let preds: Vec<Detection> = gts.iter().map(|g| pred(g.bbox, 1.0, g.image)).collect();
        let r = evaluate(&preds, &gts).unwrap();
        for (name, v) in r.metrics() {
            assert_eq!(v, Some(1.0), "{name}");
        }

        // two objects in one image: a single detection cannot recall both
        let crowded: Vec<GroundTruth> = gts.iter().map(|g| GroundTruth { image: 1, ..*g }).collect();
        let preds: Vec<Detection> = crowded.iter().map(|g| pred(g.bbox, 1.0, 1)).collect();
        let r = evaluate(&preds, &crowded).unwrap();
        assert!((r.mar1.unwrap() - 1.0 / 3.0).abs() < 1e-15);
        for (name, v) in r.metrics().into_iter().filter(|(n, _)| *n != "mAR@1") {
            assert_eq!(v, Some(1.0), "{name}");
        }
    }

    #[test]
    fn empty_predictions_score_zero() {
        let gts = vec![gt(b(0.0, 0.0, 20.0, 20.0), 1)];
        let r = evaluate(&[], &gts).unwrap();
        assert_eq!(r.map, Some(0.0));
        assert_eq!(r.mar100, Some(0.0));
        assert_eq!(r.map_small, Some(0.0));
        // no medium or large ground truth
        assert_eq!(r.map_medium, None);
        assert_eq!(r.mar_large, None);
    }

    #[test]
    fn unknown_category_is_reported() {
        let gts = vec![gt(b(0.0, 0.0, 20.0, 20.0), 1)];
        let mut p = pred(b(0.0, 0.0, 20.0, 20.0), 0.5, 1);
        p.category = 7;
        match evaluate(&[p], &gts) {
            Err(Error::UnknownCategories(c)) => assert_eq!(c, vec![7]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn detection_caps() {
        // two GTs in one image, correct predictions at ranks 1 and 2
        let gts = vec![gt(b(0.0, 0.0, 20.0, 20.0), 1), gt(b(40.0, 0.0, 60.0, 20.0), 1)];
        let preds = vec![pred(gts[0].bbox, 0.9, 1), pred(gts[1].bbox, 0.8, 1)];
        let r = evaluate(&preds, &gts).unwrap();
        assert_eq!(r.mar1, Some(0.5));
        assert_eq!(r.mar10, Some(1.0));
    }

    fn scene() -> impl Strategy<Value = (Vec<GroundTruth>, Vec<Detection>)> {
        let boxes = prop::collection::vec((0.0..200.0f64, 0.0..200.0f64, 4.0..120.0f64, 4.0..120.0f64, 1i64..4), 1..12);
        let noise = prop::collection::vec((-6.0..6.0f64, -6.0..6.0f64, 0.01..1.0f64, any::<bool>()), 12);
        (boxes, noise).prop_map(|(boxes, noise)| {
            let gts: Vec<GroundTruth> =
                boxes.iter().map(|&(x, y, w, h, img)| gt(BBox::from_xywh(x, y, w, h).unwrap(), img)).collect();
            let preds = gts
                .iter()
                .zip(&noise)
                .filter(|(_, n)| n.3)
                .map(|(g, &(dx, dy, s, _))| {
                    let bb = BBox::from_xywh(g.bbox.x1() + dx, g.bbox.y1() + dy, g.bbox.width(), g.bbox.height());
                    pred(bb.unwrap(), s, g.image)
                })
                .collect();
            (gts, preds)
        })
    }

    proptest! {
        #[test]
        fn metrics_are_bounded_and_ap50_dominates((gts, preds) in scene()) {
            let r = evaluate(&preds, &gts).unwrap();
            for (_, v) in r.metrics() {
                if let Some(v) = v {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
            }
            prop_assert!(r.map50.unwrap() >= r.map.unwrap() - 1e-12);
        }

        #[test]
        fn low_scored_stray_never_raises_ap((gts, preds) in scene()) {
            let base = evaluate(&preds, &gts).unwrap();
            let mut more = preds.clone();
            more.push(pred(b(1000.0, 1000.0, 1010.0, 1010.0), 0.001, gts[0].image));
            let r = evaluate(&more, &gts).unwrap();
            for ((_, a), (name, b)) in base.metrics().into_iter().zip(r.metrics()) {
                if name.starts_with("mAP") {
                    prop_assert!(b.unwrap_or(0.0) <= a.unwrap_or(0.0) + 1e-12, "{}", name);
                }
            }
        }
    }
}
