//! Average precision at a fixed IoU threshold, VOC 2010 style.
//!
//! Detections are matched greedily by descending score, a precision/recall
//! point is taken after every detection, and AP is the area under the monotone
//! precision envelope over all recall points (not 11-point sampling).

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::detector::Detection;
use crate::fuse::{iou, Box2D};

pub const DEFAULT_EVAL_IOU: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthBox {
    pub frame_id: u64,
    pub bbox: Box2D,
    pub class_label: String,
}

/// A detection tagged with the frame it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameDetection {
    pub frame_id: u64,
    pub detection: Detection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchedDetection {
    pub frame_id: u64,
    pub detection: Detection,
    pub is_tp: bool,
    /// Index into the ground-truth slice of the box this detection consumed.
    pub gt_index: Option<usize>,
}

fn by_score_desc(a: f64, b: f64) -> Ordering {
    b.total_cmp(&a)
}

/// Greedy matching: detections in order of (score desc, frame id, input order);
/// each takes the unmatched same-frame, same-class ground truth with the highest
/// IoU if that IoU reaches `iou_thresh`.
pub fn match_detections(
    dets: &[FrameDetection],
    gts: &[GroundTruthBox],
    iou_thresh: f64,
) -> Vec<MatchedDetection> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        by_score_desc(dets[a].detection.score, dets[b].detection.score)
            .then(dets[a].frame_id.cmp(&dets[b].frame_id))
            .then(a.cmp(&b))
    });

    let mut consumed = vec![false; gts.len()];
    order
        .into_iter()
        .map(|i| {
            let d = &dets[i];
            let mut best: Option<(usize, f64)> = None;
            for (gi, g) in gts.iter().enumerate() {
                if consumed[gi] || g.frame_id != d.frame_id || g.class_label != d.detection.class_label {
                    continue;
                }
                let o = iou(&g.bbox, &d.detection.bbox);
                if best.map_or(true, |(_, b)| o > b) {
                    best = Some((gi, o));
                }
            }
            let gt_index = best.filter(|&(_, o)| o >= iou_thresh).map(|(gi, _)| gi);
            if let Some(gi) = gt_index {
                consumed[gi] = true;
            }
            MatchedDetection {
                frame_id: d.frame_id,
                detection: d.detection.clone(),
                is_tp: gt_index.is_some(),
                gt_index,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub score: f64,
    pub recall: f64,
    pub precision: f64,
    /// Cumulative counts at this point.
    pub tp: usize,
    pub fp: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PRCurve {
    pub points: Vec<PrPoint>,
    pub n_gt: usize,
    /// Set when there is no ground truth, so recall is reported as 0.
    pub recall_undefined: bool,
}

impl PRCurve {
    /// `score,recall,precision` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("score,recall,precision\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{}\n", p.score, p.recall, p.precision));
        }
        out
    }
}

/// Cumulative precision/recall after each detection in descending score order.
pub fn pr_curve(labeled: &[MatchedDetection], n_gt: usize) -> PRCurve {
    let mut sorted: Vec<&MatchedDetection> = labeled.iter().collect();
    sorted.sort_by(|a, b| by_score_desc(a.detection.score, b.detection.score));
    let (mut tp, mut fp) = (0usize, 0usize);
    let points = sorted
        .into_iter()
        .map(|m| {
            if m.is_tp {
                tp += 1;
            } else {
                fp += 1;
            }
            PrPoint {
                score: m.detection.score,
                recall: if n_gt > 0 { tp as f64 / n_gt as f64 } else { 0.0 },
                precision: tp as f64 / (tp + fp) as f64,
                tp,
                fp,
            }
        })
        .collect();
    PRCurve {
        points,
        n_gt,
        recall_undefined: n_gt == 0,
    }
}

/// `n / d` as an unevaluated sum `hi + lo`.
fn div_exact(n: f64, d: f64) -> (f64, f64) {
    let q = n / d;
    let r = (-q).mul_add(d, n);
    (q, r / d)
}

/// Area under the precision envelope. 0 for an empty curve or when there is no
/// ground truth.
///
/// Works on the integer TP/FP counts: the envelope is taken over exact ratios
/// and the area is summed with compensation, so the result is the correctly
/// rounded value of the exact rational AP in all but pathological cases.
pub fn average_precision(curve: &PRCurve) -> f64 {
    if curve.points.is_empty() || curve.n_gt == 0 {
        return 0.0;
    }
    // envelope[i] = max precision over points i.., as (tp, tp + fp)
    let mut envelope = vec![(0u64, 1u64); curve.points.len()];
    let mut best = (0u64, 1u64);
    for (i, p) in curve.points.iter().enumerate().rev() {
        let cur = (p.tp as u64, (p.tp + p.fp) as u64);
        if cur.1 > 0 && (cur.0 as u128) * (best.1 as u128) > (best.0 as u128) * (cur.1 as u128) {
            best = cur;
        }
        envelope[i] = best;
    }

    let n_gt = curve.n_gt as f64;
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    let mut prev_tp = 0usize;
    for (p, &(num, den)) in curve.points.iter().zip(&envelope) {
        if p.tp <= prev_tp {
            continue;
        }
        let gained = (p.tp - prev_tp) as f64;
        prev_tp = p.tp;
        let (hi, lo) = div_exact(gained * num as f64, n_gt * den as f64);
        // Neumaier summation
        let t = sum + hi;
        comp += if sum.abs() >= hi.abs() { (sum - t) + hi } else { (hi - t) + sum };
        comp += lo;
        sum = t;
    }
    (sum + comp).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct APResult {
    pub ap: f64,
    pub curve: PRCurve,
    pub tp: usize,
    pub fp: usize,
    pub n_gt: usize,
}

/// Match, build the curve and integrate it.
pub fn evaluate(dets: &[FrameDetection], gts: &[GroundTruthBox], iou_thresh: f64) -> APResult {
    let matched = match_detections(dets, gts, iou_thresh);
    let tp = matched.iter().filter(|m| m.is_tp).count();
    let curve = pr_curve(&matched, gts.len());
    APResult {
        ap: average_precision(&curve),
        fp: matched.len() - tp,
        tp,
        n_gt: gts.len(),
        curve,
    }
}
