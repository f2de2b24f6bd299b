//! Merging detections from the full image and its crops.
//!
//! Detections are stacked into a matrix with one row per detector input: the full
//! image first, then crops from largest to smallest. The first non-empty row is
//! accepted wholesale; every later box is accepted only if its IoU with all boxes
//! accepted so far is at most the threshold.

use serde::{Deserialize, Serialize};

use crate::detector::Detection;
use crate::error::{Error, Result};

/// Default duplicate threshold. IoU strictly above it marks a duplicate.
pub const DEFAULT_FUSION_IOU: f64 = 0.5;

/// Axis-aligned box in pixels: top-left corner plus extent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box2D {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl Box2D {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        let b = Box2D { x, y, w, h };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.x, self.y, self.w, self.h].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidBox(format!("non-finite box {self:?}")));
        }
        if !(self.w > 0.0 && self.h > 0.0) {
            return Err(Error::InvalidBox(format!("box {self:?} has no area")));
        }
        Ok(())
    }

    /// Builds a box from corner coordinates; `None` if it has no area.
    pub fn from_corners(x0: f64, y0: f64, x1: f64, y1: f64) -> Option<Self> {
        (x1 > x0 && y1 > y0).then(|| Box2D {
            x: x0,
            y: y0,
            w: x1 - x0,
            h: y1 - y0,
        })
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn intersection(&self, other: &Box2D) -> Option<Box2D> {
        Box2D::from_corners(
            self.x.max(other.x),
            self.y.max(other.y),
            self.right().min(other.right()),
            self.bottom().min(other.bottom()),
        )
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Box2D {
        Box2D {
            x: self.x + dx,
            y: self.y + dy,
            ..*self
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x, self.y, self.w, self.h]
    }
}

/// Intersection over union; 0 for disjoint boxes.
pub fn iou(a: &Box2D, b: &Box2D) -> f64 {
    let inter = a.intersection(b).map_or(0.0, |i| i.area());
    let union = a.area() + b.area() - inter;
    if union > 0.0 {
        (inter / union).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Per-source detection rows: full image (source 0) first, then crops by
/// ascending index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectionMatrix {
    rows: Vec<(u32, Vec<Detection>)>,
}

impl DetectionMatrix {
    pub fn rows(&self) -> &[(u32, Vec<Detection>)] {
        &self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn detection_count(&self) -> usize {
        self.rows.iter().map(|(_, r)| r.len()).sum()
    }
}

/// Orders per-source detections into a matrix. Input detections must already be
/// in full-image coordinates.
pub fn build_matrix(per_source: Vec<(u32, Vec<Detection>)>) -> Result<DetectionMatrix> {
    let mut rows = per_source;
    // stable, so within-row order is untouched
    rows.sort_by_key(|(s, _)| *s);
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::DuplicateSource(w[0].0));
    }
    Ok(DetectionMatrix { rows })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FusedDetections {
    pub accepted: Vec<Detection>,
}

impl FusedDetections {
    pub fn len(&self) -> usize {
        self.accepted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accepted.is_empty()
    }
}

/// Positions `(row, column)` accepted by the sequential rule, considering only
/// detections for which `include` holds.
fn accepted_positions(
    m: &DetectionMatrix,
    thresh: f64,
    include: impl Fn(&Detection) -> bool,
) -> Vec<(usize, usize)> {
    let mut accepted: Vec<(usize, usize)> = Vec::new();
    let mut seeded = false;
    for (ri, (_, row)) in m.rows.iter().enumerate() {
        let candidates: Vec<usize> = (0..row.len()).filter(|&ci| include(&row[ci])).collect();
        if candidates.is_empty() {
            continue;
        }
        if !seeded {
            accepted.extend(candidates.into_iter().map(|ci| (ri, ci)));
            seeded = true;
            continue;
        }
        for ci in candidates {
            let b = &row[ci].bbox;
            let duplicate = accepted
                .iter()
                .any(|&(r, c)| iou(&m.rows[r].1[c].bbox, b) > thresh);
            if !duplicate {
                accepted.push((ri, ci));
            }
        }
    }
    accepted
}

fn collect(m: &DetectionMatrix, positions: Vec<(usize, usize)>) -> FusedDetections {
    FusedDetections {
        accepted: positions
            .into_iter()
            .map(|(r, c)| m.rows[r].1[c].clone())
            .collect(),
    }
}

/// Sequential overlap filter, class-agnostic.
pub fn overlap_filter(m: &DetectionMatrix, thresh: f64) -> FusedDetections {
    collect(m, accepted_positions(m, thresh, |_| true))
}

/// Runs the overlap filter independently for each class label, so boxes of
/// different classes never suppress each other. Output keeps matrix order.
pub fn overlap_filter_per_class(m: &DetectionMatrix, thresh: f64) -> FusedDetections {
    let mut classes: Vec<&str> = m
        .rows
        .iter()
        .flat_map(|(_, r)| r.iter().map(|d| d.class_label.as_str()))
        .collect();
    classes.sort_unstable();
    classes.dedup();

    let mut keep: Vec<(usize, usize)> = classes
        .into_iter()
        .flat_map(|class| accepted_positions(m, thresh, |d| d.class_label == class))
        .collect();
    keep.sort_unstable();
    collect(m, keep)
}
