//! Detector backends and the region ↔ full-image coordinate mapping.
//!
//! A backend is handed one region of a frame at a time (the whole image as
//! source 0, or crop `j`) and returns boxes in region-local pixels. The pipeline
//! then translates them back into full-image coordinates with [`to_full_image`].

mod external;
mod letterbox;
mod replay;
mod synthetic;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use external::ExternalDetector;
pub use letterbox::ResizeMeta;
pub use replay::{ReplayDetection, ReplayDetector, ReplayFile, ReplayFrame, ReplaySource};
pub use synthetic::{SyntheticConfig, SyntheticDetector};

use crate::error::{Error, Result};
use crate::fuse::Box2D;
use crate::pathcrop::CropSpec;
use crate::record::FrameRecord;

/// Side of the square detector input, pixels.
pub const DEFAULT_INPUT_SIDE: u32 = 608;

/// Slack allowed when checking that a box lies inside its crop.
const CROP_EPS: f64 = 1e-6;

/// A single detected object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DetectionFields", into = "DetectionFields")]
pub struct Detection {
    pub class_label: String,
    pub score: f64,
    pub bbox: Box2D,
    /// 0 for the whole image, `j ≥ 1` for crop `j`.
    pub source: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectionFields {
    class: String,
    score: f64,
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    source: u32,
}

impl TryFrom<DetectionFields> for Detection {
    type Error = Error;

    fn try_from(f: DetectionFields) -> Result<Self> {
        let d = Detection::new(f.class, f.score, Box2D::new(f.x, f.y, f.w, f.h)?, f.source);
        d.validate()?;
        Ok(d)
    }
}

impl From<Detection> for DetectionFields {
    fn from(d: Detection) -> Self {
        DetectionFields {
            class: d.class_label,
            score: d.score,
            x: d.bbox.x,
            y: d.bbox.y,
            w: d.bbox.w,
            h: d.bbox.h,
            source: d.source,
        }
    }
}

impl Detection {
    pub fn new(class_label: impl Into<String>, score: f64, bbox: Box2D, source: u32) -> Self {
        Self {
            class_label: class_label.into(),
            score,
            bbox,
            source,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.score) {
            return Err(Error::format("detection", format!("score {} outside [0, 1]", self.score)));
        }
        self.bbox.validate()
    }
}

/// What a backend sees for one call.
#[derive(Debug, Clone, Copy)]
pub struct DetectorInput<'a> {
    pub frame: &'a FrameRecord,
    pub region: CropSpec,
    pub input_side: u32,
}

impl<'a> DetectorInput<'a> {
    pub fn new(frame: &'a FrameRecord, region: CropSpec) -> Self {
        Self {
            frame,
            region,
            input_side: DEFAULT_INPUT_SIDE,
        }
    }

    pub fn with_input_side(mut self, side: u32) -> Self {
        self.input_side = side;
        self
    }

    pub fn resize(&self) -> ResizeMeta {
        ResizeMeta::letterbox(self.region.w, self.region.h, self.input_side)
    }
}

/// Whether a backend tolerates concurrent `detect` calls.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Concurrency {
    Parallel,
    Serialized,
}

pub trait Detector: Send + Sync {
    /// Detections for one region, in region-local pixels.
    fn detect(&self, input: &DetectorInput<'_>) -> Result<Vec<Detection>>;

    fn concurrency(&self) -> Concurrency {
        Concurrency::Parallel
    }

    fn name(&self) -> &str;
}

fn crop_box(crop: &CropSpec) -> Box2D {
    Box2D {
        x: 0.0,
        y: 0.0,
        w: crop.w as f64,
        h: crop.h as f64,
    }
}

/// Maps a region-local detection into full-image coordinates and tags it with
/// the crop index.
pub fn to_full_image(d: &Detection, crop: &CropSpec) -> Result<Detection> {
    let extent = crop_box(crop);
    let b = &d.bbox;
    if b.x < -CROP_EPS
        || b.y < -CROP_EPS
        || b.right() > extent.w + CROP_EPS
        || b.bottom() > extent.h + CROP_EPS
    {
        return Err(Error::OutOfCrop {
            bbox: b.as_array(),
            crop: crop.j,
        });
    }
    Ok(Detection {
        bbox: b.translate(crop.u as f64, crop.v as f64),
        source: crop.j,
        ..d.clone()
    })
}

/// Inverse of [`to_full_image`]: full-image box to crop-local coordinates.
pub fn to_local(d: &Detection, crop: &CropSpec) -> Detection {
    Detection {
        bbox: d.bbox.translate(-(crop.u as f64), -(crop.v as f64)),
        source: crop.j,
        ..d.clone()
    }
}

/// Keeps detections whose class is in `whitelist`, preserving order.
pub fn class_filter(ds: Vec<Detection>, whitelist: &BTreeSet<String>) -> Vec<Detection> {
    ds.into_iter()
        .filter(|d| whitelist.contains(&d.class_label))
        .collect()
}

pub fn default_classes() -> BTreeSet<String> {
    BTreeSet::from(["car".to_string()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::PixelPoint;

    fn crop(j: u32, u: u32, v: u32, w: u32, h: u32) -> CropSpec {
        CropSpec { j, u, v, w, h, anchor: PixelPoint::new(0.0, 0.0) }
    }

    fn det(class: &str, x: f64, y: f64, w: f64, h: f64) -> Detection {
        Detection::new(class, 0.7, Box2D::new(x, y, w, h).unwrap(), 0)
    }

    #[test]
    fn remap_at_origin_is_identity() {
        let d = det("car", 3.0, 4.0, 10.0, 5.0);
        let full = to_full_image(&d, &crop(0, 0, 0, 1280, 768)).unwrap();
        assert_eq!(full, d);
    }

    #[test]
    fn remap_translates_and_tags_source() {
        let d = det("car", 10.0, 10.0, 50.0, 30.0);
        let full = to_full_image(&d, &crop(1, 256, 55, 768, 460)).unwrap();
        assert_eq!(full.bbox, Box2D::new(266.0, 65.0, 50.0, 30.0).unwrap());
        assert_eq!(full.source, 1);
        assert_eq!((full.score, full.class_label.as_str()), (0.7, "car"));
    }

    #[test]
    fn remap_rejects_boxes_outside_the_crop() {
        let d = det("car", 180.0, 10.0, 50.0, 30.0);
        assert!(matches!(
            to_full_image(&d, &crop(4, 0, 0, 192, 115)),
            Err(Error::OutOfCrop { crop: 4, .. })
        ));
    }

    #[test]
    fn class_filter_cases() {
        let all_cars = vec![det("car", 0.0, 0.0, 1.0, 1.0), det("car", 5.0, 0.0, 1.0, 1.0)];
        assert_eq!(class_filter(all_cars.clone(), &default_classes()), all_cars);

        let mixed = vec![
            det("person", 0.0, 0.0, 1.0, 1.0),
            det("car", 1.0, 0.0, 1.0, 1.0),
            det("dog", 2.0, 0.0, 1.0, 1.0),
            det("car", 3.0, 0.0, 1.0, 1.0),
        ];
        let cars = class_filter(mixed.clone(), &default_classes());
        assert_eq!(cars, vec![mixed[1].clone(), mixed[3].clone()]);

        assert!(class_filter(mixed, &BTreeSet::new()).is_empty());
    }

    #[test]
    fn detection_json_shape() {
        let d = Detection::new("car", 0.5, Box2D::new(1.0, 2.0, 3.0, 4.0).unwrap(), 2);
        let text = serde_json::to_string(&d).unwrap();
        assert_eq!(text, r#"{"class":"car","score":0.5,"x":1.0,"y":2.0,"w":3.0,"h":4.0,"source":2}"#);
        assert_eq!(serde_json::from_str::<Detection>(&text).unwrap(), d);
        let bad = text.replace("0.5", "1.5");
        assert!(serde_json::from_str::<Detection>(&bad).is_err());
    }
}
