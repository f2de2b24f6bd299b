//! Frame logs, ground-truth files and fused-detection files.
//!
//! A frame log is JSON Lines, one [`FrameRecord`] per line. Ground truth and fused
//! outputs are single JSON documents grouped by frame.

use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};

use crate::detector::Detection;
use crate::error::{Error, Result};
use crate::frames::{VehiclePose, WorldPoint};
use crate::fuse::Box2D;
use crate::metrics::GroundTruthBox;
use crate::pathcrop::{CropSpec, Path};

/// A ground-truth box as stored in files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GtBox {
    pub class: String,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl GtBox {
    pub fn new(class: impl Into<String>, b: Box2D) -> Self {
        GtBox {
            class: class.into(),
            x: b.x,
            y: b.y,
            w: b.w,
            h: b.h,
        }
    }

    pub fn bbox(&self) -> Result<Box2D> {
        Box2D::new(self.x, self.y, self.w, self.h)
    }
}

/// One timestep of a drive: pose, planned path, annotations.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameRecord {
    pub frame_id: u64,
    pub pose: VehiclePose,
    pub waypoints: Vec<[f64; 3]>,
    pub gt: Vec<GtBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
}

impl FrameRecord {
    pub fn path(&self, nominal_spacing: f64) -> Result<Path> {
        Path::new(
            self.waypoints
                .iter()
                .map(|&[x, y, z]| WorldPoint::new(x, y, z))
                .collect(),
            nominal_spacing,
        )
    }

    pub fn ground_truth(&self) -> Result<Vec<GroundTruthBox>> {
        self.gt
            .iter()
            .map(|g| {
                Ok(GroundTruthBox {
                    frame_id: self.frame_id,
                    bbox: g.bbox()?,
                    class_label: g.class.clone(),
                })
            })
            .collect()
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("frame record serializes")
    }
}

pub fn parse_frame_log(text: &str) -> Result<Vec<FrameRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| Error::format("frame log", format!("line {}: {e}", i + 1)))
        })
        .collect()
}

pub fn format_frame_log(frames: &[FrameRecord]) -> String {
    frames
        .iter()
        .map(|f| f.to_json_line() + "\n")
        .collect()
}

pub fn read_frame_log(path: impl AsRef<FsPath>) -> Result<Vec<FrameRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_frame_log(&text)
}

pub fn write_frame_log(path: impl AsRef<FsPath>, frames: &[FrameRecord]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_frame_log(frames)).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthFrame {
    pub frame_id: u64,
    pub boxes: Vec<GtBox>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthFile {
    pub frames: Vec<GroundTruthFrame>,
}

impl GroundTruthFile {
    pub fn from_frames(frames: &[FrameRecord]) -> Self {
        GroundTruthFile {
            frames: frames
                .iter()
                .map(|f| GroundTruthFrame {
                    frame_id: f.frame_id,
                    boxes: f.gt.clone(),
                })
                .collect(),
        }
    }

    pub fn boxes(&self) -> Result<Vec<GroundTruthBox>> {
        let mut out = Vec::new();
        for f in &self.frames {
            for g in &f.boxes {
                out.push(GroundTruthBox {
                    frame_id: f.frame_id,
                    bbox: g.bbox()?,
                    class_label: g.class.clone(),
                });
            }
        }
        Ok(out)
    }
}

/// Fused detections of one frame; `detections` uses the
/// `{class, score, x, y, w, h, source}` layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusedFrame {
    pub frame_id: u64,
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusedFile {
    pub frames: Vec<FusedFrame>,
}

/// Crop plan of one frame, as written by the `plan` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanFrame {
    pub frame_id: u64,
    pub crops: Vec<CropSpec>,
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("value serializes") + "\n"
}

pub fn from_json<T: serde::de::DeserializeOwned>(what: &'static str, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::format(what, e.to_string()))
}

pub fn load_json<T: serde::de::DeserializeOwned>(what: &'static str, path: impl AsRef<FsPath>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json(what, &text)
}

pub fn save_json<T: Serialize>(path: impl AsRef<FsPath>, value: &T) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_json_pretty(value)).map_err(|e| Error::io(path, e))
}
