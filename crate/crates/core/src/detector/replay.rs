//! Replays detections recorded earlier, keyed by frame and source.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Detection, Detector, DetectorInput};
use crate::error::{Error, Result};
use crate::fuse::Box2D;

/// One recorded box, in region-local pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayDetection {
    pub class: String,
    pub score: f64,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplaySource {
    pub source_j: u32,
    pub detections: Vec<ReplayDetection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayFrame {
    pub frame_id: u64,
    pub sources: Vec<ReplaySource>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayFile {
    pub frames: Vec<ReplayFrame>,
}

impl ReplayFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::format("replay file", e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("replay file serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }
}

impl ReplayDetection {
    pub fn from_detection(d: &Detection) -> Self {
        ReplayDetection {
            class: d.class_label.clone(),
            score: d.score,
            x: d.bbox.x,
            y: d.bbox.y,
            w: d.bbox.w,
            h: d.bbox.h,
        }
    }

    fn to_detection(&self, source: u32) -> Result<Detection> {
        let d = Detection::new(
            self.class.clone(),
            self.score,
            Box2D::new(self.x, self.y, self.w, self.h)?,
            source,
        );
        d.validate()?;
        Ok(d)
    }
}

/// Backend that returns exactly what a replay file stores.
#[derive(Debug, Clone, Default)]
pub struct ReplayDetector {
    frames: HashMap<u64, HashMap<u32, Vec<Detection>>>,
}

impl ReplayDetector {
    pub fn new(file: &ReplayFile) -> Result<Self> {
        let mut frames: HashMap<u64, HashMap<u32, Vec<Detection>>> = HashMap::new();
        for f in &file.frames {
            let entry = frames.entry(f.frame_id).or_default();
            for s in &f.sources {
                let dets = s
                    .detections
                    .iter()
                    .map(|d| d.to_detection(s.source_j))
                    .collect::<Result<Vec<_>>>()
                    .map_err(|e| {
                        Error::format(
                            "replay file",
                            format!("frame {} source {}: {e}", f.frame_id, s.source_j),
                        )
                    })?;
                if entry.insert(s.source_j, dets).is_some() {
                    return Err(Error::format(
                        "replay file",
                        format!("frame {} lists source {} twice", f.frame_id, s.source_j),
                    ));
                }
            }
        }
        Ok(Self { frames })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(&ReplayFile::load(path)?)
    }
}

impl Detector for ReplayDetector {
    /// A frame absent from the replay is an error; a source absent from a
    /// recorded frame yields no detections.
    fn detect(&self, input: &DetectorInput<'_>) -> Result<Vec<Detection>> {
        let frame_id = input.frame.frame_id;
        let sources = self.frames.get(&frame_id).ok_or_else(|| {
            Error::BackendUnavailable(format!("replay has no entry for frame {frame_id}"))
        })?;
        Ok(sources.get(&input.region.j).cloned().unwrap_or_default())
    }

    fn name(&self) -> &str {
        "replay"
    }
}
