//! Adapter for detectors living in another process.
//!
//! For every region the command is spawned once, receives a single JSON object on
//! stdin and must print a JSON array of `{class, score, x, y, w, h}` objects
//! (region-local pixels) on stdout.

use std::io::Write;
use std::process::{Command, Stdio};

use serde::Serialize;

use super::{Concurrency, Detection, Detector, DetectorInput, ReplayDetection};
use crate::error::{Error, Result};
use crate::fuse::Box2D;

#[derive(Serialize)]
struct RegionRequest<'a> {
    frame_id: u64,
    image: Option<&'a str>,
    region: RegionFields,
    input_side: u32,
}

#[derive(Serialize)]
struct RegionFields {
    j: u32,
    u: u32,
    v: u32,
    w: u32,
    h: u32,
}

#[derive(Debug, Clone)]
pub struct ExternalDetector {
    program: String,
    args: Vec<String>,
}

impl ExternalDetector {
    pub fn new(cmd: &[String]) -> Result<Self> {
        let (program, args) = cmd
            .split_first()
            .ok_or_else(|| Error::Config("external detector command is empty".into()))?;
        Ok(Self {
            program: program.clone(),
            args: args.to_vec(),
        })
    }

    fn request(input: &DetectorInput<'_>) -> String {
        let r = &input.region;
        let req = RegionRequest {
            frame_id: input.frame.frame_id,
            image: input.frame.image.as_deref(),
            region: RegionFields {
                j: r.j,
                u: r.u,
                v: r.v,
                w: r.w,
                h: r.h,
            },
            input_side: input.input_side,
        };
        serde_json::to_string(&req).expect("request serializes")
    }
}

impl Detector for ExternalDetector {
    fn detect(&self, input: &DetectorInput<'_>) -> Result<Vec<Detection>> {
        let unavailable = |e: std::io::Error| Error::BackendUnavailable(format!("{}: {e}", self.program));
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(unavailable)?;
        {
            let mut stdin = child.stdin.take().expect("stdin is piped");
            // The child may legitimately exit without reading its input.
            let _ = writeln!(stdin, "{}", Self::request(input));
        }
        let out = child.wait_with_output().map_err(unavailable)?;
        if !out.status.success() {
            return Err(Error::BackendUnavailable(format!(
                "{} exited with {}",
                self.program, out.status
            )));
        }
        let text = String::from_utf8_lossy(&out.stdout);
        let raw: Vec<ReplayDetection> = serde_json::from_str(text.trim())
            .map_err(|e| Error::format("external detector output", e.to_string()))?;
        raw.into_iter()
            .map(|d| {
                let det = Detection::new(d.class, d.score, Box2D::new(d.x, d.y, d.w, d.h)?, input.region.j);
                det.validate()?;
                Ok(det)
            })
            .collect()
    }

    fn concurrency(&self) -> Concurrency {
        Concurrency::Serialized
    }

    fn name(&self) -> &str {
        "external"
    }
}
