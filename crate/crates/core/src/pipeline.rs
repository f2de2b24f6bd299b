//! End-to-end runs over a frame log and crop-count sweeps.
//!
//! Per frame: plan crops, run the detector on the full image and every crop,
//! map the boxes back into the full image, keep whitelisted classes, fuse. The
//! fused detections of all frames are then scored against the frame log's
//! ground truth.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path as FsPath, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::{
    class_filter, default_classes, to_full_image, Concurrency, Detection, Detector, DetectorInput,
    ExternalDetector, ReplayDetection, ReplayDetector, ReplayFile, ReplayFrame, ReplaySource,
    SyntheticConfig, SyntheticDetector, DEFAULT_INPUT_SIDE,
};
use crate::error::{Error, Result};
use crate::frames::Calibration;
use crate::fuse::{build_matrix, overlap_filter, overlap_filter_per_class, FusedDetections, DEFAULT_FUSION_IOU};
use crate::metrics::{evaluate, APResult, FrameDetection, GroundTruthBox, PRCurve, DEFAULT_EVAL_IOU};
use crate::pathcrop::{plan_crops, CropPlanConfig, CropSpec, Path};
use crate::record::{read_frame_log, FrameRecord, FusedFile, FusedFrame};

/// Detector backend selection as it appears in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendSpec {
    Replay { path: PathBuf },
    Synthetic(SyntheticConfig),
    External { cmd: Vec<String> },
}

impl Default for BackendSpec {
    fn default() -> Self {
        BackendSpec::Synthetic(SyntheticConfig::default())
    }
}

impl BackendSpec {
    pub fn build(&self) -> Result<Arc<dyn Detector>> {
        Ok(match self {
            BackendSpec::Replay { path } => Arc::new(ReplayDetector::load(path)?),
            BackendSpec::Synthetic(cfg) => Arc::new(SyntheticDetector::new(*cfg)?),
            BackendSpec::External { cmd } => Arc::new(ExternalDetector::new(cmd)?),
        })
    }

    fn resolve(&mut self, base: &FsPath) {
        if let BackendSpec::Replay { path } = self {
            *path = resolve(base, path);
        }
    }
}

fn resolve(base: &FsPath, p: &FsPath) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// On-disk pipeline configuration. Relative paths are taken relative to the
/// config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineFile {
    pub calibration: PathBuf,
    pub frame_log: PathBuf,
    pub backend: BackendSpec,
    pub crop: CropPlanConfig,
    pub classes: BTreeSet<String>,
    pub fusion_iou: f64,
    pub eval_iou: f64,
    pub input_side: u32,
    pub waypoint_spacing: f64,
    pub per_class_fusion: bool,
    pub jobs: usize,
    /// Frames allowed to fail before a run counts as failed.
    pub max_failed_frames: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl Default for PipelineFile {
    fn default() -> Self {
        Self {
            calibration: PathBuf::from("calibration.json"),
            frame_log: PathBuf::from("frames.jsonl"),
            backend: BackendSpec::default(),
            crop: CropPlanConfig::default(),
            classes: default_classes(),
            fusion_iou: DEFAULT_FUSION_IOU,
            eval_iou: DEFAULT_EVAL_IOU,
            input_side: DEFAULT_INPUT_SIDE,
            waypoint_spacing: Path::DEFAULT_SPACING,
            per_class_fusion: false,
            jobs: 1,
            max_failed_frames: 0,
            out: None,
        }
    }
}

impl PipelineFile {
    pub fn load(path: impl AsRef<FsPath>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut file: PipelineFile =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(FsPath::new("."));
        file.calibration = resolve(base, &file.calibration);
        file.frame_log = resolve(base, &file.frame_log);
        file.backend.resolve(base);
        if let Some(out) = &file.out {
            file.out = Some(resolve(base, out));
        }
        Ok(file)
    }

    /// Loads the referenced calibration and frame log and builds the backend.
    pub fn into_config(self) -> Result<PipelineConfig> {
        let calibration = Calibration::load(&self.calibration)?;
        let frames = read_frame_log(&self.frame_log)?;
        let detector = self.backend.build()?;
        let cfg = PipelineConfig {
            calibration,
            frames,
            detector,
            crop: self.crop,
            classes: self.classes,
            fusion_iou: self.fusion_iou,
            eval_iou: self.eval_iou,
            input_side: self.input_side,
            waypoint_spacing: self.waypoint_spacing,
            per_class_fusion: self.per_class_fusion,
            jobs: self.jobs,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Everything a run needs, loaded into memory.
#[derive(Clone)]
pub struct PipelineConfig {
    pub calibration: Calibration,
    pub frames: Vec<FrameRecord>,
    pub detector: Arc<dyn Detector>,
    pub crop: CropPlanConfig,
    pub classes: BTreeSet<String>,
    pub fusion_iou: f64,
    pub eval_iou: f64,
    pub input_side: u32,
    pub waypoint_spacing: f64,
    pub per_class_fusion: bool,
    pub jobs: usize,
}

impl PipelineConfig {
    pub fn new(calibration: Calibration, frames: Vec<FrameRecord>, detector: Arc<dyn Detector>) -> Self {
        let d = PipelineFile::default();
        Self {
            calibration,
            frames,
            detector,
            crop: d.crop,
            classes: d.classes,
            fusion_iou: d.fusion_iou,
            eval_iou: d.eval_iou,
            input_side: d.input_side,
            waypoint_spacing: d.waypoint_spacing,
            per_class_fusion: d.per_class_fusion,
            jobs: d.jobs,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.crop.validate()?;
        for (name, t) in [("fusion_iou", self.fusion_iou), ("eval_iou", self.eval_iou)] {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::Config(format!("{name} must be in (0, 1), got {t}")));
            }
        }
        if self.input_side == 0 {
            return Err(Error::Config("input_side must be positive".into()));
        }
        if !(self.waypoint_spacing > 0.0) {
            return Err(Error::Config("waypoint_spacing must be positive".into()));
        }
        Ok(())
    }
}

/// Region-local detections of one frame, before remapping.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameDetections {
    pub frame_id: u64,
    pub crops: Vec<CropSpec>,
    /// `(source, detections)` with the full image first.
    pub regions: Vec<(u32, Vec<Detection>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameOutput {
    pub frame_id: u64,
    pub crops: Vec<CropSpec>,
    /// Detections remaining after the class filter, before fusion.
    pub raw_count: usize,
    pub fused: FusedDetections,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameFailure {
    pub frame_id: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineRun {
    pub frames: Vec<FrameOutput>,
    pub failures: Vec<FrameFailure>,
    /// `None` when no frame was processed.
    pub evaluation: Option<APResult>,
}

impl PipelineRun {
    pub fn fused_file(&self) -> FusedFile {
        FusedFile {
            frames: self
                .frames
                .iter()
                .map(|f| FusedFrame {
                    frame_id: f.frame_id,
                    detections: f.fused.accepted.clone(),
                })
                .collect(),
        }
    }
}

/// Plans crops for one frame.
pub fn plan_frame(cfg: &PipelineConfig, frame: &FrameRecord) -> Result<Vec<CropSpec>> {
    let path = frame.path(cfg.waypoint_spacing)?;
    let chain = cfg.calibration.chain_for(&frame.pose)?;
    Ok(plan_crops(&path, &chain, &cfg.calibration.intrinsics, &cfg.crop))
}

/// Runs the detector on the full image and every planned crop.
pub fn detect_frame(cfg: &PipelineConfig, frame: &FrameRecord) -> Result<FrameDetections> {
    let crops = plan_frame(cfg, frame)?;
    let regions = std::iter::once(CropSpec::whole_image(&cfg.calibration.intrinsics))
        .chain(crops.iter().copied())
        .map(|region| {
            let input = DetectorInput::new(frame, region).with_input_side(cfg.input_side);
            Ok((region.j, cfg.detector.detect(&input)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FrameDetections {
        frame_id: frame.frame_id,
        crops,
        regions,
    })
}

/// Remaps, class-filters and fuses the detections of one frame.
pub fn fuse_frame(cfg: &PipelineConfig, dets: &FrameDetections) -> Result<FrameOutput> {
    let whole = CropSpec::whole_image(&cfg.calibration.intrinsics);
    let rows = dets
        .regions
        .iter()
        .map(|(j, local)| {
            let region = if *j == 0 {
                &whole
            } else {
                dets.crops
                    .iter()
                    .find(|c| c.j == *j)
                    .ok_or_else(|| Error::format("detections", format!("no crop with index {j}")))?
            };
            let full = local
                .iter()
                .map(|d| to_full_image(d, region))
                .collect::<Result<Vec<_>>>()?;
            Ok((*j, class_filter(full, &cfg.classes)))
        })
        .collect::<Result<Vec<_>>>()?;
    let matrix = build_matrix(rows)?;
    let fused = if cfg.per_class_fusion {
        overlap_filter_per_class(&matrix, cfg.fusion_iou)
    } else {
        overlap_filter(&matrix, cfg.fusion_iou)
    };
    Ok(FrameOutput {
        frame_id: dets.frame_id,
        crops: dets.crops.clone(),
        raw_count: matrix.detection_count(),
        fused,
    })
}

pub fn process_frame(cfg: &PipelineConfig, frame: &FrameRecord) -> Result<FrameOutput> {
    fuse_frame(cfg, &detect_frame(cfg, frame)?)
}

/// Applies `f` to every frame, in parallel when the backend allows it. Results
/// come back in frame order.
fn map_frames<T: Send>(
    cfg: &PipelineConfig,
    f: impl Fn(&FrameRecord) -> Result<T> + Sync + Send,
) -> Result<Vec<Result<T>>> {
    let parallel = cfg.jobs > 1 && cfg.detector.concurrency() == Concurrency::Parallel;
    if !parallel {
        return Ok(cfg.frames.iter().map(f).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| cfg.frames.par_iter().map(f).collect()))
}

/// Detections for every frame in replay-file form, region-local.
pub fn record_detections(cfg: &PipelineConfig) -> Result<(ReplayFile, Vec<FrameFailure>)> {
    cfg.validate()?;
    let mut file = ReplayFile::default();
    let mut failures = Vec::new();
    for (frame, res) in cfg.frames.iter().zip(map_frames(cfg, |f| detect_frame(cfg, f))?) {
        match res {
            Ok(d) => file.frames.push(ReplayFrame {
                frame_id: d.frame_id,
                sources: d
                    .regions
                    .iter()
                    .map(|(j, ds)| ReplaySource {
                        source_j: *j,
                        detections: ds.iter().map(ReplayDetection::from_detection).collect(),
                    })
                    .collect(),
            }),
            Err(e) => failures.push(FrameFailure {
                frame_id: frame.frame_id,
                message: e.to_string(),
            }),
        }
    }
    Ok((file, failures))
}

pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineRun> {
    cfg.validate()?;
    let mut frames = Vec::with_capacity(cfg.frames.len());
    let mut failures = Vec::new();
    let mut gts: Vec<GroundTruthBox> = Vec::new();
    for (frame, res) in cfg.frames.iter().zip(map_frames(cfg, |f| process_frame(cfg, f))?) {
        match res.and_then(|out| Ok((out, frame.ground_truth()?))) {
            Ok((out, gt)) => {
                frames.push(out);
                gts.extend(gt.into_iter().filter(|g| cfg.classes.contains(&g.class_label)));
            }
            Err(e) => failures.push(FrameFailure {
                frame_id: frame.frame_id,
                message: e.to_string(),
            }),
        }
    }
    let evaluation = (!frames.is_empty()).then(|| {
        let dets: Vec<FrameDetection> = frames
            .iter()
            .flat_map(|f| {
                f.fused.accepted.iter().map(|d| FrameDetection {
                    frame_id: f.frame_id,
                    detection: d.clone(),
                })
            })
            .collect();
        evaluate(&dets, &gts, cfg.eval_iou)
    });
    Ok(PipelineRun {
        frames,
        failures,
        evaluation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub crops: usize,
    /// `None` when nothing was evaluated.
    pub ap: Option<f64>,
    pub tp: usize,
    pub fp: usize,
    pub n_gt: usize,
    pub raw_detections: usize,
    pub fused_detections: usize,
    pub frames: usize,
    pub failed_frames: usize,
    #[serde(skip)]
    pub curve: PRCurve,
    #[serde(skip)]
    pub wall_time: Duration,
}

/// AP per crop count. Only the deterministic fields go into the JSON form;
/// timing appears in the text table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:>5} {:>8} {:>6} {:>6} {:>6} {:>8} {:>8} {:>10}\n",
            "crops", "AP(%)", "TP", "FP", "GT", "raw", "fused", "time(ms)"
        );
        for r in &self.rows {
            let ap = r.ap.map_or("-".to_string(), |a| format!("{:.2}", a * 100.0));
            let _ = writeln!(
                out,
                "{:>5} {:>8} {:>6} {:>6} {:>6} {:>8} {:>8} {:>10.1}",
                r.crops,
                ap,
                r.tp,
                r.fp,
                r.n_gt,
                r.raw_detections,
                r.fused_detections,
                r.wall_time.as_secs_f64() * 1e3
            );
        }
        out
    }

    pub fn failed_frames(&self) -> usize {
        self.rows.iter().map(|r| r.failed_frames).max().unwrap_or(0)
    }
}

/// Runs the pipeline once per crop count, everything else fixed.
pub fn sweep_crops(cfg: &PipelineConfig, counts: &[usize]) -> Result<SweepReport> {
    let rows = counts
        .iter()
        .map(|&n| {
            let mut run_cfg = cfg.clone();
            run_cfg.crop.n = n;
            let started = Instant::now();
            let run = run_pipeline(&run_cfg)?;
            let wall_time = started.elapsed();
            let eval = run.evaluation.as_ref();
            Ok(SweepRow {
                crops: n,
                ap: eval.map(|e| e.ap),
                tp: eval.map_or(0, |e| e.tp),
                fp: eval.map_or(0, |e| e.fp),
                n_gt: eval.map_or(0, |e| e.n_gt),
                raw_detections: run.frames.iter().map(|f| f.raw_count).sum(),
                fused_detections: run.frames.iter().map(|f| f.fused.len()).sum(),
                frames: run.frames.len(),
                failed_frames: run.failures.len(),
                curve: eval.map(|e| e.curve.clone()).unwrap_or_default(),
                wall_time,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport { rows })
}
