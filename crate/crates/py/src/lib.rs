//! Python bindings: crop sizing, projection, box fusion, AP evaluation, scene
//! simulation and crop-count sweeps.

use std::path::PathBuf;

use fovea_core::detector::Detection as CoreDetection;
use fovea_core::frames::{CameraModel as CoreCamera, CameraPoint};
use fovea_core::fuse::{self, build_matrix, Box2D};
use fovea_core::metrics::{self, FrameDetection, GroundTruthBox, MatchedDetection};
use fovea_core::pathcrop::{self, CropPlanConfig};
use fovea_core::pipeline::{self, PipelineFile};
use fovea_core::record::{save_json, write_frame_log, GroundTruthFile};
use fovea_core::simworld::{generate_scene, SceneConfig};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: fovea_core::Error) -> PyErr {
    match e {
        fovea_core::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn bbox(x: f64, y: f64, w: f64, h: f64) -> PyResult<Box2D> {
    Box2D::new(x, y, w, h).map_err(to_py)
}

/// Size `(w, h)` of crop `j` on a `width × height` image.
#[pyfunction]
#[pyo3(signature = (j, width = 1280, height = 768, alpha = 0.6))]
fn crop_size(j: u32, width: u32, height: u32, alpha: f64) -> PyResult<(u32, u32)> {
    if j == 0 {
        return Err(PyValueError::new_err("crop index starts at 1"));
    }
    let cfg = CropPlanConfig { alpha, ..CropPlanConfig::default() };
    cfg.validate().map_err(to_py)?;
    let cam = CoreCamera::new(1e-3, 1e-3, 1e-6, (width as f64 / 2.0, height as f64 / 2.0), (width, height))
        .map_err(to_py)?;
    Ok(pathcrop::crop_size(j, &cam, &cfg))
}

/// Pinhole camera; camera frame is x forward, y left, z up.
#[pyclass(name = "CameraModel", frozen)]
struct PyCameraModel {
    inner: CoreCamera,
}

#[pymethods]
impl PyCameraModel {
    #[new]
    #[pyo3(signature = (fx_m, fy_m, pixel_size_m, ku_px, kv_px, width_px, height_px))]
    fn new(fx_m: f64, fy_m: f64, pixel_size_m: f64, ku_px: f64, kv_px: f64, width_px: u32, height_px: u32) -> PyResult<Self> {
        let inner = CoreCamera::new(fx_m, fy_m, pixel_size_m, (ku_px, kv_px), (width_px, height_px)).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Pixel `(u, v)` of a camera-frame point. Raises for points behind the camera.
    fn project(&self, x: f64, y: f64, z: f64) -> PyResult<(f64, f64)> {
        let p = self.inner.project(CameraPoint::new(x, y, z)).map_err(to_py)?;
        Ok((p.u, p.v))
    }

    #[getter]
    fn width(&self) -> u32 {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> u32 {
        self.inner.height()
    }

    #[getter]
    fn focal_u_px(&self) -> f64 {
        self.inner.focal_u_px()
    }

    fn __repr__(&self) -> String {
        format!("CameraModel({}x{}, f={} px)", self.inner.width(), self.inner.height(), self.inner.focal_u_px())
    }
}

#[pyclass(name = "Detection", frozen, eq, from_py_object)]
#[derive(Clone, PartialEq)]
struct PyDetection {
    inner: CoreDetection,
}

#[pymethods]
impl PyDetection {
    #[new]
    #[pyo3(signature = (x, y, w, h, score = 1.0, class_label = "car".to_string(), source = 0))]
    fn new(x: f64, y: f64, w: f64, h: f64, score: f64, class_label: String, source: u32) -> PyResult<Self> {
        let inner = CoreDetection::new(class_label, score, bbox(x, y, w, h)?, source);
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn class_label(&self) -> &str {
        &self.inner.class_label
    }

    #[getter]
    fn score(&self) -> f64 {
        self.inner.score
    }

    #[getter]
    fn source(&self) -> u32 {
        self.inner.source
    }

    /// `(x, y, w, h)` in full-image pixels.
    #[getter]
    fn bbox(&self) -> (f64, f64, f64, f64) {
        let b = self.inner.bbox;
        (b.x, b.y, b.w, b.h)
    }

    fn __repr__(&self) -> String {
        let b = self.inner.bbox;
        format!(
            "Detection({:?}, score={}, bbox=({}, {}, {}, {}), source={})",
            self.inner.class_label, self.inner.score, b.x, b.y, b.w, b.h, self.inner.source
        )
    }
}

/// Intersection over union of two `(x, y, w, h)` boxes.
#[pyfunction]
fn iou(a: (f64, f64, f64, f64), b: (f64, f64, f64, f64)) -> PyResult<f64> {
    Ok(fuse::iou(&bbox(a.0, a.1, a.2, a.3)?, &bbox(b.0, b.1, b.2, b.3)?))
}

/// Fuses per-source detections. `rows` is a list of `(source, [Detection])`;
/// source 0 is the full image, crops follow in increasing index.
#[pyfunction]
#[pyo3(signature = (rows, thresh = 0.5, per_class = false))]
fn overlap_filter(rows: Vec<(u32, Vec<PyDetection>)>, thresh: f64, per_class: bool) -> PyResult<Vec<PyDetection>> {
    let matrix = build_matrix(
        rows.into_iter()
            .map(|(j, ds)| (j, ds.into_iter().map(|d| d.inner).collect()))
            .collect(),
    )
    .map_err(to_py)?;
    let fused = if per_class {
        fuse::overlap_filter_per_class(&matrix, thresh)
    } else {
        fuse::overlap_filter(&matrix, thresh)
    };
    Ok(fused.accepted.into_iter().map(|inner| PyDetection { inner }).collect())
}

/// AP of a ranked list of TP/FP labels (best score first) against `n_gt` ground-truth boxes.
#[pyfunction]
fn average_precision(labels: Vec<bool>, n_gt: usize) -> f64 {
    let n = labels.len().max(1) as f64;
    let matched: Vec<MatchedDetection> = labels
        .into_iter()
        .enumerate()
        .map(|(i, is_tp)| MatchedDetection {
            frame_id: 0,
            detection: CoreDetection::new("car", 1.0 - i as f64 / n, Box2D { x: 0.0, y: 0.0, w: 1.0, h: 1.0 }, 0),
            is_tp,
            gt_index: None,
        })
        .collect();
    metrics::average_precision(&metrics::pr_curve(&matched, n_gt))
}

/// Matches detections to ground truth and computes AP.
///
/// `detections` is a list of `(frame_id, Detection)`; `ground_truth` a list of
/// `(frame_id, (x, y, w, h), class_label)`. Returns a dict with `ap`, `tp`, `fp`,
/// `n_gt` and the PR curve as `recall`/`precision` lists.
#[pyfunction]
#[pyo3(signature = (detections, ground_truth, iou_thresh = 0.5))]
fn evaluate<'py>(
    py: Python<'py>,
    detections: Vec<(u64, PyDetection)>,
    ground_truth: Vec<(u64, (f64, f64, f64, f64), String)>,
    iou_thresh: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let dets: Vec<FrameDetection> = detections
        .into_iter()
        .map(|(frame_id, d)| FrameDetection { frame_id, detection: d.inner })
        .collect();
    let gts = ground_truth
        .into_iter()
        .map(|(frame_id, (x, y, w, h), class_label)| Ok(GroundTruthBox { frame_id, bbox: bbox(x, y, w, h)?, class_label }))
        .collect::<PyResult<Vec<_>>>()?;
    let r = metrics::evaluate(&dets, &gts, iou_thresh);
    let out = PyDict::new(py);
    out.set_item("ap", r.ap)?;
    out.set_item("tp", r.tp)?;
    out.set_item("fp", r.fp)?;
    out.set_item("n_gt", r.n_gt)?;
    out.set_item("recall", r.curve.points.iter().map(|p| p.recall).collect::<Vec<_>>())?;
    out.set_item("precision", r.curve.points.iter().map(|p| p.precision).collect::<Vec<_>>())?;
    Ok(out)
}

/// Writes a synthetic drive into `out_dir`: `frames.jsonl`, `calibration.json`,
/// `gt.json` and a runnable `config.json`. Returns the number of frames.
#[pyfunction]
#[pyo3(signature = (out_dir, frames = 200, seed = 0, scene_json = None))]
fn simulate(py: Python<'_>, out_dir: PathBuf, frames: usize, seed: u64, scene_json: Option<String>) -> PyResult<usize> {
    let mut scene: SceneConfig = match scene_json {
        Some(text) => fovea_core::record::from_json("scene config", &text).map_err(to_py)?,
        None => SceneConfig::default(),
    };
    scene.frames = frames;
    scene.seed = seed;
    py.detach(|| -> fovea_core::Result<usize> {
        let records = generate_scene(&scene)?.frames()?;
        std::fs::create_dir_all(&out_dir).map_err(|e| fovea_core::Error::io(&out_dir, e))?;
        write_frame_log(out_dir.join("frames.jsonl"), &records)?;
        let cal = out_dir.join("calibration.json");
        std::fs::write(&cal, scene.calibration.to_json()).map_err(|e| fovea_core::Error::io(&cal, e))?;
        save_json(out_dir.join("gt.json"), &GroundTruthFile::from_frames(&records))?;
        let mut cfg = PipelineFile { waypoint_spacing: scene.waypoint_spacing, ..PipelineFile::default() };
        if let pipeline::BackendSpec::Synthetic(s) = &mut cfg.backend {
            s.seed = seed;
        }
        save_json(out_dir.join("config.json"), &cfg)?;
        Ok(records.len())
    })
    .map_err(to_py)
}

fn load_config(path: PathBuf, crops: Option<usize>, jobs: Option<usize>) -> fovea_core::Result<pipeline::PipelineConfig> {
    let mut file = PipelineFile::load(path)?;
    if let Some(n) = crops {
        file.crop.n = n;
    }
    if let Some(j) = jobs {
        file.jobs = j;
    }
    file.into_config()
}

/// Runs the full pipeline for a config file. Returns a dict with `ap` (None
/// for an empty log), `tp`, `fp`, `n_gt`, `frames` and `failed_frames`.
#[pyfunction]
#[pyo3(signature = (config, crops = None, jobs = None))]
fn run_pipeline<'py>(py: Python<'py>, config: PathBuf, crops: Option<usize>, jobs: Option<usize>) -> PyResult<Bound<'py, PyDict>> {
    let run = py
        .detach(|| load_config(config, crops, jobs).and_then(|cfg| pipeline::run_pipeline(&cfg)))
        .map_err(to_py)?;
    let out = PyDict::new(py);
    let eval = run.evaluation.as_ref();
    out.set_item("ap", eval.map(|e| e.ap))?;
    out.set_item("tp", eval.map_or(0, |e| e.tp))?;
    out.set_item("fp", eval.map_or(0, |e| e.fp))?;
    out.set_item("n_gt", eval.map_or(0, |e| e.n_gt))?;
    out.set_item("frames", run.frames.len())?;
    out.set_item("failed_frames", run.failures.len())?;
    Ok(out)
}

/// Runs the pipeline once per crop count; returns the report as JSON text.
#[pyfunction]
#[pyo3(signature = (config, counts = vec![0, 1, 2, 3, 4, 5], jobs = None))]
fn sweep(py: Python<'_>, config: PathBuf, counts: Vec<usize>, jobs: Option<usize>) -> PyResult<String> {
    py.detach(|| load_config(config, None, jobs).and_then(|cfg| pipeline::sweep_crops(&cfg, &counts)))
        .map(|r| r.to_json())
        .map_err(to_py)
}

#[pymodule]
fn fovea(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCameraModel>()?;
    m.add_class::<PyDetection>()?;
    m.add_function(wrap_pyfunction!(crop_size, m)?)?;
    m.add_function(wrap_pyfunction!(iou, m)?)?;
    m.add_function(wrap_pyfunction!(overlap_filter, m)?)?;
    m.add_function(wrap_pyfunction!(average_precision, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    Ok(())
}
