//! Reference waypoint selection and distance-scaled crop planning.
//!
//! `n` waypoints are picked at arc lengths `d, 2d, …, n·d` ahead of the camera.
//! Crop `j` has size `floor(alpha · image / j)`, is horizontally centred on the
//! projected waypoint and lifted so the waypoint sits below the crop centre.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::{CameraModel, ExtrinsicChain, PixelPoint, WorldPoint};

/// Allowed relative deviation of consecutive waypoint spacing from nominal.
pub const SPACING_TOLERANCE: f64 = 0.2;

/// Arc-length slack when deciding whether a waypoint reaches a target distance.
const ARC_EPS: f64 = 1e-9;

/// Ordered waypoints of a planned path.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    waypoints: Vec<WorldPoint>,
    nominal_spacing: f64,
}

impl Path {
    pub const DEFAULT_SPACING: f64 = 0.5;

    pub fn new(waypoints: Vec<WorldPoint>, nominal_spacing: f64) -> Result<Self> {
        if waypoints.is_empty() {
            return Err(Error::EmptyPath);
        }
        if waypoints.len() < 2 {
            return Err(Error::InvalidPath("a path needs at least two waypoints".into()));
        }
        if !(nominal_spacing > 0.0) {
            return Err(Error::InvalidPath("nominal spacing must be positive".into()));
        }
        if let Some(p) = waypoints.iter().find(|p| !p.is_finite()) {
            return Err(Error::InvalidPath(format!("non-finite waypoint {p:?}")));
        }
        let lo = nominal_spacing * (1.0 - SPACING_TOLERANCE);
        let hi = nominal_spacing * (1.0 + SPACING_TOLERANCE);
        for (i, pair) in waypoints.windows(2).enumerate() {
            let gap = pair[0].distance(&pair[1]);
            if gap < lo || gap > hi {
                return Err(Error::InvalidPath(format!(
                    "spacing {gap:.4} m between waypoints {i} and {} is outside [{lo}, {hi}]",
                    i + 1
                )));
            }
        }
        Ok(Self {
            waypoints,
            nominal_spacing,
        })
    }

    pub fn waypoints(&self) -> &[WorldPoint] {
        &self.waypoints
    }

    pub fn nominal_spacing(&self) -> f64 {
        self.nominal_spacing
    }

    /// Total polyline length.
    pub fn length(&self) -> f64 {
        self.waypoints.windows(2).map(|w| w[0].distance(&w[1])).sum()
    }

    fn nearest_index(&self, p: &WorldPoint) -> usize {
        self.waypoints
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.distance(p).total_cmp(&b.1.distance(p)))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CropPlanConfig {
    /// Number of crops.
    pub n: usize,
    /// Spacing between reference waypoints, meters.
    pub d: f64,
    /// Size of the first crop as a fraction of the image.
    pub alpha: f64,
    /// Vertical placement factor; 1 centres the crop on the waypoint.
    pub v_lift: f64,
    pub min_crop_px: u32,
}

impl Default for CropPlanConfig {
    fn default() -> Self {
        Self {
            n: 5,
            d: 25.0,
            alpha: 0.6,
            v_lift: 1.5,
            min_crop_px: 16,
        }
    }
}

impl CropPlanConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.d > 0.0 && self.d.is_finite()) {
            return Err(Error::Config(format!("crop spacing d must be positive, got {}", self.d)));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!("alpha must be in (0, 1], got {}", self.alpha)));
        }
        if !(self.v_lift >= 1.0 && self.v_lift.is_finite()) {
            return Err(Error::Config(format!("v_lift must be >= 1, got {}", self.v_lift)));
        }
        if self.min_crop_px == 0 {
            return Err(Error::Config("min_crop_px must be at least 1".into()));
        }
        Ok(())
    }

    pub fn with_crops(mut self, n: usize) -> Self {
        self.n = n;
        self
    }
}

/// Waypoints at arc lengths `j·d` (j = 1..n) ahead of the path point nearest to
/// `cam_origin`. Fewer than `n` are returned when the path runs out.
pub fn select_reference_waypoints(
    path: &Path,
    cfg: &CropPlanConfig,
    cam_origin: WorldPoint,
) -> Vec<WorldPoint> {
    let wps = path.waypoints();
    let mut out = Vec::with_capacity(cfg.n);
    if cfg.n == 0 {
        return out;
    }
    let start = path.nearest_index(&cam_origin);
    let mut travelled = 0.0;
    let mut j = 1;
    for i in start + 1..wps.len() {
        travelled += wps[i - 1].distance(&wps[i]);
        while j <= cfg.n && travelled >= j as f64 * cfg.d - ARC_EPS {
            out.push(wps[i]);
            j += 1;
        }
        if j > cfg.n {
            break;
        }
    }
    out
}

/// Crop size for index `j ≥ 1`: `floor(alpha · m / j)` for each axis.
pub fn crop_size(j: u32, cam: &CameraModel, cfg: &CropPlanConfig) -> (u32, u32) {
    assert!(j >= 1, "crop index starts at 1");
    let side = |m: u32| {
        let exact = cfg.alpha * m as f64 / j as f64;
        // Absorb representation error so that e.g. 0.6·1280/4 floors to 192.
        ((exact + 1e-9).floor() as u32).max(1)
    };
    (side(cam.width()), side(cam.height()))
}

/// A crop positioned around its anchor, before rounding and clamping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlacedCrop {
    pub j: u32,
    pub u: f64,
    pub v: f64,
    pub w: u32,
    pub h: u32,
    pub anchor: PixelPoint,
}

pub fn place_crop(j: u32, anchor: PixelPoint, size: (u32, u32), cfg: &CropPlanConfig) -> PlacedCrop {
    let (w, h) = size;
    PlacedCrop {
        j,
        u: anchor.u - w as f64 / 2.0,
        v: anchor.v - (h as f64 / 2.0) * cfg.v_lift,
        w,
        h,
        anchor,
    }
}

/// An integer crop rectangle lying inside the image. `j = 0` denotes the whole image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "CropFields", into = "CropFields")]
pub struct CropSpec {
    pub j: u32,
    pub u: u32,
    pub v: u32,
    pub w: u32,
    pub h: u32,
    pub anchor: PixelPoint,
}

#[derive(Serialize, Deserialize)]
struct CropFields {
    j: u32,
    u: u32,
    v: u32,
    w: u32,
    h: u32,
    anchor_u: f64,
    anchor_v: f64,
}

impl From<CropFields> for CropSpec {
    fn from(f: CropFields) -> Self {
        CropSpec {
            j: f.j,
            u: f.u,
            v: f.v,
            w: f.w,
            h: f.h,
            anchor: PixelPoint::new(f.anchor_u, f.anchor_v),
        }
    }
}

impl From<CropSpec> for CropFields {
    fn from(c: CropSpec) -> Self {
        CropFields {
            j: c.j,
            u: c.u,
            v: c.v,
            w: c.w,
            h: c.h,
            anchor_u: c.anchor.u,
            anchor_v: c.anchor.v,
        }
    }
}

impl CropSpec {
    /// Pseudo-crop covering the entire image.
    pub fn whole_image(cam: &CameraModel) -> Self {
        CropSpec {
            j: 0,
            u: 0,
            v: 0,
            w: cam.width(),
            h: cam.height(),
            anchor: cam.principal_point(),
        }
    }

    pub fn fits(&self, cam: &CameraModel) -> bool {
        self.w >= 1
            && self.h >= 1
            && self.u as u64 + self.w as u64 <= cam.width() as u64
            && self.v as u64 + self.h as u64 <= cam.height() as u64
    }
}

fn round_half_up(x: f64) -> i64 {
    (x + 0.5).floor() as i64
}

/// Translates a crop inside the image, clipping its size only when it is larger
/// than the image. Returns `None` when a side ends up below `min_crop_px`.
pub fn clamp_crop(c: &PlacedCrop, cam: &CameraModel, min_crop_px: u32) -> Option<CropSpec> {
    let w = c.w.min(cam.width());
    let h = c.h.min(cam.height());
    if w < min_crop_px || h < min_crop_px {
        return None;
    }
    let u = round_half_up(c.u).clamp(0, (cam.width() - w) as i64) as u32;
    let v = round_half_up(c.v).clamp(0, (cam.height() - h) as i64) as u32;
    Some(CropSpec {
        j: c.j,
        u,
        v,
        w,
        h,
        anchor: c.anchor,
    })
}

/// Plans crops for one frame given its path and extrinsic chain.
///
/// Reference waypoints behind the camera or projecting outside the image are
/// skipped; the surviving crops keep their original index `j`.
pub fn plan_crops(
    path: &Path,
    chain: &ExtrinsicChain,
    cam: &CameraModel,
    cfg: &CropPlanConfig,
) -> Vec<CropSpec> {
    let origin = chain.camera_origin_in_world();
    select_reference_waypoints(path, cfg, origin)
        .into_iter()
        .zip(1u32..)
        .filter_map(|(w, j)| {
            let anchor = cam.project(chain.world_to_camera(w)).ok()?;
            if !cam.contains(anchor) {
                return None;
            }
            let placed = place_crop(j, anchor, crop_size(j, cam, cfg), cfg);
            clamp_crop(&placed, cam, cfg.min_crop_px)
        })
        .collect()
}
