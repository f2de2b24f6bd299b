//! Synthetic drives: a planned path, cars placed along it, and frame logs with
//! projected ground-truth boxes. No pixels are rendered; the synthetic detector
//! works from the ground-truth geometry.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::{
    Calibration, CameraModel, CameraPoint, ExtrinsicChain, Extrinsics, TransformFields, VehiclePose,
    WorldPoint,
};
use crate::fuse::Box2D;
use crate::record::{FrameRecord, GtBox};
use crate::seed;

/// Corners closer than this to the camera plane are clipped away.
const NEAR_PLANE_M: f64 = 0.1;

/// Smallest ground-truth box area kept, px².
const MIN_GT_AREA: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PathShape {
    Straight,
    /// Constant curvature; positive radius turns left, negative turns right.
    Arc { radius: f64 },
}

impl PathShape {
    /// Point and heading at arc length `s` from the path start.
    pub fn sample(&self, s: f64) -> (WorldPoint, f64) {
        match *self {
            PathShape::Straight => (WorldPoint::new(s, 0.0, 0.0), 0.0),
            PathShape::Arc { radius } => {
                let theta = s / radius;
                (
                    WorldPoint::new(radius * theta.sin(), radius * (1.0 - theta.cos()), 0.0),
                    theta,
                )
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneCar {
    /// Centre of the ground-contact footprint.
    pub center: WorldPoint,
    pub yaw: f64,
    /// Length, width, height in meters.
    pub dims: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub path_shape: PathShape,
    /// Planning horizon in front of the vehicle, meters.
    pub path_length: f64,
    pub waypoint_spacing: f64,
    /// Distance the vehicle advances between frames, meters.
    pub step_m: f64,
    /// Car distances ahead of the vehicle along the path, meters.
    pub car_ranges: Vec<f64>,
    /// Lateral offsets, cycled over the cars; positive is left.
    pub lateral_offsets: Vec<f64>,
    pub range_jitter_m: f64,
    pub lateral_jitter_m: f64,
    pub car_dims: [f64; 3],
    pub frames: usize,
    pub seed: u64,
    pub calibration: Calibration,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            path_shape: PathShape::Straight,
            path_length: 150.0,
            waypoint_spacing: 0.5,
            step_m: 0.5,
            car_ranges: vec![20.0, 45.0, 70.0, 95.0, 120.0, 145.0],
            lateral_offsets: vec![0.0, 3.5, -3.5],
            range_jitter_m: 2.0,
            lateral_jitter_m: 0.5,
            car_dims: [4.5, 1.8, 1.5],
            frames: 200,
            seed: 0,
            calibration: default_calibration(),
        }
    }
}

/// 1280×768 camera with a 1000 px focal length, 1.5 m above the road, looking
/// along the vehicle's heading.
pub fn default_calibration() -> Calibration {
    Calibration {
        intrinsics: CameraModel::new(1e-3, 1e-3, 1e-6, (640.0, 384.0), (1280, 768))
            .expect("default intrinsics are valid"),
        extrinsics: Extrinsics {
            board_to_camera: TransformFields::identity(),
            pose_to_board: TransformFields {
                rotation_rpy_rad: [0.0; 3],
                translation_m: [0.0, 0.0, -1.5],
            },
        },
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.frames < 1 {
            return bad("a scene needs at least one frame".into());
        }
        if !(self.path_length > 0.0 && self.waypoint_spacing > 0.0) {
            return bad("path length and waypoint spacing must be positive".into());
        }
        if self.path_length / self.waypoint_spacing < 1.0 {
            return bad("path must hold at least two waypoints".into());
        }
        if !(self.step_m >= 0.0 && self.range_jitter_m >= 0.0 && self.lateral_jitter_m >= 0.0) {
            return bad("step and jitter must be non-negative".into());
        }
        if let PathShape::Arc { radius } = self.path_shape {
            if !(radius.is_finite() && radius != 0.0) {
                return bad(format!("arc radius must be finite and non-zero, got {radius}"));
            }
        }
        if let Some(r) = self.car_ranges.iter().find(|&&r| !(r > 0.0 && r <= self.path_length)) {
            return bad(format!("car range {r} outside (0, {}]", self.path_length));
        }
        if self.car_dims.iter().any(|&d| !(d > 0.0)) {
            return bad("car dimensions must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    config: SceneConfig,
    cars: Vec<Vec<SceneCar>>,
}

impl Scene {
    pub fn config(&self) -> &SceneConfig {
        &self.config
    }

    pub fn frame_count(&self) -> usize {
        self.config.frames
    }

    pub fn cars(&self, frame_index: usize) -> &[SceneCar] {
        &self.cars[frame_index]
    }

    fn start_of(&self, frame_index: usize) -> f64 {
        frame_index as f64 * self.config.step_m
    }

    pub fn pose(&self, frame_index: usize) -> VehiclePose {
        let (p, heading) = self.config.path_shape.sample(self.start_of(frame_index));
        VehiclePose {
            x: p.x,
            y: p.y,
            z: p.z,
            yaw: heading,
            ..Default::default()
        }
    }

    pub fn frames(&self) -> Result<Vec<FrameRecord>> {
        (0..self.frame_count()).map(|i| render_frame(self, i)).collect()
    }
}

/// Builds a deterministic scene from the configuration and its seed.
pub fn generate_scene(cfg: &SceneConfig) -> Result<Scene> {
    cfg.validate()?;
    let cars = (0..cfg.frames)
        .map(|f| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(cfg.seed, &[f as u64]));
            let s0 = f as f64 * cfg.step_m;
            cfg.car_ranges
                .iter()
                .enumerate()
                .map(|(i, &range)| {
                    let dr = jitter(&mut rng, cfg.range_jitter_m);
                    let dl = jitter(&mut rng, cfg.lateral_jitter_m);
                    let range = (range + dr).clamp(f64::EPSILON, cfg.path_length);
                    let offset = cfg
                        .lateral_offsets
                        .get(i % cfg.lateral_offsets.len().max(1))
                        .copied()
                        .unwrap_or(0.0)
                        + dl;
                    let (p, heading) = cfg.path_shape.sample(s0 + range);
                    SceneCar {
                        center: WorldPoint::new(
                            p.x - offset * heading.sin(),
                            p.y + offset * heading.cos(),
                            p.z,
                        ),
                        yaw: heading,
                        dims: cfg.car_dims,
                    }
                })
                .collect()
        })
        .collect();
    Ok(Scene {
        config: cfg.clone(),
        cars,
    })
}

fn jitter(rng: &mut ChaCha8Rng, amplitude: f64) -> f64 {
    if amplitude > 0.0 {
        rng.random_range(-amplitude..=amplitude)
    } else {
        0.0
    }
}

fn cuboid_corners(car: &SceneCar) -> [Vector3<f64>; 8] {
    let [l, w, h] = car.dims;
    let (s, c) = car.yaw.sin_cos();
    let centre = car.center.to_vector();
    let mut out = [Vector3::zeros(); 8];
    let mut k = 0;
    for dx in [-l / 2.0, l / 2.0] {
        for dy in [-w / 2.0, w / 2.0] {
            for dz in [0.0, h] {
                out[k] = centre + Vector3::new(c * dx - s * dy, s * dx + c * dy, dz);
                k += 1;
            }
        }
    }
    out
}

/// Axis-aligned image box of a car's cuboid, clipped to the image.
///
/// The cuboid is clipped against a near plane first, so cars straddling the
/// camera plane get the box of their visible part.
pub fn gt_bbox(car: &SceneCar, chain: &ExtrinsicChain, cam: &CameraModel) -> Option<Box2D> {
    let corners: Vec<Vector3<f64>> = cuboid_corners(car)
        .iter()
        .map(|c| chain.world_to_camera(WorldPoint::from_vector(c)).to_vector())
        .collect();

    let mut visible: Vec<Vector3<f64>> = corners.iter().copied().filter(|c| c.x >= NEAR_PLANE_M).collect();
    if visible.is_empty() {
        return None;
    }
    // Edges join corners differing in exactly one bit of their index.
    for a in 0..8usize {
        for bit in [1usize, 2, 4] {
            let b = a ^ bit;
            if b < a {
                continue;
            }
            let (pa, pb) = (corners[a], corners[b]);
            if (pa.x < NEAR_PLANE_M) != (pb.x < NEAR_PLANE_M) {
                let t = (NEAR_PLANE_M - pa.x) / (pb.x - pa.x);
                visible.push(pa + (pb - pa) * t);
            }
        }
    }

    let (mut u0, mut v0, mut u1, mut v1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in &visible {
        let px = cam.project(CameraPoint::from_vector(p)).ok()?;
        u0 = u0.min(px.u);
        v0 = v0.min(px.v);
        u1 = u1.max(px.u);
        v1 = v1.max(px.v);
    }
    let clipped = Box2D::from_corners(
        u0.max(0.0),
        v0.max(0.0),
        u1.min(cam.width() as f64),
        v1.min(cam.height() as f64),
    )?;
    (clipped.area() >= MIN_GT_AREA).then_some(clipped)
}

/// Frame `frame_index` of the scene: pose, forward waypoints and visible cars.
pub fn render_frame(scene: &Scene, frame_index: usize) -> Result<FrameRecord> {
    if frame_index >= scene.frame_count() {
        return Err(Error::IndexOutOfRange {
            index: frame_index,
            len: scene.frame_count(),
        });
    }
    let cfg = &scene.config;
    let pose = scene.pose(frame_index);
    let chain = cfg.calibration.chain_for(&pose)?;
    let cam = &cfg.calibration.intrinsics;
    let s0 = scene.start_of(frame_index);
    let count = (cfg.path_length / cfg.waypoint_spacing + 1e-9).floor() as usize;
    let waypoints = (0..=count)
        .map(|k| {
            let (p, _) = cfg.path_shape.sample(s0 + k as f64 * cfg.waypoint_spacing);
            [p.x, p.y, p.z]
        })
        .collect();
    let gt = scene.cars[frame_index]
        .iter()
        .filter_map(|car| gt_bbox(car, &chain, cam))
        .map(|b| GtBox::new("car", b))
        .collect();
    Ok(FrameRecord {
        frame_id: frame_index as u64,
        pose,
        waypoints,
        gt,
        image: None,
    })
}
