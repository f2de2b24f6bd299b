//! Coordinate frames, rigid transforms and pinhole projection.
//!
//! All frames use x forward, y left, z up. A waypoint in the world frame reaches the
//! camera frame through three rigid transforms (world to pose, pose to sensor
//! board, board to camera) and is then projected onto the image plane.

use std::path::Path as FsPath;

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `RᵀR = I` and `det(R) = 1` when a transform is constructed.
pub const ORTHONORMAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    World,
    Pose,
    Board,
    Camera,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WorldPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl WorldPoint {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn distance(&self, other: &WorldPoint) -> f64 {
        (self.to_vector() - other.to_vector()).norm()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CameraPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl CameraPoint {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn scaled(self, k: f64) -> Self {
        Self::new(self.x * k, self.y * k, self.z * k)
    }
}

/// Continuous image coordinates, u to the right and v downward. May lie outside
/// the image.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PixelPoint {
    pub u: f64,
    pub v: f64,
}

impl PixelPoint {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }
}

/// A rotation plus translation mapping points from one labelled frame to another:
/// `p_to = R · p_from + t`.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
    from: Frame,
    to: Frame,
}

impl RigidTransform {
    /// Validates orthonormality and a positive determinant.
    pub fn new(
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
        from: Frame,
        to: Frame,
    ) -> Result<Self> {
        if rotation.iter().chain(translation.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidTransform("non-finite entry".into()));
        }
        let ortho_err = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        if ortho_err > ORTHONORMAL_TOL {
            return Err(Error::InvalidTransform(format!(
                "rotation is not orthonormal (max |RᵀR - I| = {ortho_err:e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(Error::InvalidTransform(format!(
                "rotation determinant is {det}, expected +1"
            )));
        }
        Ok(Self {
            rotation,
            translation,
            from,
            to,
        })
    }

    pub fn identity(from: Frame, to: Frame) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
            from,
            to,
        }
    }

    pub fn from_translation(t: Vector3<f64>, from: Frame, to: Frame) -> Self {
        Self {
            translation: t,
            ..Self::identity(from, to)
        }
    }

    /// Rotation built as `Rz(yaw) · Ry(pitch) · Rx(roll)`, i.e. yaw applied first
    /// about the fixed z axis, then pitch, then roll in the rotated frame.
    pub fn from_rpy(roll: f64, pitch: f64, yaw: f64, t: Vector3<f64>, from: Frame, to: Frame) -> Self {
        let rotation = Rotation3::from_euler_angles(roll, pitch, yaw).into_inner();
        Self {
            rotation,
            translation: t,
            from,
            to,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn from_frame(&self) -> Frame {
        self.from
    }

    pub fn to_frame(&self) -> Frame {
        self.to
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// `self ∘ inner`: first `inner`, then `self`. Requires
    /// `self.from_frame() == inner.to_frame()`.
    pub fn compose(&self, inner: &RigidTransform) -> Result<RigidTransform> {
        if self.from != inner.to {
            return Err(Error::FrameMismatch {
                expected: self.from,
                found: inner.to,
            });
        }
        Ok(RigidTransform {
            rotation: self.rotation * inner.rotation,
            translation: self.rotation * inner.translation + self.translation,
            from: inner.from,
            to: self.to,
        })
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            translation: -(rt * self.translation),
            rotation: rt,
            from: self.to,
            to: self.from,
        }
    }
}

/// Vehicle pose in the world: position plus roll/pitch/yaw in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehiclePose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl VehiclePose {
    pub fn position(&self) -> WorldPoint {
        WorldPoint::new(self.x, self.y, self.z)
    }

    /// The transform taking world points into the vehicle pose frame.
    pub fn world_to_pose(&self) -> RigidTransform {
        RigidTransform::from_rpy(
            self.roll,
            self.pitch,
            self.yaw,
            self.position().to_vector(),
            Frame::Pose,
            Frame::World,
        )
        .inverse()
    }
}

/// The world → pose → board → camera chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtrinsicChain {
    world_to_pose: RigidTransform,
    pose_to_board: RigidTransform,
    board_to_camera: RigidTransform,
    world_to_camera: RigidTransform,
}

impl ExtrinsicChain {
    pub fn new(
        world_to_pose: RigidTransform,
        pose_to_board: RigidTransform,
        board_to_camera: RigidTransform,
    ) -> Result<Self> {
        if world_to_pose.from_frame() != Frame::World {
            return Err(Error::FrameMismatch {
                expected: Frame::World,
                found: world_to_pose.from_frame(),
            });
        }
        if board_to_camera.to_frame() != Frame::Camera {
            return Err(Error::FrameMismatch {
                expected: Frame::Camera,
                found: board_to_camera.to_frame(),
            });
        }
        let world_to_camera = board_to_camera
            .compose(&pose_to_board)?
            .compose(&world_to_pose)?;
        Ok(Self {
            world_to_pose,
            pose_to_board,
            board_to_camera,
            world_to_camera,
        })
    }

    pub fn world_to_pose(&self) -> &RigidTransform {
        &self.world_to_pose
    }

    pub fn pose_to_board(&self) -> &RigidTransform {
        &self.pose_to_board
    }

    pub fn board_to_camera(&self) -> &RigidTransform {
        &self.board_to_camera
    }

    /// The precomposed world → camera transform.
    pub fn composite(&self) -> &RigidTransform {
        &self.world_to_camera
    }

    /// Applies the three transforms in sequence.
    pub fn world_to_camera(&self, w: WorldPoint) -> CameraPoint {
        let p = self.world_to_pose.apply(&w.to_vector());
        let b = self.pose_to_board.apply(&p);
        CameraPoint::from_vector(&self.board_to_camera.apply(&b))
    }

    /// Position of the camera expressed in world coordinates.
    ///
    /// Obtained by mapping the camera-frame origin back through the inverse chain.
    pub fn camera_origin_in_world(&self) -> WorldPoint {
        WorldPoint::from_vector(&self.world_to_camera.inverse().apply(&Vector3::zeros()))
    }
}

/// Pinhole intrinsics plus image size.
///
/// `axis_sign_u`/`axis_sign_v` flip the image axes relative to the camera y/z
/// axes; both default to `+1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraModelFields", into = "CameraModelFields")]
pub struct CameraModel {
    fx_m: f64,
    fy_m: f64,
    pixel_size_m: f64,
    ku_px: f64,
    kv_px: f64,
    width_px: u32,
    height_px: u32,
    axis_sign_u: f64,
    axis_sign_v: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraModelFields {
    fx_m: f64,
    fy_m: f64,
    pixel_size_m: f64,
    ku_px: f64,
    kv_px: f64,
    width_px: u32,
    height_px: u32,
    #[serde(default = "plus_one")]
    axis_sign_u: f64,
    #[serde(default = "plus_one")]
    axis_sign_v: f64,
}

fn plus_one() -> f64 {
    1.0
}

impl TryFrom<CameraModelFields> for CameraModel {
    type Error = Error;

    fn try_from(f: CameraModelFields) -> Result<Self> {
        let cam = CameraModel {
            fx_m: f.fx_m,
            fy_m: f.fy_m,
            pixel_size_m: f.pixel_size_m,
            ku_px: f.ku_px,
            kv_px: f.kv_px,
            width_px: f.width_px,
            height_px: f.height_px,
            axis_sign_u: f.axis_sign_u,
            axis_sign_v: f.axis_sign_v,
        };
        cam.validate()?;
        Ok(cam)
    }
}

impl From<CameraModel> for CameraModelFields {
    fn from(c: CameraModel) -> Self {
        CameraModelFields {
            fx_m: c.fx_m,
            fy_m: c.fy_m,
            pixel_size_m: c.pixel_size_m,
            ku_px: c.ku_px,
            kv_px: c.kv_px,
            width_px: c.width_px,
            height_px: c.height_px,
            axis_sign_u: c.axis_sign_u,
            axis_sign_v: c.axis_sign_v,
        }
    }
}

impl CameraModel {
    pub fn new(
        fx_m: f64,
        fy_m: f64,
        pixel_size_m: f64,
        principal_point: (f64, f64),
        size: (u32, u32),
    ) -> Result<Self> {
        let cam = CameraModel {
            fx_m,
            fy_m,
            pixel_size_m,
            ku_px: principal_point.0,
            kv_px: principal_point.1,
            width_px: size.0,
            height_px: size.1,
            axis_sign_u: 1.0,
            axis_sign_v: 1.0,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn with_axis_signs(mut self, sign_u: f64, sign_v: f64) -> Result<Self> {
        self.axis_sign_u = sign_u;
        self.axis_sign_v = sign_v;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidCamera(m.to_string()));
        if !(self.fx_m > 0.0 && self.fy_m > 0.0 && self.pixel_size_m > 0.0) {
            return bad("focal lengths and pixel size must be positive");
        }
        if self.width_px == 0 || self.height_px == 0 {
            return bad("image dimensions must be positive");
        }
        if !(self.ku_px > 0.0 && self.ku_px < self.width_px as f64) {
            return bad("principal point u must lie inside the image");
        }
        if !(self.kv_px > 0.0 && self.kv_px < self.height_px as f64) {
            return bad("principal point v must lie inside the image");
        }
        for s in [self.axis_sign_u, self.axis_sign_v] {
            if s != 1.0 && s != -1.0 {
                return bad("axis signs must be +1 or -1");
            }
        }
        Ok(())
    }

    pub fn width(&self) -> u32 {
        self.width_px
    }

    pub fn height(&self) -> u32 {
        self.height_px
    }

    pub fn principal_point(&self) -> PixelPoint {
        PixelPoint::new(self.ku_px, self.kv_px)
    }

    /// Horizontal focal length in pixels, `f_x / s`.
    pub fn focal_u_px(&self) -> f64 {
        self.fx_m / self.pixel_size_m
    }

    pub fn focal_v_px(&self) -> f64 {
        self.fy_m / self.pixel_size_m
    }

    /// Projects a camera-frame point onto the image plane.
    pub fn project(&self, c: CameraPoint) -> Result<PixelPoint> {
        if !(c.x > 0.0) {
            return Err(Error::BehindCamera(c.x));
        }
        let u = self.axis_sign_u * (self.fx_m / self.pixel_size_m) * (c.y / c.x) + self.ku_px;
        let v = self.axis_sign_v * (self.fy_m / self.pixel_size_m) * (-c.z / c.x) + self.kv_px;
        Ok(PixelPoint::new(u, v))
    }

    pub fn contains(&self, p: PixelPoint) -> bool {
        p.u >= 0.0 && p.u < self.width_px as f64 && p.v >= 0.0 && p.v < self.height_px as f64
    }
}

/// A transform as written in calibration files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformFields {
    pub rotation_rpy_rad: [f64; 3],
    pub translation_m: [f64; 3],
}

impl TransformFields {
    pub fn identity() -> Self {
        Self {
            rotation_rpy_rad: [0.0; 3],
            translation_m: [0.0; 3],
        }
    }

    pub fn to_transform(&self, from: Frame, to: Frame) -> RigidTransform {
        let [r, p, y] = self.rotation_rpy_rad;
        RigidTransform::from_rpy(r, p, y, Vector3::from(self.translation_m), from, to)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Extrinsics {
    pub board_to_camera: TransformFields,
    pub pose_to_board: TransformFields,
}

/// Calibration file contents: intrinsics plus the two vehicle-fixed extrinsics.
///
/// Each extrinsic maps points of its source frame into its target frame as
/// `p_to = R(roll, pitch, yaw) · p_from + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    pub intrinsics: CameraModel,
    pub extrinsics: Extrinsics,
}

impl Calibration {
    pub fn chain_for(&self, pose: &VehiclePose) -> Result<ExtrinsicChain> {
        ExtrinsicChain::new(
            pose.world_to_pose(),
            self.extrinsics
                .pose_to_board
                .to_transform(Frame::Pose, Frame::Board),
            self.extrinsics
                .board_to_camera
                .to_transform(Frame::Board, Frame::Camera),
        )
    }

    pub fn load(path: impl AsRef<FsPath>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::format("calibration file", e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("calibration serializes")
    }
}
