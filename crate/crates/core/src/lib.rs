//! Path-guided foveated vehicle detection.
//!
//! The planned path of the vehicle is projected into the front camera image and a
//! handful of crops, each smaller than the last, are cut around waypoints spaced
//! evenly along it. A detector runs on the full image plus every crop; the
//! per-source results are merged by a sequential overlap filter and scored with
//! VOC-style average precision.
//!
//! Module map:
//!
//! - [`frames`]: rigid transforms between world, pose, board and camera frames,
//!   pinhole projection, calibration files.
//! - [`pathcrop`]: reference waypoint selection and crop sizing/placement.
//! - [`detector`]: the backend trait, replay/synthetic/external backends,
//!   letterboxing and crop-to-image remapping.
//! - [`fuse`]: boxes, IoU, detection matrix and the overlap filter.
//! - [`metrics`]: greedy matching, precision/recall curves and AP.
//! - [`simworld`]: synthetic scenes and frame logs.
//! - [`record`]: frame log, ground truth and fused-output file formats.
//! - [`pipeline`]: end-to-end runs and crop-count sweeps.

pub mod detector;
pub mod error;
pub mod frames;
pub mod fuse;
pub mod metrics;
pub mod pathcrop;
pub mod pipeline;
pub mod record;
pub mod simworld;

mod seed;

pub use detector::{Detection, Detector};
pub use error::{Error, Result};
pub use frames::{CameraModel, CameraPoint, ExtrinsicChain, PixelPoint, RigidTransform, WorldPoint};
pub use fuse::{Box2D, DetectionMatrix, FusedDetections};
pub use metrics::{APResult, PRCurve};
pub use pathcrop::{CropPlanConfig, CropSpec, Path};
pub use record::FrameRecord;
