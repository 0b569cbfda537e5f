//! Top-view fisheye rendering of radiance fields into annotated human-pose
//! datasets, plus the metrics used to score pose estimators on them.
//!
//! The crate is organized by pipeline stage:
//!
//! * [`camera`]: equidistant fisheye projection and pixel rays.
//! * [`rig`]: the nine-camera overhead rig.
//! * [`field`]: radiance fields (analytic primitives, voxel grids).
//! * [`render`]: volume rendering of images, masks and opacity.
//! * [`annotation`]: keypoints, boxes, record files and dataset validation.
//! * [`metrics`]: MPJPE, PA-MPJPE, OKS and COCO-style AP/AR.
//! * [`pipeline`]: configuration-driven batch rendering and evaluation.

pub mod annotation;
pub mod camera;
pub mod field;
pub mod metrics;
pub mod pipeline;
pub mod render;
pub mod rig;

pub use annotation::{BBox, FrameGroundTruth, Keypoint2D, RenderSetRecord, SequenceGroundTruth};
pub use camera::{Camera, CameraError, Extrinsics, Intrinsics, PixelProjection, Ray, Vec3};
pub use field::{FieldBounds, RadianceField, RadianceSample};
pub use render::{render_image, Mask, RenderOptions, RenderOutput};
pub use rig::{make_multi_rig, make_rig, RenderRig, RigConfig, RigPass};
