//! Ground-truth keypoint annotation of rendered images.

mod record;
pub mod skeleton;
mod validate;

pub use record::{
    read_render_set_record, set_dir, write_render_set, AnnotationError, CameraEntry, DatasetIndex,
    IndexAnnotation, IndexCategory, IndexImage, Manifest, RenderSetRecord, RigRecord, SmplParams,
    ANNOTATION_FILE, INDEX_FILE,
};
pub use skeleton::{FrameGroundTruth, SequenceGroundTruth, JOINT_NAMES, NUM_JOINTS};
pub use validate::{validate_dataset, ValidationReport, Violation, ViolationKind};

use serde::{Deserialize, Serialize};

use crate::camera::{Camera, CameraError, Vec3};
use crate::field::RadianceField;
use crate::render::{transmittance, Mask, RenderOptions};

/// Distance kept clear in front of a joint when testing occlusion, so the
/// body part the joint sits in does not hide it.
pub const OCCLUSION_MARGIN: f64 = 0.01;
/// Minimum camera-to-joint transmittance for a joint to count as visible.
pub const VISIBILITY_THRESHOLD: f64 = 0.5;

/// COCO visibility flags.
pub mod vis {
    pub const OUTSIDE: u8 = 0;
    pub const OCCLUDED: u8 = 1;
    pub const VISIBLE: u8 = 2;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Keypoint2D {
    pub u: f64,
    pub v: f64,
    pub vis: u8,
}

/// Projects each joint into `cam`. Joints that fall outside the image or the
/// image circle get `vis = 0`; the rest are `vis = 2`. A joint at the camera
/// center is reported as `(0, 0)` with `vis = 0`.
pub fn project_keypoints(gt: &FrameGroundTruth, cam: &Camera) -> Vec<Keypoint2D> {
    gt.joints_3d
        .iter()
        .map(|j| match cam.project(&Vec3::from(*j)) {
            Ok(p) => Keypoint2D {
                u: p.u,
                v: p.v,
                vis: if p.valid { vis::VISIBLE } else { vis::OUTSIDE },
            },
            Err(_) => Keypoint2D {
                u: 0.0,
                v: 0.0,
                vis: vis::OUTSIDE,
            },
        })
        .collect()
}

/// Visible (2) when the transmittance from the camera center to the point
/// `OCCLUSION_MARGIN` in front of the joint is at least
/// `VISIBILITY_THRESHOLD`, occluded (1) otherwise.
pub fn occlusion_visibility<F>(joint: &Vec3, cam: &Camera, field: &F, opts: &RenderOptions) -> u8
where
    F: RadianceField + ?Sized,
{
    let origin = cam.center();
    let offset = joint - origin;
    let dist = offset.norm();
    let end = dist - OCCLUSION_MARGIN;
    if end <= 0.0 {
        return vis::VISIBLE;
    }
    let ray = crate::camera::Ray::new(origin, offset);
    let interval = match field.bounds().and_then(|b| b.intersect_ray(&ray)) {
        Some((t0, t1)) => (t0, t1.min(end)),
        None => return vis::VISIBLE,
    };
    if interval.1 <= interval.0 {
        return vis::VISIBLE;
    }
    let t = transmittance(field, &ray, interval.0, interval.1, opts.n_samples);
    if t >= VISIBILITY_THRESHOLD {
        vis::VISIBLE
    } else {
        vis::OCCLUDED
    }
}

/// Projection plus occlusion test against `field` for every in-view joint.
pub fn annotate_keypoints<F>(
    gt: &FrameGroundTruth,
    cam: &Camera,
    field: &F,
    opts: &RenderOptions,
) -> Vec<Keypoint2D>
where
    F: RadianceField + ?Sized,
{
    let mut kps = project_keypoints(gt, cam);
    for (kp, joint) in kps.iter_mut().zip(gt.joints_3d.iter()) {
        if kp.vis != vis::OUTSIDE {
            kp.vis = occlusion_visibility(&Vec3::from(*joint), cam, field, opts);
        }
    }
    kps
}

/// Pixel-aligned box: `x, y` of the top-left pixel, `w, h` in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl BBox {
    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    pub fn contains_point(&self, u: f64, v: f64) -> bool {
        u >= self.x as f64
            && v >= self.y as f64
            && u < (self.x + self.w) as f64
            && v < (self.y + self.h) as f64
    }

    pub fn fits(&self, width: u32, height: u32) -> bool {
        self.w > 0 && self.h > 0 && self.x + self.w <= width && self.y + self.h <= height
    }
}

/// Tight box around the foreground pixels; `None` for an empty mask.
pub fn bbox_from_mask(mask: &Mask) -> Option<BBox> {
    let mut min = (u32::MAX, u32::MAX);
    let mut max = (0u32, 0u32);
    let mut any = false;
    for y in 0..mask.height {
        for x in 0..mask.width {
            if mask.get(x, y) {
                any = true;
                min = (min.0.min(x), min.1.min(y));
                max = (max.0.max(x), max.1.max(y));
            }
        }
    }
    any.then(|| BBox {
        x: min.0,
        y: min.1,
        w: max.0 - min.0 + 1,
        h: max.1 - min.1 + 1,
    })
}

/// Checks a stored keypoint against a fresh projection of its joint.
pub(crate) fn reprojection_error(joint: &Vec3, kp: &Keypoint2D, cam: &Camera) -> Result<f64, CameraError> {
    let p = cam.project(joint)?;
    Ok((p.u - kp.u).hypot(p.v - kp.v))
}
