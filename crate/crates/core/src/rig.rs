//! Top-view camera rig: one camera above the pelvis and eight around it.

use std::f64::consts::FRAC_PI_4;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{Camera, CameraError, Extrinsics, Intrinsics, Vec3};

/// Number of cameras in one rig.
pub const RIG_SIZE: usize = 9;

/// Compass labels of the rig cameras in rig order.
pub const CAMERA_LABELS: [&str; RIG_SIZE] = ["C", "E", "NE", "N", "NW", "W", "SW", "S", "SE"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RigError {
    #[error("camera height must be positive and finite, got {0}")]
    InvalidHeight(f64),
    #[error("circle radius must be non-negative and finite, got {0}")]
    InvalidRadius(f64),
    #[error("pelvis position must be finite")]
    InvalidPelvis,
    #[error("empty pass list")]
    NoPasses,
    #[error(transparent)]
    Camera(#[from] CameraError),
}

/// One rig pass: camera height and surround circle radius, both in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigPass {
    pub height: f64,
    pub radius: f64,
}

impl RigPass {
    pub fn new(height: f64, radius: f64) -> Self {
        Self { height, radius }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigConfig {
    pub pass: RigPass,
    pub pelvis_xy: [f64; 2],
    pub intrinsics: Intrinsics,
}

impl RigConfig {
    pub fn validate(&self) -> Result<(), RigError> {
        let RigPass { height, radius } = self.pass;
        if !(height.is_finite() && height > 0.0) {
            return Err(RigError::InvalidHeight(height));
        }
        if !(radius.is_finite() && radius >= 0.0) {
            return Err(RigError::InvalidRadius(radius));
        }
        if !self.pelvis_xy.iter().all(|x| x.is_finite()) {
            return Err(RigError::InvalidPelvis);
        }
        self.intrinsics.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderRig {
    /// Index 0 is the center camera, `1 + n` the surround camera at azimuth `n pi / 4`.
    pub cameras: Vec<Camera>,
    pub config: RigConfig,
}

/// World-to-camera rotation of a camera looking straight down.
///
/// Camera `+z` is world `-z`, camera `+x` is world `+x` and camera `+y` is
/// world `-y`.
pub fn downward_rotation() -> Matrix3<f64> {
    Matrix3::from_diagonal(&Vec3::new(1.0, -1.0, -1.0))
}

/// World position of rig camera `index` (0 = center).
pub fn camera_position(cfg: &RigConfig, index: usize) -> Vec3 {
    let [xp, yp] = cfg.pelvis_xy;
    let h = cfg.pass.height;
    if index == 0 {
        return Vec3::new(xp, yp, h);
    }
    let angle = (index - 1) as f64 * FRAC_PI_4;
    let r = cfg.pass.radius;
    Vec3::new(xp + r * angle.cos(), yp + r * angle.sin(), h)
}

pub fn make_rig(cfg: &RigConfig) -> Result<RenderRig, RigError> {
    cfg.validate()?;
    let rotation = downward_rotation();
    let cameras = (0..RIG_SIZE)
        .map(|idx| {
            let ext = Extrinsics::from_center(rotation, camera_position(cfg, idx))?;
            Ok(Camera::new(cfg.intrinsics, ext)?)
        })
        .collect::<Result<Vec<_>, RigError>>()?;
    Ok(RenderRig {
        cameras,
        config: *cfg,
    })
}

/// One rig per pass, in pass order.
pub fn make_multi_rig(
    passes: &[RigPass],
    pelvis_xy: [f64; 2],
    intrinsics: Intrinsics,
) -> Result<Vec<RenderRig>, RigError> {
    if passes.is_empty() {
        return Err(RigError::NoPasses);
    }
    passes
        .iter()
        .map(|&pass| {
            make_rig(&RigConfig {
                pass,
                pelvis_xy,
                intrinsics,
            })
        })
        .collect()
}
