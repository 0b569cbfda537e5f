//! Ideal equidistant fisheye camera.
//!
//! Conventions used throughout the crate:
//!
//! * Column vectors, `X_c = R * X_w + T`. The camera center is `C = -R^T T`.
//! * The optical axis is camera `+z`. A point's field angle `theta` is its angle
//!   to that axis and its azimuth `phi = atan2(y_c, x_c)`.
//! * Equidistant mapping `rho = f * theta`, with `u = rho cos(phi) + c_x` and
//!   `v = rho sin(phi) + c_y`.
//! * Integer pixel `(i, j)` covers the continuous square `[i, i+1) x [j, j+1)`;
//!   its sample position is the center `(i + 0.5, j + 0.5)`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

/// Tolerance on `R R^T = I` and `det R = 1`.
pub const ROTATION_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CameraError {
    #[error("rotation is not orthonormal (max |R R^T - I| = {0:e})")]
    NotOrthonormal(f64),
    #[error("rotation has determinant {0}, expected +1")]
    NotProper(f64),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("point coincides with the camera center")]
    DegeneratePoint,
    #[error("pixel ({u}, {v}) lies outside the {width}x{height} image")]
    OutsideImage { u: f64, v: f64, width: u32, height: u32 },
    #[error("pixel field angle {theta} rad exceeds the image circle ({theta_max} rad)")]
    OutsideImageCircle { theta: f64, theta_max: f64 },
    #[error("field angle {theta} rad is at or beyond 90 degrees; the image-plane crossing is undefined")]
    PlaneSingularity { theta: f64 },
    #[error("camera file {path}: {message}")]
    Io { path: String, message: String },
}

/// World-to-camera rigid transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extrinsics {
    rotation: Matrix3<f64>,
    translation: Vec3,
}

impl Extrinsics {
    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Result<Self, CameraError> {
        if rotation.iter().chain(translation.iter()).any(|x| !x.is_finite()) {
            return Err(CameraError::NonFinite("extrinsics"));
        }
        let err = (rotation * rotation.transpose() - Matrix3::identity()).abs().max();
        if err > ROTATION_TOLERANCE {
            return Err(CameraError::NotOrthonormal(err));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(CameraError::NotProper(det));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// Builds extrinsics from a world-to-camera rotation and the camera's world
    /// position, using `T = -R C`.
    pub fn from_center(rotation: Matrix3<f64>, center: Vec3) -> Result<Self, CameraError> {
        Self::new(rotation, -(rotation * center))
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn world_to_camera(&self, x_w: &Vec3) -> Vec3 {
        self.rotation * x_w + self.translation
    }

    pub fn camera_to_world(&self, x_c: &Vec3) -> Vec3 {
        self.rotation.transpose() * (x_c - self.translation)
    }

    pub fn camera_center(&self) -> Vec3 {
        -(self.rotation.transpose() * self.translation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    /// Focal length in pixels.
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    /// Maximum field angle of the image circle, radians.
    pub theta_max: f64,
}

impl Intrinsics {
    pub fn new(
        focal: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        theta_max: f64,
    ) -> Result<Self, CameraError> {
        let intr = Self {
            focal,
            cx,
            cy,
            width,
            height,
            theta_max,
        };
        intr.validate()?;
        Ok(intr)
    }

    /// Square image whose inscribed circle spans `theta_max`, principal point at
    /// the image center.
    pub fn full_circle(size: u32, theta_max: f64) -> Result<Self, CameraError> {
        let half = size as f64 / 2.0;
        Self::new(half / theta_max, half, half, size, size, theta_max)
    }

    pub fn validate(&self) -> Result<(), CameraError> {
        if ![self.focal, self.cx, self.cy, self.theta_max]
            .iter()
            .all(|x| x.is_finite())
        {
            return Err(CameraError::NonFinite("intrinsics"));
        }
        if self.focal <= 0.0 {
            return Err(CameraError::InvalidIntrinsics(format!(
                "focal length must be positive, got {}",
                self.focal
            )));
        }
        if !(self.theta_max > 0.0 && self.theta_max <= PI) {
            return Err(CameraError::InvalidIntrinsics(format!(
                "theta_max must lie in (0, pi], got {}",
                self.theta_max
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(CameraError::InvalidIntrinsics(
                "image dimensions must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64
    }

    /// Field angle of a continuous pixel position.
    pub fn field_angle(&self, u: f64, v: f64) -> f64 {
        (u - self.cx).hypot(v - self.cy) / self.focal
    }
}

/// Result of the forward projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelProjection {
    pub u: f64,
    pub v: f64,
    pub theta: f64,
    pub phi: f64,
    pub rho: f64,
    /// Inside both the image circle and the image rectangle.
    pub valid: bool,
}

/// `r(t) = origin + t * direction`, with a unit direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
}

impl Ray {
    pub fn new(origin: Vec3, direction: Vec3) -> Self {
        Self {
            origin,
            direction: direction.normalize(),
        }
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraRecord", into = "CameraRecord")]
pub struct Camera {
    pub intrinsics: Intrinsics,
    pub extrinsics: Extrinsics,
}

impl Camera {
    pub fn new(intrinsics: Intrinsics, extrinsics: Extrinsics) -> Result<Self, CameraError> {
        intrinsics.validate()?;
        Ok(Self {
            intrinsics,
            extrinsics,
        })
    }

    pub fn center(&self) -> Vec3 {
        self.extrinsics.camera_center()
    }

    /// Forward equidistant projection of a world point.
    pub fn project(&self, x_w: &Vec3) -> Result<PixelProjection, CameraError> {
        if x_w.iter().any(|x| !x.is_finite()) {
            return Err(CameraError::NonFinite("world point"));
        }
        let x_c = self.extrinsics.world_to_camera(x_w);
        let lateral = x_c.x.hypot(x_c.y);
        if lateral == 0.0 && x_c.z == 0.0 {
            return Err(CameraError::DegeneratePoint);
        }
        let intr = &self.intrinsics;
        let theta = lateral.atan2(x_c.z);
        let phi = x_c.y.atan2(x_c.x);
        let rho = intr.focal * theta;
        let u = rho * phi.cos() + intr.cx;
        let v = rho * phi.sin() + intr.cy;
        let valid = theta <= intr.theta_max && intr.contains(u, v);
        Ok(PixelProjection {
            u,
            v,
            theta,
            phi,
            rho,
            valid,
        })
    }

    /// Camera-frame unit direction of a continuous pixel position, plus its
    /// field angle. `rho = 0` maps to the optical axis without dividing by `rho`.
    fn pixel_direction(&self, u: f64, v: f64) -> Result<(Vec3, f64), CameraError> {
        let intr = &self.intrinsics;
        if !(u.is_finite() && v.is_finite()) {
            return Err(CameraError::NonFinite("pixel"));
        }
        if !intr.contains(u, v) {
            return Err(CameraError::OutsideImage {
                u,
                v,
                width: intr.width,
                height: intr.height,
            });
        }
        let du = u - intr.cx;
        let dv = v - intr.cy;
        let theta = du.hypot(dv) / intr.focal;
        if theta > intr.theta_max {
            return Err(CameraError::OutsideImageCircle {
                theta,
                theta_max: intr.theta_max,
            });
        }
        let phi = dv.atan2(du);
        let (s, c) = theta.sin_cos();
        Ok((Vec3::new(s * phi.cos(), s * phi.sin(), c), theta))
    }

    /// Backward ray for a continuous pixel position (spherical form, valid up to
    /// `theta_max`, including beyond 90 degrees).
    pub fn ray_for_pixel(&self, u: f64, v: f64) -> Result<Ray, CameraError> {
        let (d_c, _) = self.pixel_direction(u, v)?;
        let d_w = self.extrinsics.rotation().transpose() * d_c;
        Ok(Ray::new(self.center(), d_w))
    }

    /// Crossing point `q` of the pixel's ray with the mirrored image plane
    /// `z_c = f`, in camera coordinates (pixel units).
    pub fn plane_crossing(&self, u: f64, v: f64) -> Result<Vec3, CameraError> {
        let intr = &self.intrinsics;
        let du = u - intr.cx;
        let dv = v - intr.cy;
        let rho = du.hypot(dv);
        let theta = rho / intr.focal;
        if theta >= FRAC_PI_2 {
            return Err(CameraError::PlaneSingularity { theta });
        }
        if rho == 0.0 {
            return Ok(Vec3::new(0.0, 0.0, intr.focal));
        }
        let r = intr.focal * theta.tan();
        Ok(Vec3::new(r / rho * du, r / rho * dv, intr.focal))
    }

    /// Backward ray through the tangent-plane construction: `q` is lifted to the
    /// world by `q_w = R^T (q - T)` and the direction is `q_w - o`. Diverges at
    /// 90 degrees; kept to cross-check [`Camera::ray_for_pixel`].
    pub fn ray_for_pixel_plane(&self, u: f64, v: f64) -> Result<Ray, CameraError> {
        let q = self.plane_crossing(u, v)?;
        self.pixel_direction(u, v)?;
        let rt = self.extrinsics.rotation().transpose();
        let q_w = rt * (q - self.extrinsics.translation());
        let origin = self.center();
        Ok(Ray::new(origin, q_w - origin))
    }

    pub fn to_file(&self, path: &Path) -> Result<(), CameraError> {
        let text = serde_json::to_string_pretty(self).expect("camera serializes");
        fs::write(path, text + "\n").map_err(|e| CameraError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn from_file(path: &Path) -> Result<Self, CameraError> {
        let io = |message: String| CameraError::Io {
            path: path.display().to_string(),
            message,
        };
        let text = fs::read_to_string(path).map_err(|e| io(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| io(e.to_string()))
    }
}

/// Key/value form of a camera. Floats are written in shortest round-trip form,
/// so decoding reproduces every parameter bit for bit.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CameraRecord {
    /// Rotation, row-major.
    #[serde(rename = "R")]
    pub rotation: [f64; 9],
    #[serde(rename = "T")]
    pub translation: [f64; 3],
    pub f: f64,
    pub c_x: f64,
    pub c_y: f64,
    pub width: u32,
    pub height: u32,
    pub theta_max: f64,
}

impl From<Camera> for CameraRecord {
    fn from(cam: Camera) -> Self {
        let r = cam.extrinsics.rotation();
        let mut rotation = [0.0; 9];
        for row in 0..3 {
            for col in 0..3 {
                rotation[row * 3 + col] = r[(row, col)];
            }
        }
        let t = cam.extrinsics.translation();
        let i = cam.intrinsics;
        Self {
            rotation,
            translation: [t.x, t.y, t.z],
            f: i.focal,
            c_x: i.cx,
            c_y: i.cy,
            width: i.width,
            height: i.height,
            theta_max: i.theta_max,
        }
    }
}

impl TryFrom<CameraRecord> for Camera {
    type Error = CameraError;

    fn try_from(rec: CameraRecord) -> Result<Self, Self::Error> {
        let rotation = Matrix3::from_row_slice(&rec.rotation);
        let extrinsics = Extrinsics::new(rotation, Vec3::from(rec.translation))?;
        let intrinsics = Intrinsics::new(
            rec.f,
            rec.c_x,
            rec.c_y,
            rec.width,
            rec.height,
            rec.theta_max,
        )?;
        Camera::new(intrinsics, extrinsics)
    }
}

/// One sample of the image-plane crossing diagnostic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossingPoint {
    pub i: usize,
    pub j: usize,
    pub u: f64,
    pub v: f64,
    pub theta: f64,
    /// `(q_x, q_y)` in camera coordinates; `None` where the ray never meets the
    /// plane (field angle at or beyond 90 degrees).
    pub q: Option<(f64, f64)>,
}

impl CrossingPoint {
    pub fn valid(&self) -> bool {
        self.q.is_some()
    }
}

/// Samples a `side x side` grid over the square circumscribing the image
/// circle and reports where each sample's ray crosses the image plane.
///
/// Grid cell `(i, j)` is sampled at its center. With an odd `side` the middle
/// cell falls exactly on the principal point.
pub fn ray_crossing_diagnostic(cam: &Camera, side: usize) -> Vec<CrossingPoint> {
    let intr = &cam.intrinsics;
    let radius = intr.focal * intr.theta_max;
    let step = 2.0 * radius / side as f64;
    let mut points = Vec::with_capacity(side * side);
    for j in 0..side {
        for i in 0..side {
            let u = intr.cx - radius + (i as f64 + 0.5) * step;
            let v = intr.cy - radius + (j as f64 + 0.5) * step;
            let theta = intr.field_angle(u, v);
            let q = cam.plane_crossing(u, v).ok().map(|q| (q.x, q.y));
            points.push(CrossingPoint {
                i,
                j,
                u,
                v,
                theta,
                q,
            });
        }
    }
    points
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;

    fn test_camera() -> Camera {
        let intr = Intrinsics::new(100.0, 250.0, 250.0, 500, 500, FRAC_PI_2).unwrap();
        Camera::new(intr, Extrinsics::identity()).unwrap()
    }

    fn rot(axis: Vec3, angle: f64) -> Matrix3<f64> {
        *Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle).matrix()
    }

    #[test]
    fn world_to_camera_identity_and_rotation() {
        let ext = Extrinsics::new(Matrix3::identity(), Vec3::new(0.0, 0.0, 2.0)).unwrap();
        assert_eq!(ext.world_to_camera(&Vec3::zeros()), Vec3::new(0.0, 0.0, 2.0));
        // R_z(pi/2) = [[0,-1,0],[1,0,0],[0,0,1]]; R * (1,0,0) is its first column.
        let ext = Extrinsics::new(rot(Vec3::z(), FRAC_PI_2), Vec3::zeros()).unwrap();
        let x_c = ext.world_to_camera(&Vec3::new(1.0, 0.0, 0.0));
        assert!((x_c - Vec3::new(0.0, 1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn camera_to_world_inverts() {
        let ext = Extrinsics::new(Matrix3::identity(), Vec3::new(0.0, 0.0, 2.0)).unwrap();
        assert_eq!(ext.camera_to_world(&Vec3::new(0.0, 0.0, 2.0)), Vec3::zeros());
        assert_eq!(ext.camera_to_world(&Vec3::zeros()), ext.camera_center());
        let ext = Extrinsics::new(rot(Vec3::new(1.0, 2.0, -0.5), 0.7), Vec3::new(0.3, -1.0, 2.5))
            .unwrap();
        let x = Vec3::new(-0.4, 1.7, 0.2);
        let back = ext.camera_to_world(&ext.world_to_camera(&x));
        assert!((back - x).norm() < 1e-12);
    }

    #[test]
    fn camera_center_solves_linear_system() {
        let ext = Extrinsics::new(Matrix3::identity(), Vec3::new(1.0, 2.0, 3.0)).unwrap();
        assert_eq!(ext.camera_center(), Vec3::new(-1.0, -2.0, -3.0));

        let r = rot(Vec3::new(-0.2, 0.9, 0.4), 2.1);
        let t = Vec3::new(0.5, -0.25, 3.0);
        let ext = Extrinsics::new(r, t).unwrap();
        // Independent route: solve R C = -T with LU.
        let solved = r.lu().solve(&(-t)).unwrap();
        assert!((ext.camera_center() - solved).norm() < 1e-12);
        assert!(ext.world_to_camera(&ext.camera_center()).norm() < 1e-12);
    }

    #[test]
    fn rejects_bad_rotations() {
        let mut m = Matrix3::identity();
        m[(0, 0)] = 1.001;
        assert!(matches!(
            Extrinsics::new(m, Vec3::zeros()),
            Err(CameraError::NotOrthonormal(_))
        ));
        let reflect = Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0));
        assert!(matches!(
            Extrinsics::new(reflect, Vec3::zeros()),
            Err(CameraError::NotProper(_))
        ));
    }

    #[test]
    fn rejects_bad_intrinsics() {
        assert!(Intrinsics::new(0.0, 1.0, 1.0, 2, 2, 1.0).is_err());
        assert!(Intrinsics::new(1.0, 1.0, 1.0, 0, 2, 1.0).is_err());
        assert!(Intrinsics::new(1.0, 1.0, 1.0, 2, 2, 3.5).is_err());
        assert!(Intrinsics::new(1.0, 1.0, 1.0, 2, 2, PI).is_ok());
    }

    #[test]
    fn project_hand_evaluated_points() {
        let cam = test_camera();
        let p = cam.project(&Vec3::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!((p.u, p.v, p.theta), (250.0, 250.0, 0.0));
        assert!(p.valid);

        let p = cam.project(&Vec3::new(1.0, 0.0, 1.0)).unwrap();
        assert!((p.theta - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
        assert!((p.rho - 25.0 * PI).abs() < 1e-12);
        assert!((p.u - 328.539_816_339_744_8).abs() < 1e-9);
        assert!((p.v - 250.0).abs() < 1e-12);

        let p = cam.project(&Vec3::new(0.0, -1.0, 1.0)).unwrap();
        assert!((p.phi + FRAC_PI_2).abs() < 1e-15);
        assert!((p.u - 250.0).abs() < 1e-9);
        assert!((p.v - 171.460_183_660_255_2).abs() < 1e-9);
    }

    #[test]
    fn project_flags_invalid_and_degenerate() {
        let cam = test_camera();
        // Behind the camera: theta > pi/2.
        let p = cam.project(&Vec3::new(1.0, 0.0, -1.0)).unwrap();
        assert!(!p.valid);
        assert!(p.rho >= 0.0);
        assert_eq!(cam.project(&Vec3::zeros()), Err(CameraError::DegeneratePoint));
        assert!(cam.project(&Vec3::new(f64::NAN, 0.0, 1.0)).is_err());
    }

    #[test]
    fn ray_for_pixel_inverts_examples() {
        let cam = test_camera();
        let ray = cam.ray_for_pixel(250.0, 250.0).unwrap();
        assert_eq!(ray.direction, Vec3::z());
        assert_eq!(ray.origin, Vec3::zeros());

        let ray = cam.ray_for_pixel(250.0 + 25.0 * PI, 250.0).unwrap();
        let expected = Vec3::new(1.0, 0.0, 1.0).normalize();
        assert!((ray.direction - expected).norm() < 1e-9);
    }

    #[test]
    fn ray_for_pixel_errors() {
        let cam = test_camera();
        assert!(matches!(
            cam.ray_for_pixel(600.0, 10.0),
            Err(CameraError::OutsideImage { .. })
        ));
        // Corner of the image lies outside the 90-degree circle.
        assert!(matches!(
            cam.ray_for_pixel(1.0, 1.0),
            Err(CameraError::OutsideImageCircle { .. })
        ));
    }

    #[test]
    fn ray_beyond_ninety_degrees() {
        let intr = Intrinsics::new(100.0, 250.0, 250.0, 500, 500, PI).unwrap();
        let cam = Camera::new(intr, Extrinsics::identity()).unwrap();
        let theta = 2.0;
        let ray = cam.ray_for_pixel(250.0 + 100.0 * theta, 250.0).unwrap();
        assert!(ray.direction.z < 0.0);
        let p = cam.project(&ray.at(3.0)).unwrap();
        assert!((p.theta - theta).abs() < 1e-12);
        assert!(matches!(
            cam.ray_for_pixel_plane(250.0 + 100.0 * theta, 250.0),
            Err(CameraError::PlaneSingularity { .. })
        ));
    }

    #[test]
    fn plane_form_principal_point_and_singularity() {
        let cam = test_camera();
        let ray = cam.ray_for_pixel_plane(250.0, 250.0).unwrap();
        assert!((ray.direction - Vec3::z()).norm() < 1e-15);

        let near = 89.999_f64.to_radians() * 100.0;
        let q = cam.plane_crossing(250.0 + near, 250.0).unwrap();
        assert!(q.x.is_finite() && q.x > 1e6);
        assert!(cam.ray_for_pixel_plane(250.0 + near, 250.0).is_ok());
        assert!(matches!(
            cam.ray_for_pixel_plane(250.0 + 100.0 * FRAC_PI_2, 250.0),
            Err(CameraError::PlaneSingularity { .. })
        ));
    }

    #[test]
    fn record_round_trip_is_bit_exact() {
        let r = rot(Vec3::new(0.3, -0.1, 0.8), 1.234_567_890_123);
        let ext = Extrinsics::new(r, Vec3::new(0.1, 0.2, 1.0 / 3.0)).unwrap();
        let intr = Intrinsics::new(81.487_330_863_050_42, 128.0, 127.5, 256, 255, 1.5).unwrap();
        let cam = Camera::new(intr, ext).unwrap();
        let text = serde_json::to_string(&cam).unwrap();
        assert!(text.contains("\"R\"") && text.contains("\"theta_max\""));
        let back: Camera = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cam);
    }

    #[test]
    fn record_rejects_unknown_keys() {
        let text = r#"{"R":[1,0,0,0,1,0,0,0,1],"T":[0,0,0],"f":1,"c_x":1,"c_y":1,
            "width":2,"height":2,"theta_max":1,"k1":0.1}"#;
        assert!(serde_json::from_str::<Camera>(text).is_err());
    }

    #[test]
    fn diagnostic_center_and_invalid_rim() {
        let cam = test_camera();
        let one = ray_crossing_diagnostic(&cam, 1);
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].q, Some((0.0, 0.0)));

        let grid = ray_crossing_diagnostic(&cam, 50);
        assert_eq!(grid.len(), 2500);
        for p in &grid {
            assert_eq!(p.valid(), p.theta < FRAC_PI_2);
        }
        assert!(grid.iter().any(|p| !p.valid()));
    }
}
