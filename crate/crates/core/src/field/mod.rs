//! Radiance fields: `(x, d) -> (color, density)`.

mod analytic;
mod voxel;

pub use analytic::{GaussianBlob, Primitive, Union, UniformBox, UniformSphere, Vacuum};
pub use voxel::{load_voxel_grid, write_voxel_grid, NvoxError, VoxelGrid, VoxelStats, NVOX_MAGIC};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{Ray, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("non-finite {0} in field query")]
    NonFinite(&'static str),
    #[error("invalid bounds: min {min:?} must be below max {max:?} on every axis")]
    InvalidBounds { min: [f64; 3], max: [f64; 3] },
    #[error("invalid field parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadianceSample {
    /// Linear RGB, each channel in `[0, 1]`.
    pub color: [f64; 3],
    /// Volumetric density, 1/m.
    pub sigma: f64,
}

impl RadianceSample {
    pub const VACUUM: Self = Self {
        color: [0.0; 3],
        sigma: 0.0,
    };
}

/// Axis-aligned box, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 3]; 2]", into = "[[f64; 3]; 2]")]
pub struct FieldBounds {
    min: Vec3,
    max: Vec3,
}

impl FieldBounds {
    pub fn new(min: Vec3, max: Vec3) -> Result<Self, FieldError> {
        let ok = min.iter().chain(max.iter()).all(|x| x.is_finite())
            && (0..3).all(|k| min[k] < max[k]);
        if !ok {
            return Err(FieldError::InvalidBounds {
                min: min.into(),
                max: max.into(),
            });
        }
        Ok(Self { min, max })
    }

    pub fn min(&self) -> &Vec3 {
        &self.min
    }

    pub fn max(&self) -> &Vec3 {
        &self.max
    }

    pub fn contains(&self, x: &Vec3) -> bool {
        (0..3).all(|k| x[k] >= self.min[k] && x[k] <= self.max[k])
    }

    pub fn union(&self, other: &Self) -> Self {
        Self {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    /// Parametric interval `[t_enter, t_exit]` where the ray is inside the box,
    /// clipped to `t >= 0`. `None` when the ray misses.
    pub fn intersect_ray(&self, ray: &Ray) -> Option<(f64, f64)> {
        let mut t0 = 0.0_f64;
        let mut t1 = f64::INFINITY;
        for k in 0..3 {
            let o = ray.origin[k];
            let d = ray.direction[k];
            if d == 0.0 {
                if o < self.min[k] || o > self.max[k] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / d;
            let (mut a, mut b) = ((self.min[k] - o) * inv, (self.max[k] - o) * inv);
            if a > b {
                std::mem::swap(&mut a, &mut b);
            }
            t0 = t0.max(a);
            t1 = t1.min(b);
            if t0 > t1 {
                return None;
            }
        }
        (t1 > t0).then_some((t0, t1))
    }
}

impl TryFrom<[[f64; 3]; 2]> for FieldBounds {
    type Error = FieldError;

    fn try_from([min, max]: [[f64; 3]; 2]) -> Result<Self, Self::Error> {
        Self::new(min.into(), max.into())
    }
}

impl From<FieldBounds> for [[f64; 3]; 2] {
    fn from(b: FieldBounds) -> Self {
        [b.min.into(), b.max.into()]
    }
}

/// A queryable radiance field. Implementations are immutable and shared
/// read-only across render workers.
pub trait RadianceField: Send + Sync {
    /// Field value at `x` seen along `d`. `x` is assumed finite; outside
    /// [`RadianceField::bounds`] the result must be vacuum.
    fn query(&self, x: &Vec3, d: &Vec3) -> RadianceSample;

    /// Conservative box enclosing every point with positive density, or
    /// `None` for an empty field.
    fn bounds(&self) -> Option<FieldBounds>;

    /// Checked form of [`RadianceField::query`].
    fn sample(&self, x: &Vec3, d: &Vec3) -> Result<RadianceSample, FieldError> {
        if x.iter().any(|c| !c.is_finite()) {
            return Err(FieldError::NonFinite("position"));
        }
        if d.iter().any(|c| !c.is_finite()) {
            return Err(FieldError::NonFinite("direction"));
        }
        Ok(self.query(x, d))
    }
}

pub fn field_bounds<F: RadianceField + ?Sized>(field: &F) -> Option<FieldBounds> {
    field.bounds()
}

impl<F: RadianceField + ?Sized> RadianceField for Box<F> {
    fn query(&self, x: &Vec3, d: &Vec3) -> RadianceSample {
        (**self).query(x, d)
    }

    fn bounds(&self) -> Option<FieldBounds> {
        (**self).bounds()
    }
}

impl<F: RadianceField + ?Sized> RadianceField for std::sync::Arc<F> {
    fn query(&self, x: &Vec3, d: &Vec3) -> RadianceSample {
        (**self).query(x, d)
    }

    fn bounds(&self) -> Option<FieldBounds> {
        (**self).bounds()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds_validation() {
        assert!(FieldBounds::new(Vec3::zeros(), Vec3::new(1.0, 1.0, 0.0)).is_err());
        assert!(FieldBounds::new(Vec3::zeros(), Vec3::repeat(1.0)).is_ok());
    }

    #[test]
    fn slab_intersection() {
        let b = FieldBounds::new(Vec3::repeat(-1.0), Vec3::repeat(1.0)).unwrap();
        let ray = Ray::new(Vec3::new(0.0, 0.0, 5.0), Vec3::new(0.0, 0.0, -1.0));
        assert_eq!(b.intersect_ray(&ray), Some((4.0, 6.0)));
        let miss = Ray::new(Vec3::new(3.0, 0.0, 5.0), Vec3::new(0.0, 0.0, -1.0));
        assert_eq!(b.intersect_ray(&miss), None);
        let inside = Ray::new(Vec3::zeros(), Vec3::x());
        assert_eq!(b.intersect_ray(&inside), Some((0.0, 1.0)));
        let away = Ray::new(Vec3::new(0.0, 0.0, 5.0), Vec3::z());
        assert_eq!(b.intersect_ray(&away), None);
    }

    #[test]
    fn sample_rejects_non_finite() {
        let err = Vacuum.sample(&Vec3::new(f64::INFINITY, 0.0, 0.0), &Vec3::z());
        assert_eq!(err, Err(FieldError::NonFinite("position")));
    }
}
