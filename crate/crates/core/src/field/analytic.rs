use serde::{Deserialize, Serialize};

use super::{FieldBounds, FieldError, RadianceField, RadianceSample};
use crate::camera::Vec3;

fn check_color(color: [f64; 3]) -> Result<(), FieldError> {
    if color.iter().all(|c| (0.0..=1.0).contains(c)) {
        Ok(())
    } else {
        Err(FieldError::InvalidParameter(format!(
            "color {color:?} outside [0, 1]"
        )))
    }
}

fn check_density(sigma: f64) -> Result<(), FieldError> {
    if sigma.is_finite() && sigma >= 0.0 {
        Ok(())
    } else {
        Err(FieldError::InvalidParameter(format!(
            "density {sigma} must be finite and non-negative"
        )))
    }
}

/// Empty space.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Vacuum;

impl RadianceField for Vacuum {
    fn query(&self, _x: &Vec3, _d: &Vec3) -> RadianceSample {
        RadianceSample::VACUUM
    }

    fn bounds(&self) -> Option<FieldBounds> {
        None
    }
}

/// Ball of constant density and color.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniformSphere {
    pub center: [f64; 3],
    pub radius: f64,
    pub sigma: f64,
    pub color: [f64; 3],
}

impl UniformSphere {
    pub fn new(center: Vec3, radius: f64, sigma: f64, color: [f64; 3]) -> Result<Self, FieldError> {
        let s = Self {
            center: center.into(),
            radius,
            sigma,
            color,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        if !(self.radius.is_finite() && self.radius > 0.0)
            || !self.center.iter().all(|c| c.is_finite())
        {
            return Err(FieldError::InvalidParameter(
                "sphere needs a finite center and positive radius".into(),
            ));
        }
        check_density(self.sigma)?;
        check_color(self.color)
    }
}

impl RadianceField for UniformSphere {
    fn query(&self, x: &Vec3, _d: &Vec3) -> RadianceSample {
        if (x - Vec3::from(self.center)).norm_squared() <= self.radius * self.radius {
            RadianceSample {
                color: self.color,
                sigma: self.sigma,
            }
        } else {
            RadianceSample::VACUUM
        }
    }

    fn bounds(&self) -> Option<FieldBounds> {
        let c = Vec3::from(self.center);
        let r = Vec3::repeat(self.radius);
        FieldBounds::new(c - r, c + r).ok()
    }
}

/// Axis-aligned box of constant density and color.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniformBox {
    pub min: [f64; 3],
    pub max: [f64; 3],
    pub sigma: f64,
    pub color: [f64; 3],
}

impl UniformBox {
    pub fn new(min: Vec3, max: Vec3, sigma: f64, color: [f64; 3]) -> Result<Self, FieldError> {
        let b = Self {
            min: min.into(),
            max: max.into(),
            sigma,
            color,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        FieldBounds::new(self.min.into(), self.max.into())?;
        check_density(self.sigma)?;
        check_color(self.color)
    }
}

impl RadianceField for UniformBox {
    fn query(&self, x: &Vec3, _d: &Vec3) -> RadianceSample {
        let inside = (0..3).all(|k| x[k] >= self.min[k] && x[k] <= self.max[k]);
        if inside {
            RadianceSample {
                color: self.color,
                sigma: self.sigma,
            }
        } else {
            RadianceSample::VACUUM
        }
    }

    fn bounds(&self) -> Option<FieldBounds> {
        FieldBounds::new(self.min.into(), self.max.into()).ok()
    }
}

/// Isotropic Gaussian density `sigma0 exp(-|x - mean|^2 / (2 s^2))`, truncated
/// to zero beyond `cutoff * s` so the field has finite support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianBlob {
    pub mean: [f64; 3],
    pub std_dev: f64,
    pub sigma: f64,
    pub color: [f64; 3],
    #[serde(default = "GaussianBlob::default_cutoff")]
    pub cutoff: f64,
}

impl GaussianBlob {
    fn default_cutoff() -> f64 {
        5.0
    }

    pub fn new(mean: Vec3, std_dev: f64, sigma: f64, color: [f64; 3]) -> Result<Self, FieldError> {
        let g = Self {
            mean: mean.into(),
            std_dev,
            sigma,
            color,
            cutoff: Self::default_cutoff(),
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        if !(self.std_dev.is_finite() && self.std_dev > 0.0)
            || !(self.cutoff.is_finite() && self.cutoff > 0.0)
        {
            return Err(FieldError::InvalidParameter(
                "gaussian std_dev and cutoff must be positive".into(),
            ));
        }
        check_density(self.sigma)?;
        check_color(self.color)
    }
}

impl RadianceField for GaussianBlob {
    fn query(&self, x: &Vec3, _d: &Vec3) -> RadianceSample {
        let r2 = (x - Vec3::from(self.mean)).norm_squared();
        let s2 = self.std_dev * self.std_dev;
        if r2 > self.cutoff * self.cutoff * s2 {
            return RadianceSample::VACUUM;
        }
        RadianceSample {
            color: self.color,
            sigma: self.sigma * (-r2 / (2.0 * s2)).exp(),
        }
    }

    fn bounds(&self) -> Option<FieldBounds> {
        let c = Vec3::from(self.mean);
        let r = Vec3::repeat(self.cutoff * self.std_dev);
        FieldBounds::new(c - r, c + r).ok()
    }
}

/// Closed set of analytic shapes usable in scene descriptions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Primitive {
    Sphere(UniformSphere),
    Box(UniformBox),
    Gaussian(GaussianBlob),
}

impl Primitive {
    pub fn validate(&self) -> Result<(), FieldError> {
        match self {
            Primitive::Sphere(s) => s.validate(),
            Primitive::Box(b) => b.validate(),
            Primitive::Gaussian(g) => g.validate(),
        }
    }
}

impl RadianceField for Primitive {
    fn query(&self, x: &Vec3, d: &Vec3) -> RadianceSample {
        match self {
            Primitive::Sphere(s) => s.query(x, d),
            Primitive::Box(b) => b.query(x, d),
            Primitive::Gaussian(g) => g.query(x, d),
        }
    }

    fn bounds(&self) -> Option<FieldBounds> {
        match self {
            Primitive::Sphere(s) => s.bounds(),
            Primitive::Box(b) => b.bounds(),
            Primitive::Gaussian(g) => g.bounds(),
        }
    }
}

/// Overlapping media: densities add and the color is the density-weighted
/// mean of the member colors.
#[derive(Debug, Clone)]
pub struct Union<F> {
    members: Vec<(F, Option<FieldBounds>)>,
    bounds: Option<FieldBounds>,
}

impl<F: RadianceField> Union<F> {
    pub fn new(members: impl IntoIterator<Item = F>) -> Self {
        let members: Vec<_> = members
            .into_iter()
            .map(|m| {
                let b = m.bounds();
                (m, b)
            })
            .collect();
        let bounds = members
            .iter()
            .filter_map(|(_, b)| *b)
            .reduce(|a, b| a.union(&b));
        Self { members, bounds }
    }

    pub fn members(&self) -> impl Iterator<Item = &F> {
        self.members.iter().map(|(m, _)| m)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

impl<F: RadianceField> RadianceField for Union<F> {
    fn query(&self, x: &Vec3, d: &Vec3) -> RadianceSample {
        let mut sigma = 0.0;
        let mut weighted = [0.0; 3];
        for (member, bounds) in &self.members {
            match bounds {
                Some(b) if b.contains(x) => {}
                _ => continue,
            }
            let s = member.query(x, d);
            if s.sigma > 0.0 {
                sigma += s.sigma;
                for k in 0..3 {
                    weighted[k] += s.sigma * s.color[k];
                }
            }
        }
        if sigma == 0.0 {
            return RadianceSample::VACUUM;
        }
        RadianceSample {
            color: weighted.map(|w| (w / sigma).clamp(0.0, 1.0)),
            sigma,
        }
    }

    fn bounds(&self) -> Option<FieldBounds> {
        self.bounds
    }
}
