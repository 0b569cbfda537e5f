//! Scene sources for the render pipeline.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::annotation::skeleton::{bones, HEAD, NECK, PELVIS};
use crate::annotation::FrameGroundTruth;
use crate::camera::Vec3;
use crate::field::{load_voxel_grid, Primitive, RadianceField, Union, UniformBox, UniformSphere};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SceneSpec {
    /// Analytic stand-in for a person, rebuilt from each frame's joints: a box
    /// torso, a sphere head and chains of spheres along every bone.
    PersonProxy {
        #[serde(default = "proxy_density")]
        density: f64,
        #[serde(default = "proxy_limb_radius")]
        limb_radius: f64,
        #[serde(default = "proxy_head_radius")]
        head_radius: f64,
        #[serde(default = "proxy_skin")]
        skin: [f64; 3],
        #[serde(default = "proxy_shirt")]
        shirt: [f64; 3],
    },
    /// The same analytic primitives for every frame.
    Primitives { items: Vec<Primitive> },
    /// NVOX voxel grid. `{frame}` in the path is replaced by the zero-padded
    /// six-digit frame id, giving one grid per frame.
    Nvox { path: PathBuf },
}

fn proxy_density() -> f64 {
    8.0
}
fn proxy_limb_radius() -> f64 {
    0.07
}
fn proxy_head_radius() -> f64 {
    0.11
}
fn proxy_skin() -> [f64; 3] {
    [0.87, 0.68, 0.55]
}
fn proxy_shirt() -> [f64; 3] {
    [0.2, 0.35, 0.7]
}

impl SceneSpec {
    pub fn person_proxy() -> Self {
        SceneSpec::PersonProxy {
            density: proxy_density(),
            limb_radius: proxy_limb_radius(),
            head_radius: proxy_head_radius(),
            skin: proxy_skin(),
            shirt: proxy_shirt(),
        }
    }

    pub(crate) fn resolve_paths(&mut self, base: &Path) {
        if let SceneSpec::Nvox { path } = self {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        match self {
            SceneSpec::PersonProxy {
                density,
                limb_radius,
                head_radius,
                skin,
                shirt,
            } => {
                let ok = density.is_finite()
                    && *density >= 0.0
                    && *limb_radius > 0.0
                    && *head_radius > 0.0
                    && skin.iter().chain(shirt).all(|c| (0.0..=1.0).contains(c));
                if !ok {
                    return Err(PipelineError::invalid("scene", "invalid person_proxy parameters"));
                }
            }
            SceneSpec::Primitives { items } => {
                for (i, p) in items.iter().enumerate() {
                    p.validate()
                        .map_err(|e| PipelineError::invalid(&format!("scene.items[{i}]"), e.to_string()))?;
                }
            }
            SceneSpec::Nvox { path } => {
                let s = path.to_string_lossy();
                if !s.contains("{frame}") && !path.is_file() {
                    return Err(PipelineError::invalid("scene.path", format!("{s} not found")));
                }
            }
        }
        Ok(())
    }

    /// Field to render for `frame`.
    pub fn build(&self, frame: &FrameGroundTruth) -> Result<Arc<dyn RadianceField>, PipelineError> {
        match self {
            SceneSpec::PersonProxy {
                density,
                limb_radius,
                head_radius,
                skin,
                shirt,
            } => Ok(Arc::new(person_proxy(
                frame,
                *density,
                *limb_radius,
                *head_radius,
                *skin,
                *shirt,
            )?)),
            SceneSpec::Primitives { items } => Ok(Arc::new(Union::new(items.iter().copied()))),
            SceneSpec::Nvox { path } => {
                let resolved = PathBuf::from(
                    path.to_string_lossy()
                        .replace("{frame}", &format!("{:06}", frame.frame_id)),
                );
                let grid = load_voxel_grid(&resolved).map_err(PipelineError::Nvox)?;
                Ok(Arc::new(grid))
            }
        }
    }
}

/// Builds the person proxy for one frame.
pub fn person_proxy(
    frame: &FrameGroundTruth,
    density: f64,
    limb_radius: f64,
    head_radius: f64,
    skin: [f64; 3],
    shirt: [f64; 3],
) -> Result<Union<Primitive>, PipelineError> {
    let err = |e: crate::field::FieldError| PipelineError::invalid("scene", e.to_string());
    let mut items = Vec::new();

    let pelvis = frame.joint(PELVIS);
    let neck = frame.joint(NECK);
    let (lo_z, hi_z) = (pelvis.z.min(neck.z) - 0.08, pelvis.z.max(neck.z));
    let mid = (pelvis + neck) / 2.0;
    items.push(Primitive::Box(
        UniformBox::new(
            Vec3::new(mid.x - 0.15, mid.y - 0.09, lo_z),
            Vec3::new(mid.x + 0.15, mid.y + 0.09, hi_z),
            density,
            shirt,
        )
        .map_err(err)?,
    ));
    items.push(Primitive::Sphere(
        UniformSphere::new(frame.joint(HEAD), head_radius, density, skin).map_err(err)?,
    ));

    let spacing = 1.5 * limb_radius;
    for (child, parent) in bones() {
        let a = frame.joint(parent);
        let b = frame.joint(child);
        let steps = ((b - a).norm() / spacing).ceil().max(1.0) as usize;
        // Skip the parent end: it is covered by the parent's own bone or is the pelvis.
        for s in 1..=steps {
            let p = a + (b - a) * (s as f64 / steps as f64);
            items.push(Primitive::Sphere(
                UniformSphere::new(p, limb_radius, density, skin).map_err(err)?,
            ));
        }
    }
    items.push(Primitive::Sphere(
        UniformSphere::new(pelvis, limb_radius, density, shirt).map_err(err)?,
    ));
    Ok(Union::new(items))
}
