//! TOML pipeline configuration. Unknown keys are rejected; relative paths are
//! resolved against the configuration file's directory.

use std::f64::consts::FRAC_PI_2;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::scene::SceneSpec;
use super::PipelineError;
use crate::camera::Intrinsics;
use crate::render::{DepthRange, RenderOptions};
use crate::rig::RigPass;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Subject name used as the top-level output directory. Defaults to the
    /// ground-truth file's `actor`, then to `"actor"`.
    #[serde(default)]
    pub actor: Option<String>,
    pub ground_truth: PathBuf,
    pub output: PathBuf,
    /// Render every n-th frame of the sequence.
    #[serde(default = "one")]
    pub frame_stride: usize,
    /// Render threads; 0 uses all available cores.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub seed: u64,
    pub scene: SceneSpec,
    pub rig: RigSection,
    pub camera: CameraSection,
    #[serde(default)]
    pub render: RenderSection,
    /// Free-form metadata copied into every annotation record (for example the
    /// training setup of the field that was rendered).
    #[serde(default)]
    pub provenance: Option<toml::Table>,
}

fn one() -> usize {
    1
}

/// Where the rig is centered horizontally.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PelvisSource {
    /// Follow the pelvis of each rendered frame.
    #[default]
    PerFrame,
    /// Use the pelvis of the first rendered frame for the whole sequence.
    PerSequence,
    Fixed([f64; 2]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigSection {
    pub passes: Vec<RigPass>,
    #[serde(default)]
    pub pelvis: PelvisSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSection {
    pub width: u32,
    pub height: u32,
    #[serde(default = "half_pi")]
    pub theta_max: f64,
    /// Defaults to inscribing the image circle in the shorter image side.
    #[serde(default)]
    pub focal: Option<f64>,
    #[serde(default)]
    pub cx: Option<f64>,
    #[serde(default)]
    pub cy: Option<f64>,
}

fn half_pi() -> f64 {
    FRAC_PI_2
}

impl CameraSection {
    pub fn intrinsics(&self) -> Result<Intrinsics, PipelineError> {
        let focal = self
            .focal
            .unwrap_or(self.width.min(self.height) as f64 / 2.0 / self.theta_max);
        Intrinsics::new(
            focal,
            self.cx.unwrap_or(self.width as f64 / 2.0),
            self.cy.unwrap_or(self.height as f64 / 2.0),
            self.width,
            self.height,
            self.theta_max,
        )
        .map_err(|e| PipelineError::invalid("camera", e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderSection {
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    #[serde(default)]
    pub near: Option<f64>,
    #[serde(default)]
    pub far: Option<f64>,
    #[serde(default)]
    pub background: [f64; 3],
    #[serde(default = "default_threshold")]
    pub mask_threshold: f64,
    /// Jitter samples inside their bins, seeded from `seed`.
    #[serde(default)]
    pub jitter: bool,
    #[serde(default = "one_u32")]
    pub supersample: u32,
    /// Also write 16-bit accumulated-opacity images.
    #[serde(default)]
    pub save_alpha: bool,
    /// Refine keypoint visibility with the occlusion test.
    #[serde(default = "yes")]
    pub occlusion: bool,
}

fn default_samples() -> usize {
    128
}
fn default_threshold() -> f64 {
    0.5
}
fn one_u32() -> u32 {
    1
}
fn yes() -> bool {
    true
}

impl Default for RenderSection {
    fn default() -> Self {
        Self {
            n_samples: default_samples(),
            near: None,
            far: None,
            background: [0.0; 3],
            mask_threshold: default_threshold(),
            jitter: false,
            supersample: 1,
            save_alpha: false,
            occlusion: true,
        }
    }
}

impl RenderSection {
    /// Options for one image; the jitter seed (if enabled) is supplied per image.
    pub fn options(&self, jitter_seed: Option<u64>) -> Result<RenderOptions, PipelineError> {
        let depth = match (self.near, self.far) {
            (None, None) => DepthRange::Auto,
            (Some(near), Some(far)) => DepthRange::Explicit { near, far },
            _ => {
                return Err(PipelineError::invalid(
                    "render.near/render.far",
                    "set both or neither",
                ))
            }
        };
        let opts = RenderOptions {
            n_samples: self.n_samples,
            depth,
            background: self.background,
            mask_threshold: self.mask_threshold,
            jitter_seed: if self.jitter { jitter_seed } else { None },
            supersample: self.supersample,
        };
        opts.validate()
            .map_err(|e| PipelineError::invalid("render", e.to_string()))?;
        Ok(opts)
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, PipelineError> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| PipelineError::Config {
            path: base_dir.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.resolve_paths(base_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| PipelineError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base).map_err(|e| match e {
            PipelineError::Config { message, .. } => PipelineError::Config {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &Path| {
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        };
        self.ground_truth = join(&self.ground_truth);
        self.output = join(&self.output);
        self.scene.resolve_paths(base);
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.rig.passes.is_empty() {
            return Err(PipelineError::invalid("rig.passes", "pass list is empty"));
        }
        for (i, p) in self.rig.passes.iter().enumerate() {
            if !(p.height.is_finite() && p.height > 0.0) || !(p.radius.is_finite() && p.radius >= 0.0) {
                return Err(PipelineError::invalid(
                    &format!("rig.passes[{i}]"),
                    format!("need height > 0 and radius >= 0, got {p:?}"),
                ));
            }
        }
        if self.frame_stride == 0 {
            return Err(PipelineError::invalid("frame_stride", "must be at least 1"));
        }
        self.camera.intrinsics()?;
        self.render.options(None)?;
        if !self.ground_truth.is_file() {
            return Err(PipelineError::invalid(
                "ground_truth",
                format!("{} not found", self.ground_truth.display()),
            ));
        }
        self.scene.validate()?;
        Ok(())
    }
}
