//! Batch dataset generation: rigs, renders, annotations and evaluation.

mod config;
mod eval;
mod scene;

pub use config::{CameraSection, PelvisSource, PipelineConfig, RenderSection, RigSection};
pub use eval::{ground_truth_predictions, run_eval, Estimate3D, EvalMode, EvalReport, PredictionFile};
pub use scene::{person_proxy, SceneSpec};

use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::{
    annotate_keypoints, bbox_from_mask, project_keypoints, write_render_set, AnnotationError,
    DatasetIndex, FrameGroundTruth, RenderSetRecord, SequenceGroundTruth,
};
use crate::field::{NvoxError, RadianceField};
use crate::metrics::MetricsError;
use crate::render::{render_image, RenderError};
use crate::rig::{make_multi_rig, RigError, RIG_SIZE};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config {path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("invalid `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("ground truth {path}: {message}")]
    GroundTruth { path: PathBuf, message: String },
    #[error("no frames to render")]
    NoFrames,
    #[error(transparent)]
    Rig(#[from] RigError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error(transparent)]
    Nvox(NvoxError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("predictions {path}: {message}")]
    Schema { path: PathBuf, message: String },
    #[error("failed to build worker pool: {0}")]
    Pool(String),
    #[error("frame {frame_id}: {source}")]
    Frame {
        frame_id: u64,
        #[source]
        source: Box<PipelineError>,
    },
    #[error("{} frame(s) failed: {}", .0.len(), .0.iter().map(|f| format!("frame {}: {}", f.frame_id, f.message)).collect::<Vec<_>>().join("; "))]
    FramesFailed(Vec<FrameFailure>),
}

impl PipelineError {
    pub(crate) fn invalid(field: &str, message: impl Into<String>) -> Self {
        PipelineError::Invalid {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameFailure {
    pub frame_id: u64,
    pub message: String,
}

/// Command-line overrides of the configuration file.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub output: Option<PathBuf>,
    pub workers: Option<usize>,
    pub seed: Option<u64>,
    pub supersample: Option<u32>,
    pub keep_going: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageTiming {
    pub file: PathBuf,
    pub seconds: f64,
}

/// Summary of a render run, also written to `manifest.json` in the output root.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub actor: String,
    pub frames: usize,
    pub sets: usize,
    pub images: usize,
    pub masks: usize,
    pub records: usize,
    pub files: Vec<PathBuf>,
    pub timings: Vec<ImageTiming>,
    pub failures: Vec<FrameFailure>,
}

pub fn load_ground_truth(path: &Path) -> Result<SequenceGroundTruth, PipelineError> {
    let gt_err = |message: String| PipelineError::GroundTruth {
        path: path.to_path_buf(),
        message,
    };
    let text = fs::read_to_string(path).map_err(|e| gt_err(e.to_string()))?;
    let seq: SequenceGroundTruth = serde_json::from_str(&text).map_err(|e| gt_err(e.to_string()))?;
    if let Some(bad) = seq.frames.iter().find(|f| !f.is_finite()) {
        return Err(gt_err(format!("frame {} has non-finite values", bad.frame_id)));
    }
    Ok(seq)
}

fn mix_seed(seed: u64, frame: u64, pass: usize, cam: usize) -> u64 {
    // splitmix64 finalizer over the combined key
    let mut z = seed
        ^ frame.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ ((pass as u64) << 40)
        ^ ((cam as u64) << 56);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Renders and annotates every selected frame for every rig pass.
///
/// Without `keep_going` the run stops at the first failing frame. With it, the
/// remaining frames are still rendered and the failures are returned together
/// at the end.
pub fn run_render(cfg: &PipelineConfig, run: &RunOptions) -> Result<RunManifest, PipelineError> {
    let mut cfg = cfg.clone();
    if let Some(out) = &run.output {
        cfg.output = out.clone();
    }
    if let Some(w) = run.workers {
        cfg.workers = w;
    }
    if let Some(s) = run.seed {
        cfg.seed = s;
    }
    if let Some(k) = run.supersample {
        cfg.render.supersample = k;
    }
    cfg.render.options(None)?;

    let seq = load_ground_truth(&cfg.ground_truth)?;
    let frames: Vec<&FrameGroundTruth> = seq.frames.iter().step_by(cfg.frame_stride).collect();
    if frames.is_empty() {
        return Err(PipelineError::NoFrames);
    }
    let actor = cfg
        .actor
        .clone()
        .or_else(|| seq.actor.clone())
        .unwrap_or_else(|| "actor".to_string());

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| PipelineError::Pool(e.to_string()))?;

    fs::create_dir_all(&cfg.output).map_err(|source| PipelineError::Io {
        path: cfg.output.clone(),
        source,
    })?;
    let mut index = DatasetIndex::new();
    let mut manifest = RunManifest {
        actor: actor.clone(),
        ..Default::default()
    };
    let sequence_pelvis = frames[0].pelvis_xy();

    for frame in &frames {
        let pelvis = match cfg.rig.pelvis {
            PelvisSource::PerFrame => frame.pelvis_xy(),
            PelvisSource::PerSequence => sequence_pelvis,
            PelvisSource::Fixed(xy) => xy,
        };
        let result = pool.install(|| {
            render_frame(&cfg, &actor, frame, pelvis, &mut index, &mut manifest)
        });
        match result {
            Ok(()) => manifest.frames += 1,
            Err(e) if run.keep_going => {
                log::error!("frame {}: {e}", frame.frame_id);
                manifest.failures.push(FrameFailure {
                    frame_id: frame.frame_id,
                    message: e.to_string(),
                });
            }
            Err(e) => {
                return Err(PipelineError::Frame {
                    frame_id: frame.frame_id,
                    source: Box::new(e),
                })
            }
        }
    }

    let manifest_path = cfg.output.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&manifest_path, text + "\n").map_err(|source| PipelineError::Io {
        path: manifest_path,
        source,
    })?;
    if !manifest.failures.is_empty() {
        return Err(PipelineError::FramesFailed(manifest.failures));
    }
    Ok(manifest)
}

fn render_frame(
    cfg: &PipelineConfig,
    actor: &str,
    frame: &FrameGroundTruth,
    pelvis: [f64; 2],
    index: &mut DatasetIndex,
    manifest: &mut RunManifest,
) -> Result<(), PipelineError> {
    let field = cfg.scene.build(frame)?;
    let intrinsics = cfg.camera.intrinsics()?;
    let rigs = make_multi_rig(&cfg.rig.passes, pelvis, intrinsics)?;
    let provenance = cfg
        .provenance
        .as_ref()
        .map(|t| serde_json::to_value(t).expect("toml table converts to json"));

    for (pass_idx, rig) in rigs.iter().enumerate() {
        // Each image gets its own jitter stream derived from the run seed.
        let outputs = rig
            .cameras
            .iter()
            .enumerate()
            .map(|(cam_idx, cam)| {
                let seed = mix_seed(cfg.seed, frame.frame_id, pass_idx, cam_idx);
                Ok(render_image(&*field, cam, &cfg.render.options(Some(seed))?)?)
            })
            .collect::<Result<Vec<_>, PipelineError>>()?;
        let opts = cfg.render.options(None)?;
        let keypoints = rig
            .cameras
            .iter()
            .map(|cam| {
                if cfg.render.occlusion {
                    annotate_keypoints(frame, cam, &*field as &dyn RadianceField, &opts)
                } else {
                    project_keypoints(frame, cam)
                }
            })
            .collect();
        let bboxes = outputs.iter().map(|o| bbox_from_mask(&o.mask)).collect();
        let mut record = RenderSetRecord::new(actor, frame, rig, keypoints, bboxes);
        record.provenance = provenance.clone();

        let files = write_render_set(&cfg.output, &outputs, &record, index, cfg.render.save_alpha)?;
        let dir = record.set_dir();
        for (out, entry) in outputs.iter().zip(&record.cameras) {
            let file = dir.join(&entry.image);
            info!(
                "rendered {} in {:.3} s",
                file.display(),
                out.elapsed.as_secs_f64()
            );
            manifest.timings.push(ImageTiming {
                file,
                seconds: out.elapsed.as_secs_f64(),
            });
        }
        manifest.sets += 1;
        manifest.images += RIG_SIZE;
        manifest.masks += RIG_SIZE;
        manifest.records += 1;
        manifest.files.extend(files.files);
    }
    Ok(())
}
