//! Evaluation of 2D detections and 3D estimates against a rendered dataset.
//!
//! Predictions are one JSON document with optional `detections` (2D, pixel
//! coordinates, keyed by index `image_id`) and `estimates` (3D, camera-frame
//! millimeters, keyed by index `image_id`).

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::annotation::{read_render_set_record, DatasetIndex, Keypoint2D, RenderSetRecord, NUM_JOINTS};
use crate::camera::Vec3;
use crate::metrics::{ap_ar, mpjpe, pa_mpjpe, AlignMode, Detection2D, GroundTruth2D, OksParams, ThresholdScore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EvalMode {
    #[serde(rename = "2d")]
    TwoD,
    #[serde(rename = "3d")]
    ThreeD,
}

impl FromStr for EvalMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "2d" => Ok(EvalMode::TwoD),
            "3d" => Ok(EvalMode::ThreeD),
            other => Err(format!("unknown mode `{other}`, expected 2d or 3d")),
        }
    }
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalMode::TwoD => "2d",
            EvalMode::ThreeD => "3d",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Estimate3D {
    pub image_id: u64,
    /// Camera-frame joint positions in millimeters.
    pub joints: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detections: Option<Vec<Detection2D>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimates: Option<Vec<Estimate3D>>,
}

impl PredictionFile {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| schema(path, e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub images: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ar: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub per_threshold: Vec<ThresholdScore>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mpjpe_mm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pa_mpjpe_mm: Option<f64>,
}

fn schema(path: &Path, message: impl Into<String>) -> PipelineError {
    PipelineError::Schema {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn load_index(root: &Path) -> Result<DatasetIndex, PipelineError> {
    if !root.is_dir() {
        return Err(PipelineError::Io {
            path: root.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "dataset root not found"),
        });
    }
    Ok(DatasetIndex::load(root)?)
}

fn ground_truth_2d(index: &DatasetIndex) -> Vec<GroundTruth2D> {
    index
        .annotations
        .iter()
        .map(|a| GroundTruth2D {
            image_id: a.image_id,
            keypoints: a
                .keypoints
                .chunks_exact(3)
                .map(|k| Keypoint2D {
                    u: k[0],
                    v: k[1],
                    vis: k[2] as u8,
                })
                .collect(),
            area: a.area,
        })
        .collect()
}

/// Camera-frame ground-truth joints in millimeters for every indexed image.
fn ground_truth_3d(root: &Path, index: &DatasetIndex) -> Result<HashMap<u64, Vec<[f64; 3]>>, PipelineError> {
    let mut records: HashMap<String, RenderSetRecord> = HashMap::new();
    let mut out = HashMap::with_capacity(index.images.len());
    for img in &index.images {
        if !records.contains_key(&img.annotation_file) {
            let rec = read_render_set_record(&root.join(&img.annotation_file))?;
            records.insert(img.annotation_file.clone(), rec);
        }
        let rec = &records[&img.annotation_file];
        let entry = rec
            .cameras
            .iter()
            .find(|c| c.index == img.camera_index)
            .ok_or_else(|| {
                schema(
                    &root.join(&img.annotation_file),
                    format!("no camera {} for image {}", img.camera_index, img.id),
                )
            })?;
        let joints = rec
            .joints_3d
            .iter()
            .map(|j| (entry.camera.extrinsics.world_to_camera(&Vec3::from(*j)) * 1000.0).into())
            .collect();
        out.insert(img.id, joints);
    }
    Ok(out)
}

/// Predictions that reproduce the ground truth of `root` exactly.
pub fn ground_truth_predictions(root: &Path, mode: EvalMode) -> Result<PredictionFile, PipelineError> {
    let index = load_index(root)?;
    Ok(match mode {
        EvalMode::TwoD => PredictionFile {
            detections: Some(
                ground_truth_2d(&index)
                    .into_iter()
                    .filter(|g| g.area > 0.0)
                    .map(|g| Detection2D {
                        image_id: g.image_id,
                        keypoints: g.keypoints.iter().map(|k| [k.u, k.v, 1.0]).collect(),
                        score: 1.0,
                    })
                    .collect(),
            ),
            estimates: None,
        },
        EvalMode::ThreeD => {
            let mut estimates: Vec<Estimate3D> = ground_truth_3d(root, &index)?
                .into_iter()
                .map(|(image_id, joints)| Estimate3D { image_id, joints })
                .collect();
            estimates.sort_by_key(|e| e.image_id);
            PredictionFile {
                detections: None,
                estimates: Some(estimates),
            }
        }
    })
}

/// Scores the predictions in `pred_path` against the dataset at `gt_root`.
pub fn run_eval(pred_path: &Path, gt_root: &Path, mode: EvalMode) -> Result<EvalReport, PipelineError> {
    let preds = PredictionFile::load(pred_path)?;
    let index = load_index(gt_root)?;
    let known: std::collections::HashSet<u64> = index.images.iter().map(|i| i.id).collect();
    let check_id = |id: u64| {
        if known.contains(&id) {
            Ok(())
        } else {
            Err(schema(pred_path, format!("unknown image_id {id}")))
        }
    };

    match mode {
        EvalMode::TwoD => {
            let dets = preds
                .detections
                .ok_or_else(|| schema(pred_path, "missing `detections` for 2d evaluation"))?;
            for d in &dets {
                check_id(d.image_id)?;
                if d.keypoints.len() != NUM_JOINTS {
                    return Err(schema(
                        pred_path,
                        format!(
                            "image {}: {} keypoints, expected {NUM_JOINTS}",
                            d.image_id,
                            d.keypoints.len()
                        ),
                    ));
                }
            }
            let gts = ground_truth_2d(&index);
            let r = ap_ar(&dets, &gts, &OksParams::coco(NUM_JOINTS))?;
            Ok(EvalReport {
                mode,
                images: index.images.len(),
                ap: Some(r.ap),
                ar: Some(r.ar),
                per_threshold: r.per_threshold,
                mpjpe_mm: None,
                pa_mpjpe_mm: None,
            })
        }
        EvalMode::ThreeD => {
            let ests = preds
                .estimates
                .ok_or_else(|| schema(pred_path, "missing `estimates` for 3d evaluation"))?;
            if ests.is_empty() {
                return Err(schema(pred_path, "no estimates"));
            }
            for e in &ests {
                check_id(e.image_id)?;
                if e.joints.len() != NUM_JOINTS {
                    return Err(schema(
                        pred_path,
                        format!(
                            "image {}: {} joints, expected {NUM_JOINTS}",
                            e.image_id,
                            e.joints.len()
                        ),
                    ));
                }
            }
            let gt = ground_truth_3d(gt_root, &index)?;
            let errors = ests
                .par_iter()
                .map(|e| {
                    let g = &gt[&e.image_id];
                    Ok((mpjpe(&e.joints, g)?, pa_mpjpe(&e.joints, g, AlignMode::Similarity)?))
                })
                .collect::<Result<Vec<_>, PipelineError>>()?;
            let n = errors.len() as f64;
            Ok(EvalReport {
                mode,
                images: errors.len(),
                ap: None,
                ar: None,
                per_threshold: Vec::new(),
                mpjpe_mm: Some(errors.iter().map(|e| e.0).sum::<f64>() / n),
                pa_mpjpe_mm: Some(errors.iter().map(|e| e.1).sum::<f64>() / n),
            })
        }
    }
}

impl EvalReport {
    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        let text = serde_json::to_string_pretty(self).expect("report serializes");
        fs::write(path, text + "\n").map_err(|source| PipelineError::Io {
            path: PathBuf::from(path),
            source,
        })
    }
}
