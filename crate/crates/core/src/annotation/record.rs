//! Render-set records, on-disk layout and the COCO-style dataset index.
//!
//! ```text
//! {root}/index.json
//! {root}/{actor}/{h}_{R}/{frame:06}/annotation.json
//! {root}/{actor}/{h}_{R}/{frame:06}/{frame:06}_{cam:02}.png
//! {root}/{actor}/{h}_{R}/{frame:06}/{frame:06}_{cam:02}_mask.png
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::skeleton::{bones, Joints, JOINT_NAMES, NUM_BETAS};
use super::{BBox, FrameGroundTruth, Keypoint2D};
use crate::camera::Camera;
use crate::render::{RenderError, RenderOutput};
use crate::rig::{RenderRig, CAMERA_LABELS, RIG_SIZE};

pub const ANNOTATION_FILE: &str = "annotation.json";
pub const INDEX_FILE: &str = "index.json";

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error("render set must have {RIG_SIZE} outputs and cameras, got {outputs} outputs and {cameras} cameras")]
    SetSize { outputs: usize, cameras: usize },
    #[error("dataset root {0} does not exist or is not a directory")]
    MissingRoot(PathBuf),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> AnnotationError + '_ {
    move |source| AnnotationError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigRecord {
    pub height: f64,
    pub radius: f64,
    pub pelvis_xy: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmplParams {
    pub betas: [f64; NUM_BETAS],
    pub pose: Joints,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraEntry {
    pub index: usize,
    pub label: String,
    pub camera: Camera,
    /// File names relative to the set directory.
    pub image: String,
    pub mask: String,
    pub keypoints: Vec<Keypoint2D>,
    pub bbox: Option<BBox>,
}

/// Annotation of one 9-camera render set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderSetRecord {
    pub actor: String,
    pub frame_id: u64,
    pub rig: RigRecord,
    pub joints_3d: Joints,
    pub smpl: SmplParams,
    pub cameras: Vec<CameraEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

pub fn image_name(frame_id: u64, cam: usize) -> String {
    format!("{frame_id:06}_{cam:02}.png")
}

pub fn mask_name(frame_id: u64, cam: usize) -> String {
    format!("{frame_id:06}_{cam:02}_mask.png")
}

fn alpha_name(frame_id: u64, cam: usize) -> String {
    format!("{frame_id:06}_{cam:02}_alpha.png")
}

fn fmt_meters(x: f64) -> String {
    if x.fract() == 0.0 {
        format!("{x:.1}")
    } else {
        format!("{x}")
    }
}

/// Set directory relative to the dataset root.
pub fn set_dir(actor: &str, height: f64, radius: f64, frame_id: u64) -> PathBuf {
    PathBuf::from(actor)
        .join(format!("{}_{}", fmt_meters(height), fmt_meters(radius)))
        .join(format!("{frame_id:06}"))
}

impl RenderSetRecord {
    /// Assembles a record from a rig, the frame's ground truth and the
    /// per-camera keypoints and boxes (all in rig order).
    pub fn new(
        actor: &str,
        gt: &FrameGroundTruth,
        rig: &RenderRig,
        keypoints: Vec<Vec<Keypoint2D>>,
        bboxes: Vec<Option<BBox>>,
    ) -> Self {
        let cameras = rig
            .cameras
            .iter()
            .zip(keypoints)
            .zip(bboxes)
            .enumerate()
            .map(|(index, ((camera, keypoints), bbox))| CameraEntry {
                index,
                label: CAMERA_LABELS[index].to_string(),
                camera: *camera,
                image: image_name(gt.frame_id, index),
                mask: mask_name(gt.frame_id, index),
                keypoints,
                bbox,
            })
            .collect();
        Self {
            actor: actor.to_string(),
            frame_id: gt.frame_id,
            rig: RigRecord {
                height: rig.config.pass.height,
                radius: rig.config.pass.radius,
                pelvis_xy: rig.config.pelvis_xy,
            },
            joints_3d: gt.joints_3d,
            smpl: SmplParams {
                betas: gt.betas,
                pose: gt.pose,
            },
            cameras,
            provenance: None,
        }
    }

    pub fn set_dir(&self) -> PathBuf {
        set_dir(&self.actor, self.rig.height, self.rig.radius, self.frame_id)
    }
}

pub fn read_render_set_record(path: &Path) -> Result<RenderSetRecord, AnnotationError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| AnnotationError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), AnnotationError> {
    let text = serde_json::to_string_pretty(value).expect("records serialize");
    // Write-then-rename so readers never see a half-written document.
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, text + "\n").map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexImage {
    pub id: u64,
    /// Relative to the dataset root.
    pub file_name: String,
    pub mask_file: String,
    pub annotation_file: String,
    pub width: u32,
    pub height: u32,
    pub frame_id: u64,
    pub camera_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexAnnotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u64,
    /// `[u, v, vis]` per joint, flattened.
    pub keypoints: Vec<f64>,
    pub num_keypoints: usize,
    /// `[x, y, w, h]`, empty when the subject is not in view.
    pub bbox: Vec<f64>,
    /// Box area, used as the OKS scale.
    pub area: f64,
    pub iscrowd: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexCategory {
    pub id: u64,
    pub name: String,
    pub supercategory: String,
    pub keypoints: Vec<String>,
    /// 1-based joint index pairs.
    pub skeleton: Vec<[usize; 2]>,
}

/// COCO keypoint-style index over every image of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub images: Vec<IndexImage>,
    pub annotations: Vec<IndexAnnotation>,
    pub categories: Vec<IndexCategory>,
}

impl Default for DatasetIndex {
    fn default() -> Self {
        Self::new()
    }
}

impl DatasetIndex {
    pub fn new() -> Self {
        Self {
            images: Vec::new(),
            annotations: Vec::new(),
            categories: vec![IndexCategory {
                id: 1,
                name: "person".into(),
                supercategory: "person".into(),
                keypoints: JOINT_NAMES.iter().map(|s| s.to_string()).collect(),
                skeleton: bones().map(|(c, p)| [c + 1, p + 1]).collect(),
            }],
        }
    }

    pub fn load(root: &Path) -> Result<Self, AnnotationError> {
        let path = root.join(INDEX_FILE);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        serde_json::from_str(&text).map_err(|source| AnnotationError::Json { path, source })
    }

    pub fn save(&self, root: &Path) -> Result<(), AnnotationError> {
        write_json(&root.join(INDEX_FILE), self)
    }

    pub fn append_set(&mut self, record: &RenderSetRecord) {
        let dir = record.set_dir();
        let rel = |name: &str| dir.join(name).to_string_lossy().replace('\\', "/");
        for entry in &record.cameras {
            let image_id = self.images.len() as u64 + 1;
            self.images.push(IndexImage {
                id: image_id,
                file_name: rel(&entry.image),
                mask_file: rel(&entry.mask),
                annotation_file: rel(ANNOTATION_FILE),
                width: entry.camera.intrinsics.width,
                height: entry.camera.intrinsics.height,
                frame_id: record.frame_id,
                camera_index: entry.index,
            });
            let keypoints = entry
                .keypoints
                .iter()
                .flat_map(|k| [k.u, k.v, k.vis as f64])
                .collect();
            let (bbox, area) = match entry.bbox {
                Some(b) => (
                    vec![b.x as f64, b.y as f64, b.w as f64, b.h as f64],
                    b.area() as f64,
                ),
                None => (Vec::new(), 0.0),
            };
            self.annotations.push(IndexAnnotation {
                id: self.annotations.len() as u64 + 1,
                image_id,
                category_id: 1,
                keypoints,
                num_keypoints: entry.keypoints.iter().filter(|k| k.vis > 0).count(),
                bbox,
                area,
                iscrowd: 0,
            });
        }
    }
}

/// Files written for one render set, relative to the dataset root.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub files: Vec<PathBuf>,
}

/// Writes the nine images, nine masks (and optionally 16-bit alpha maps) plus
/// the annotation record of one set, then appends the set to `index` and saves
/// it. On failure, every file written for the set is removed again.
pub fn write_render_set(
    root: &Path,
    outputs: &[RenderOutput],
    record: &RenderSetRecord,
    index: &mut DatasetIndex,
    save_alpha: bool,
) -> Result<Manifest, AnnotationError> {
    if outputs.len() != RIG_SIZE || record.cameras.len() != RIG_SIZE {
        return Err(AnnotationError::SetSize {
            outputs: outputs.len(),
            cameras: record.cameras.len(),
        });
    }
    let rel_dir = record.set_dir();
    let dir = root.join(&rel_dir);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;

    let mut names: Vec<String> = Vec::new();
    for entry in &record.cameras {
        names.push(entry.image.clone());
        names.push(entry.mask.clone());
        if save_alpha {
            names.push(alpha_name(record.frame_id, entry.index));
        }
    }
    names.push(ANNOTATION_FILE.to_string());

    let images: Result<(), AnnotationError> = outputs
        .par_iter()
        .zip(record.cameras.par_iter())
        .try_for_each(|(out, entry)| {
            out.save_rgb(&dir.join(&entry.image))?;
            out.save_mask(&dir.join(&entry.mask))?;
            if save_alpha {
                out.save_alpha(&dir.join(alpha_name(record.frame_id, entry.index)))?;
            }
            Ok(())
        });
    let result = images.and_then(|()| write_json(&dir.join(ANNOTATION_FILE), record));
    if let Err(e) = result {
        for name in &names {
            let _ = fs::remove_file(dir.join(name));
        }
        return Err(e);
    }

    index.append_set(record);
    index.save(root)?;
    Ok(Manifest {
        files: names.into_iter().map(|n| rel_dir.join(n)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn directory_naming() {
        assert_eq!(set_dir("s1", 1.2, 1.0, 7), PathBuf::from("s1/1.2_1.0/000007"));
        assert_eq!(set_dir("s1", 1.0, 0.5, 123456), PathBuf::from("s1/1.0_0.5/123456"));
        assert_eq!(image_name(3, 0), "000003_00.png");
        assert_eq!(mask_name(3, 8), "000003_08_mask.png");
    }

    #[test]
    fn category_block_names_all_joints() {
        let idx = DatasetIndex::new();
        assert_eq!(idx.categories[0].keypoints.len(), 24);
        assert_eq!(idx.categories[0].keypoints[0], "pelvis");
        assert_eq!(idx.categories[0].skeleton.len(), 23);
    }
}
