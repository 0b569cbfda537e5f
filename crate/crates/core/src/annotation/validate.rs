//! Dataset conformance checks.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use super::record::{AnnotationError, DatasetIndex, RenderSetRecord, ANNOTATION_FILE, INDEX_FILE};
use super::{bbox_from_mask, reprojection_error, vis, NUM_JOINTS};
use crate::camera::Vec3;
use crate::render::Mask;
use crate::rig::RIG_SIZE;

/// Allowed distance between a stored keypoint and a fresh projection.
pub const REPROJECTION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    MissingFile,
    Schema,
    Invariant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub path: PathBuf,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub root: PathBuf,
    pub sets_checked: usize,
    pub images_checked: usize,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, kind: ViolationKind, path: &Path, message: impl Into<String>) {
        self.violations.push(Violation {
            kind,
            path: path.to_path_buf(),
            message: message.into(),
        });
    }
}

/// Walks a dataset root and checks every render-set record, the files it
/// references and the dataset index. Problems are reported, never raised; the
/// only error is a missing root.
pub fn validate_dataset(root: &Path) -> Result<ValidationReport, AnnotationError> {
    if !root.is_dir() {
        return Err(AnnotationError::MissingRoot(root.to_path_buf()));
    }
    let mut report = ValidationReport {
        root: root.to_path_buf(),
        ..Default::default()
    };

    let mut record_paths: Vec<PathBuf> = WalkDir::new(root)
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file() && e.file_name() == ANNOTATION_FILE)
        .map(|e| e.into_path())
        .collect();
    record_paths.sort();

    let mut record_rel = BTreeSet::new();
    for path in &record_paths {
        report.sets_checked += 1;
        if let Ok(rel) = path.strip_prefix(root) {
            record_rel.insert(rel.to_string_lossy().replace('\\', "/"));
        }
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => {
                report.push(ViolationKind::MissingFile, path, e.to_string());
                continue;
            }
        };
        match serde_json::from_str::<RenderSetRecord>(&text) {
            Ok(record) => check_record(&record, path, &mut report),
            Err(e) => report.push(ViolationKind::Schema, path, e.to_string()),
        }
    }

    check_index(root, &record_rel, &mut report);
    Ok(report)
}

fn check_record(record: &RenderSetRecord, path: &Path, report: &mut ValidationReport) {
    let dir = path.parent().unwrap_or(Path::new("."));
    if record.cameras.len() != RIG_SIZE {
        report.push(
            ViolationKind::Schema,
            path,
            format!("expected {RIG_SIZE} cameras, found {}", record.cameras.len()),
        );
    }
    if !record.joints_3d.iter().flatten().all(|v| v.is_finite()) {
        report.push(ViolationKind::Schema, path, "non-finite joint coordinate");
        return;
    }
    for (pos, entry) in record.cameras.iter().enumerate() {
        report.images_checked += 1;
        let cam = &entry.camera;
        let intr = &cam.intrinsics;
        let at = |what: &str| format!("camera {pos} {what}");
        if entry.index != pos {
            report.push(ViolationKind::Schema, path, at(&format!("has index {}", entry.index)));
        }
        if entry.keypoints.len() != NUM_JOINTS {
            report.push(
                ViolationKind::Schema,
                path,
                at(&format!("has {} keypoints, expected {NUM_JOINTS}", entry.keypoints.len())),
            );
        }
        for (j, (kp, joint)) in entry.keypoints.iter().zip(record.joints_3d.iter()).enumerate() {
            if kp.vis > vis::VISIBLE {
                report.push(ViolationKind::Schema, path, at(&format!("joint {j} has vis flag {}", kp.vis)));
                continue;
            }
            let joint = Vec3::from(*joint);
            match cam.project(&joint) {
                Ok(p) => {
                    let err = reprojection_error(&joint, kp, cam).unwrap_or(f64::INFINITY);
                    if err > REPROJECTION_TOLERANCE {
                        report.push(
                            ViolationKind::Invariant,
                            path,
                            at(&format!("joint {j} reprojects {err:e} px from its annotation")),
                        );
                    } else if kp.vis != vis::OUTSIDE && !p.valid {
                        report.push(
                            ViolationKind::Invariant,
                            path,
                            at(&format!("joint {j} is flagged in view but lies outside the image or circle")),
                        );
                    } else if kp.vis == vis::OUTSIDE && p.valid {
                        report.push(
                            ViolationKind::Invariant,
                            path,
                            at(&format!("joint {j} is in view but flagged vis=0")),
                        );
                    }
                }
                Err(_) if kp.vis != vis::OUTSIDE => report.push(
                    ViolationKind::Invariant,
                    path,
                    at(&format!("joint {j} coincides with the camera but is flagged in view")),
                ),
                Err(_) => {}
            }
        }
        if let Some(b) = entry.bbox {
            if !b.fits(intr.width, intr.height) {
                report.push(ViolationKind::Invariant, path, at(&format!("bbox {b:?} outside the image")));
            }
        }

        let image = dir.join(&entry.image);
        if !image.is_file() {
            report.push(ViolationKind::MissingFile, &image, "image file missing");
        }
        let mask_path = dir.join(&entry.mask);
        match image::open(&mask_path) {
            Ok(img) => {
                let mask = Mask::from_image(&img.to_luma8());
                if (mask.width, mask.height) != (intr.width, intr.height) {
                    report.push(ViolationKind::Invariant, &mask_path, "mask size differs from camera");
                } else if bbox_from_mask(&mask) != entry.bbox {
                    report.push(ViolationKind::Invariant, path, at("bbox disagrees with its mask"));
                }
            }
            Err(_) if !mask_path.is_file() => {
                report.push(ViolationKind::MissingFile, &mask_path, "mask file missing")
            }
            Err(e) => report.push(ViolationKind::Schema, &mask_path, e.to_string()),
        }
    }
}

fn check_index(root: &Path, records: &BTreeSet<String>, report: &mut ValidationReport) {
    let path = root.join(INDEX_FILE);
    if !path.is_file() {
        report.push(ViolationKind::MissingFile, &path, "dataset index missing");
        return;
    }
    let index = match DatasetIndex::load(root) {
        Ok(i) => i,
        Err(e) => {
            report.push(ViolationKind::Schema, &path, e.to_string());
            return;
        }
    };
    let expected = RIG_SIZE * records.len();
    if index.images.len() != expected || index.annotations.len() != expected {
        report.push(
            ViolationKind::Invariant,
            &path,
            format!(
                "index lists {} images and {} annotations, expected {expected} each for {} sets",
                index.images.len(),
                index.annotations.len(),
                records.len()
            ),
        );
    }
    let ids: BTreeSet<u64> = index.images.iter().map(|i| i.id).collect();
    for image in &index.images {
        if !records.contains(&image.annotation_file) {
            report.push(
                ViolationKind::Invariant,
                &path,
                format!("image {} references unknown record {}", image.id, image.annotation_file),
            );
        }
    }
    for ann in &index.annotations {
        if !ids.contains(&ann.image_id) {
            report.push(
                ViolationKind::Invariant,
                &path,
                format!("annotation {} references unknown image {}", ann.id, ann.image_id),
            );
        }
        if ann.keypoints.len() != 3 * NUM_JOINTS {
            report.push(
                ViolationKind::Schema,
                &path,
                format!("annotation {} has {} keypoint values", ann.id, ann.keypoints.len()),
            );
        }
    }
}
