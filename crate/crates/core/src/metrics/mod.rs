//! Pose-estimation metrics: MPJPE, Procrustes-aligned MPJPE and COCO-style
//! keypoint AP/AR.

mod coco;
mod pose3d;

pub use coco::{ap_ar, oks, ApAr, Detection2D, GroundTruth2D, OksParams, ThresholdScore, DEFAULT_SIGMA};
pub use pose3d::{mpjpe, pa_mpjpe, procrustes_align, AlignMode, Similarity};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("joint count mismatch: {pred} predicted vs {gt} ground truth")]
    LengthMismatch { pred: usize, gt: usize },
    #[error("no joints to evaluate")]
    Empty,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("ground truth joints are all coincident; alignment is undefined")]
    DegenerateGroundTruth,
    #[error("no ground-truth keypoint is labeled; OKS is undefined")]
    NoLabeledKeypoints,
    #[error("OKS needs a positive area, got {0}")]
    InvalidArea(f64),
    #[error("keypoint sigmas must be positive and match the joint count")]
    InvalidSigmas,
    #[error("no evaluable ground truth; AP/AR are undefined")]
    EmptyGroundTruth,
}
