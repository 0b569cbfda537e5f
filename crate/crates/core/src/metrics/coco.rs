use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::annotation::Keypoint2D;

/// Per-keypoint OKS sigma used for every SMPL joint (the COCO shoulder/hip
/// value).
pub const DEFAULT_SIGMA: f64 = 0.079;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Detection2D {
    pub image_id: u64,
    /// `[u, v, confidence]` per joint.
    pub keypoints: Vec<[f64; 3]>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth2D {
    pub image_id: u64,
    pub keypoints: Vec<Keypoint2D>,
    /// Object scale for OKS, px^2.
    pub area: f64,
}

impl GroundTruth2D {
    fn evaluable(&self) -> bool {
        self.area > 0.0 && self.keypoints.iter().any(|k| k.vis > 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OksParams {
    pub sigmas: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub max_dets: usize,
}

impl OksParams {
    /// Uniform sigmas, thresholds 0.50:0.05:0.95 and 20 detections per image.
    pub fn coco(num_joints: usize) -> Self {
        Self {
            sigmas: vec![DEFAULT_SIGMA; num_joints],
            thresholds: (0..10).map(|i| 0.5 + 0.05 * i as f64).collect(),
            max_dets: 20,
        }
    }
}

/// Object keypoint similarity: mean of `exp(-d^2 / (2 area k^2))`, `k = 2 sigma`,
/// over the labeled (`vis > 0`) ground-truth joints.
pub fn oks(det: &Detection2D, gt: &[Keypoint2D], area: f64, sigmas: &[f64]) -> Result<f64, MetricsError> {
    if det.keypoints.len() != gt.len() {
        return Err(MetricsError::LengthMismatch {
            pred: det.keypoints.len(),
            gt: gt.len(),
        });
    }
    if sigmas.len() != gt.len() || !sigmas.iter().all(|s| *s > 0.0) {
        return Err(MetricsError::InvalidSigmas);
    }
    if !(area > 0.0 && area.is_finite()) {
        return Err(MetricsError::InvalidArea(area));
    }
    if det.keypoints.iter().flatten().any(|v| v.is_nan()) {
        return Err(MetricsError::NonFinite("detection"));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for ((d, g), sigma) in det.keypoints.iter().zip(gt).zip(sigmas) {
        if g.vis == 0 {
            continue;
        }
        let k = 2.0 * sigma;
        let d2 = (d[0] - g.u).powi(2) + (d[1] - g.v).powi(2);
        sum += (-d2 / (2.0 * area * k * k)).exp();
        count += 1;
    }
    if count == 0 {
        return Err(MetricsError::NoLabeledKeypoints);
    }
    Ok(sum / count as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdScore {
    pub threshold: f64,
    pub ap: f64,
    pub ar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApAr {
    pub ap: f64,
    pub ar: f64,
    pub per_threshold: Vec<ThresholdScore>,
}

/// Greedy matching and 101-point interpolated AP, following the COCO keypoint
/// evaluator without crowd or area-range handling. Ground truths with no
/// labeled joints or zero area are left out.
pub fn ap_ar(dets: &[Detection2D], gts: &[GroundTruth2D], params: &OksParams) -> Result<ApAr, MetricsError> {
    let gts: Vec<&GroundTruth2D> = gts.iter().filter(|g| g.evaluable()).collect();
    if gts.is_empty() {
        return Err(MetricsError::EmptyGroundTruth);
    }

    let mut image_ids: Vec<u64> = gts
        .iter()
        .map(|g| g.image_id)
        .chain(dets.iter().map(|d| d.image_id))
        .collect();
    image_ids.sort_unstable();
    image_ids.dedup();

    // Per image: kept detections (score-sorted, capped) and their OKS rows.
    struct ImageEval<'a> {
        dets: Vec<&'a Detection2D>,
        ious: Vec<Vec<f64>>,
        n_gt: usize,
    }
    let mut images = Vec::with_capacity(image_ids.len());
    for &id in &image_ids {
        let img_gts: Vec<&GroundTruth2D> = gts.iter().copied().filter(|g| g.image_id == id).collect();
        let mut img_dets: Vec<&Detection2D> = dets.iter().filter(|d| d.image_id == id).collect();
        img_dets.sort_by(|a, b| b.score.total_cmp(&a.score));
        img_dets.truncate(params.max_dets);
        let ious = img_dets
            .iter()
            .map(|d| {
                img_gts
                    .iter()
                    .map(|g| oks(d, &g.keypoints, g.area, &params.sigmas))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        images.push(ImageEval {
            dets: img_dets,
            ious,
            n_gt: img_gts.len(),
        });
    }

    let n_gt = gts.len();
    let mut per_threshold = Vec::with_capacity(params.thresholds.len());
    for &thr in &params.thresholds {
        // (score, is_tp) for all kept detections.
        let mut scored: Vec<(f64, bool)> = Vec::new();
        for img in &images {
            let mut gt_taken = vec![false; img.n_gt];
            for (d, det) in img.dets.iter().enumerate() {
                let mut best = thr.min(1.0 - 1e-10);
                let mut matched = None;
                for g in 0..img.n_gt {
                    if gt_taken[g] || img.ious[d][g] < best {
                        continue;
                    }
                    best = img.ious[d][g];
                    matched = Some(g);
                }
                if let Some(g) = matched {
                    gt_taken[g] = true;
                }
                scored.push((det.score, matched.is_some()));
            }
        }
        // Stable sort keeps image order among equal scores.
        scored.sort_by(|a, b| b.0.total_cmp(&a.0));

        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut recall = Vec::with_capacity(scored.len());
        let mut precision = Vec::with_capacity(scored.len());
        for &(_, is_tp) in &scored {
            if is_tp {
                tp += 1;
            } else {
                fp += 1;
            }
            recall.push(tp as f64 / n_gt as f64);
            precision.push(tp as f64 / (tp + fp) as f64);
        }
        for i in (1..precision.len()).rev() {
            if precision[i] > precision[i - 1] {
                precision[i - 1] = precision[i];
            }
        }
        let ap = (0..=100)
            .map(|r| {
                let level = r as f64 / 100.0;
                let idx = recall.partition_point(|&x| x < level);
                precision.get(idx).copied().unwrap_or(0.0)
            })
            .sum::<f64>()
            / 101.0;
        let ar = recall.last().copied().unwrap_or(0.0);
        per_threshold.push(ThresholdScore { threshold: thr, ap, ar });
    }

    let n = per_threshold.len().max(1) as f64;
    Ok(ApAr {
        ap: per_threshold.iter().map(|t| t.ap).sum::<f64>() / n,
        ar: per_threshold.iter().map(|t| t.ar).sum::<f64>() / n,
        per_threshold,
    })
}
