use nalgebra::{Matrix3, Vector3};

use super::MetricsError;

type V3 = Vector3<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AlignMode {
    /// Rotation, translation and uniform scale.
    #[default]
    Similarity,
    /// Rotation and translation only.
    Rigid,
}

/// `x -> scale * rotation * x + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: V3,
}

impl Similarity {
    pub fn apply(&self, p: &[f64; 3]) -> [f64; 3] {
        (self.scale * self.rotation * V3::from(*p) + self.translation).into()
    }
}

fn check(pred: &[[f64; 3]], gt: &[[f64; 3]]) -> Result<(), MetricsError> {
    if pred.len() != gt.len() {
        return Err(MetricsError::LengthMismatch {
            pred: pred.len(),
            gt: gt.len(),
        });
    }
    if gt.is_empty() {
        return Err(MetricsError::Empty);
    }
    if !pred.iter().flatten().all(|v| v.is_finite()) {
        return Err(MetricsError::NonFinite("prediction"));
    }
    if !gt.iter().flatten().all(|v| v.is_finite()) {
        return Err(MetricsError::NonFinite("ground truth"));
    }
    Ok(())
}

/// Mean Euclidean distance between corresponding joints.
pub fn mpjpe(pred: &[[f64; 3]], gt: &[[f64; 3]]) -> Result<f64, MetricsError> {
    check(pred, gt)?;
    let total: f64 = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| (V3::from(*p) - V3::from(*g)).norm())
        .sum();
    Ok(total / gt.len() as f64)
}

fn centroid(points: &[[f64; 3]]) -> V3 {
    points.iter().map(|p| V3::from(*p)).sum::<V3>() / points.len() as f64
}

/// Least-squares alignment of `source` onto `target` (Umeyama). Reflections
/// are excluded by flipping the sign of the weakest singular direction.
pub fn procrustes_align(
    source: &[[f64; 3]],
    target: &[[f64; 3]],
    mode: AlignMode,
) -> Result<Similarity, MetricsError> {
    check(source, target)?;
    let n = source.len() as f64;
    let mu_s = centroid(source);
    let mu_t = centroid(target);

    let mut cov = Matrix3::zeros();
    let mut var_s = 0.0;
    let mut var_t = 0.0;
    for (s, t) in source.iter().zip(target) {
        let sc = V3::from(*s) - mu_s;
        let tc = V3::from(*t) - mu_t;
        cov += tc * sc.transpose();
        var_s += sc.norm_squared();
        var_t += tc.norm_squared();
    }
    cov /= n;
    var_s /= n;
    var_t /= n;
    if var_t <= f64::EPSILON * f64::EPSILON * mu_t.norm_squared().max(1.0) {
        return Err(MetricsError::DegenerateGroundTruth);
    }

    let svd = cov.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let mut signs = V3::new(1.0, 1.0, 1.0);
    if (u * v_t).determinant() < 0.0 {
        // Singular values are sorted descending; flip the smallest.
        let smallest = (0..3)
            .min_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]))
            .unwrap();
        signs[smallest] = -1.0;
    }
    let rotation = u * Matrix3::from_diagonal(&signs) * v_t;
    let scale = match mode {
        AlignMode::Rigid => 1.0,
        AlignMode::Similarity if var_s > 0.0 => svd.singular_values.dot(&signs) / var_s,
        AlignMode::Similarity => 0.0,
    };
    let translation = mu_t - scale * rotation * mu_s;
    Ok(Similarity {
        scale,
        rotation,
        translation,
    })
}

/// MPJPE after aligning `pred` onto `gt`.
pub fn pa_mpjpe(pred: &[[f64; 3]], gt: &[[f64; 3]], mode: AlignMode) -> Result<f64, MetricsError> {
    let sim = procrustes_align(pred, gt, mode)?;
    let aligned: Vec<[f64; 3]> = pred.iter().map(|p| sim.apply(p)).collect();
    mpjpe(&aligned, gt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Rotation3, Unit};

    fn cloud() -> Vec<[f64; 3]> {
        (0..24)
            .map(|i| {
                let f = i as f64;
                [100.0 * (0.7 * f).sin(), 80.0 * (1.3 * f).cos(), 40.0 * f - 300.0]
            })
            .collect()
    }

    #[test]
    fn mpjpe_identities() {
        let gt = cloud();
        assert_eq!(mpjpe(&gt, &gt).unwrap(), 0.0);
        let shifted: Vec<_> = gt.iter().map(|p| [p[0] + 3.0, p[1], p[2] + 4.0]).collect();
        assert!((mpjpe(&shifted, &gt).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn mpjpe_errors() {
        let gt = cloud();
        assert!(matches!(
            mpjpe(&gt[..23], &gt),
            Err(MetricsError::LengthMismatch { pred: 23, gt: 24 })
        ));
        let mut bad = gt.clone();
        bad[3][1] = f64::NAN;
        assert_eq!(mpjpe(&bad, &gt), Err(MetricsError::NonFinite("prediction")));
    }

    #[test]
    fn similarity_is_removed() {
        let gt = cloud();
        let r = Rotation3::from_axis_angle(&Unit::new_normalize(V3::new(0.2, -1.0, 0.4)), 1.1);
        let pred: Vec<_> = gt
            .iter()
            .map(|p| (1.7 * (r * V3::from(*p)) + V3::new(10.0, -4.0, 2.5)).into())
            .collect();
        assert!(pa_mpjpe(&pred, &gt, AlignMode::Similarity).unwrap() < 1e-6);
        // Rigid mode cannot undo the scale.
        assert!(pa_mpjpe(&pred, &gt, AlignMode::Rigid).unwrap() > 1.0);
    }

    #[test]
    fn rotation_about_pelvis_is_aligned_away() {
        let gt = cloud();
        let pelvis = V3::from(gt[0]);
        let r = Rotation3::from_axis_angle(&V3::z_axis(), std::f64::consts::FRAC_PI_2);
        let pred: Vec<_> = gt
            .iter()
            .map(|p| (r * (V3::from(*p) - pelvis) + pelvis).into())
            .collect();
        let raw = mpjpe(&pred, &gt).unwrap();
        let pa = pa_mpjpe(&pred, &gt, AlignMode::Similarity).unwrap();
        assert!(raw > 50.0);
        assert!(pa < raw);
    }

    #[test]
    fn reflection_is_not_used() {
        let gt = cloud();
        let mirrored: Vec<_> = gt.iter().map(|p| [-p[0], p[1], p[2]]).collect();
        let sim = procrustes_align(&mirrored, &gt, AlignMode::Similarity).unwrap();
        assert!((sim.rotation.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_ground_truth() {
        let gt = vec![[1.0, 2.0, 3.0]; 24];
        assert_eq!(
            pa_mpjpe(&cloud(), &gt, AlignMode::Similarity),
            Err(MetricsError::DegenerateGroundTruth)
        );
    }
}
