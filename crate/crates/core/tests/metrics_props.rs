use nalgebra::{Rotation3, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use topview_core::annotation::skeleton::demo_sequence;
use topview_core::metrics::{
    ap_ar, mpjpe, oks, pa_mpjpe, procrustes_align, AlignMode, Detection2D, GroundTruth2D, OksParams,
    DEFAULT_SIGMA,
};
use topview_core::Keypoint2D;

type V3 = Vector3<f64>;

fn skeleton_mm() -> Vec<[f64; 3]> {
    demo_sequence().frames[1]
        .joints_3d
        .iter()
        .map(|j| [j[0] * 1000.0, j[1] * 1000.0, j[2] * 1000.0])
        .collect()
}

fn similarity(points: &[[f64; 3]], scale: f64, axis_angle: [f64; 3], t: [f64; 3]) -> Vec<[f64; 3]> {
    let r = Rotation3::from_scaled_axis(V3::from(axis_angle));
    points
        .iter()
        .map(|p| (scale * (r * V3::from(*p)) + V3::from(t)).into())
        .collect()
}

fn sse(a: &[[f64; 3]], b: &[[f64; 3]]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (V3::from(*p) - V3::from(*q)).norm_squared()).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn pa_mpjpe_ignores_similarity_of_the_prediction(
        noise_seed in any::<u64>(),
        scale in 0.2..5.0f64,
        aa in [-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64],
        t in [-2000.0..2000.0f64, -2000.0..2000.0f64, -2000.0..2000.0f64],
    ) {
        let gt = skeleton_mm();
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
        let pred: Vec<[f64; 3]> = gt
            .iter()
            .map(|p| [p[0] + rng.random_range(-30.0..30.0), p[1] + rng.random_range(-30.0..30.0), p[2] + rng.random_range(-30.0..30.0)])
            .collect();
        let base = pa_mpjpe(&pred, &gt, AlignMode::Similarity).unwrap();
        let moved = pa_mpjpe(&similarity(&pred, scale, aa, t), &gt, AlignMode::Similarity).unwrap();
        prop_assert!((base - moved).abs() < 1e-6, "{base} vs {moved}");
        prop_assert!(pa_mpjpe(&similarity(&gt, scale, aa, t), &gt, AlignMode::Similarity).unwrap() < 1e-6);
    }

    #[test]
    fn mpjpe_is_translation_equivariant(
        noise_seed in any::<u64>(),
        t in [-500.0..500.0f64, -500.0..500.0f64, -500.0..500.0f64],
    ) {
        let gt = skeleton_mm();
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
        let pred: Vec<[f64; 3]> = gt.iter().map(|p| [p[0] + rng.random_range(-50.0..50.0), p[1], p[2] - rng.random_range(-50.0..50.0)]).collect();
        let shift = |pts: &[[f64; 3]]| -> Vec<[f64; 3]> { pts.iter().map(|p| [p[0] + t[0], p[1] + t[1], p[2] + t[2]]).collect() };
        let a = mpjpe(&pred, &gt).unwrap();
        let b = mpjpe(&shift(&pred), &shift(&gt)).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn oks_never_increases_as_a_joint_moves_away(
        joint in 0usize..24,
        dir in 0.0..std::f64::consts::TAU,
        step in 0.0..200.0f64,
        extra in 0.0..200.0f64,
        area in 100.0..50000.0f64,
    ) {
        let gt: Vec<Keypoint2D> = (0..24)
            .map(|i| Keypoint2D { u: 40.0 + 7.0 * i as f64, v: 100.0 + (i % 4) as f64 * 9.0, vis: 2 })
            .collect();
        let det_at = |d: f64| Detection2D {
            image_id: 1,
            keypoints: gt
                .iter()
                .enumerate()
                .map(|(i, k)| if i == joint { [k.u + d * dir.cos(), k.v + d * dir.sin(), 1.0] } else { [k.u, k.v, 1.0] })
                .collect(),
            score: 1.0,
        };
        let sig = vec![DEFAULT_SIGMA; 24];
        let near = oks(&det_at(step), &gt, area, &sig).unwrap();
        let far = oks(&det_at(step + extra), &gt, area, &sig).unwrap();
        prop_assert!(far <= near);
        prop_assert!((0.0..=1.0).contains(&far));
    }

    #[test]
    fn ap_ar_stay_in_unit_interval(seed in any::<u64>(), n_gt in 1usize..6, n_det in 0usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gts: Vec<GroundTruth2D> = (0..n_gt)
            .map(|g| GroundTruth2D {
                image_id: (g % 3) as u64,
                keypoints: (0..24).map(|_| Keypoint2D { u: rng.random_range(0.0..256.0), v: rng.random_range(0.0..256.0), vis: rng.random_range(0..3) }).collect(),
                area: rng.random_range(0.0..5000.0),
            })
            .collect();
        let dets: Vec<Detection2D> = (0..n_det)
            .map(|d| {
                let g = &gts[d % n_gt];
                Detection2D {
                    image_id: g.image_id,
                    keypoints: g.keypoints.iter().map(|k| [k.u + rng.random_range(-20.0..20.0), k.v + rng.random_range(-20.0..20.0), 1.0]).collect(),
                    score: rng.random(),
                }
            })
            .collect();
        if let Ok(r) = ap_ar(&dets, &gts, &OksParams::coco(24)) {
            prop_assert!((0.0..=1.0).contains(&r.ap) && (0.0..=1.0).contains(&r.ar));
            for t in &r.per_threshold {
                prop_assert!((0.0..=1.0).contains(&t.ap) && (0.0..=1.0).contains(&t.ar));
            }
        }
    }
}

#[test]
fn uniform_offset_gives_exact_mpjpe() {
    let gt = skeleton_mm();
    let pred: Vec<[f64; 3]> = gt.iter().map(|p| [p[0] + 3.0, p[1], p[2] + 4.0]).collect();
    assert!((mpjpe(&pred, &gt).unwrap() - 5.0).abs() < 1e-12);
    assert!(pa_mpjpe(&pred, &gt, AlignMode::Similarity).unwrap() < 1e-6);
}

#[test]
fn rotation_about_pelvis() {
    let gt = skeleton_mm();
    let pelvis = V3::from(gt[0]);
    let r = Rotation3::from_axis_angle(&V3::x_axis(), std::f64::consts::FRAC_PI_2);
    let pred: Vec<[f64; 3]> = gt.iter().map(|p| (r * (V3::from(*p) - pelvis) + pelvis).into()).collect();
    let raw = mpjpe(&pred, &gt).unwrap();
    assert!(raw > 100.0);
    assert!(raw > pa_mpjpe(&pred, &gt, AlignMode::Similarity).unwrap());
}

/// One joint displaced by 24 mm. The aligned error is positive, the aligned
/// squared error is no worse than leaving the prediction in place, and no
/// similarity transform from a dense random search does better.
#[test]
fn single_displaced_joint_against_brute_force() {
    let gt = skeleton_mm();
    let mut pred = gt.clone();
    pred[20][0] += 24.0;
    assert!((mpjpe(&pred, &gt).unwrap() - 1.0).abs() < 1e-12);

    let sim = procrustes_align(&pred, &gt, AlignMode::Similarity).unwrap();
    let aligned: Vec<[f64; 3]> = pred.iter().map(|p| sim.apply(p)).collect();
    let best = sse(&aligned, &gt);
    assert!(best <= 24.0 * 24.0);
    let pa = pa_mpjpe(&pred, &gt, AlignMode::Similarity).unwrap();
    assert!(pa > 0.0);
    // mean <= RMS <= sqrt(576 / 24)
    assert!(pa <= (24.0f64 * 24.0 / 24.0).sqrt());

    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let mut found = f64::INFINITY;
    for _ in 0..200_000 {
        let scale = 1.0 + rng.random_range(-0.02..0.02);
        let aa = [rng.random_range(-0.02..0.02), rng.random_range(-0.02..0.02), rng.random_range(-0.02..0.02)];
        let t = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
        found = found.min(sse(&similarity(&pred, scale, aa, t), &gt));
    }
    assert!(best <= found + 1e-9, "closed form {best}, search {found}");
}

#[test]
fn pa_mpjpe_at_most_mpjpe_for_noisy_predictions() {
    let gt = skeleton_mm();
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    for _ in 0..1000 {
        let noise = rng.random_range(1.0..80.0);
        let pred: Vec<[f64; 3]> = gt
            .iter()
            .map(|p| {
                [
                    p[0] + rng.random_range(-noise..noise),
                    p[1] + rng.random_range(-noise..noise),
                    p[2] + rng.random_range(-noise..noise),
                ]
            })
            .collect();
        let pa = pa_mpjpe(&pred, &gt, AlignMode::Similarity).unwrap();
        assert!(pa <= mpjpe(&pred, &gt).unwrap());
    }
}
