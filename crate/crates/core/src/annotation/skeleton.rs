//! The 24-joint SMPL skeleton.

use serde::{Deserialize, Serialize};

use crate::camera::Vec3;

pub const NUM_JOINTS: usize = 24;
pub const NUM_BETAS: usize = 10;

pub type Joints = [[f64; 3]; NUM_JOINTS];

/// Joint names in SMPL order; the pelvis (root) is index 0.
pub const JOINT_NAMES: [&str; NUM_JOINTS] = [
    "pelvis",
    "left_hip",
    "right_hip",
    "spine1",
    "left_knee",
    "right_knee",
    "spine2",
    "left_ankle",
    "right_ankle",
    "spine3",
    "left_foot",
    "right_foot",
    "neck",
    "left_collar",
    "right_collar",
    "head",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hand",
    "right_hand",
];

/// Kinematic parent of each joint; `None` for the root.
pub const JOINT_PARENTS: [Option<usize>; NUM_JOINTS] = [
    None,
    Some(0),
    Some(0),
    Some(0),
    Some(1),
    Some(2),
    Some(3),
    Some(4),
    Some(5),
    Some(6),
    Some(7),
    Some(8),
    Some(9),
    Some(9),
    Some(9),
    Some(12),
    Some(13),
    Some(14),
    Some(16),
    Some(17),
    Some(18),
    Some(19),
    Some(20),
    Some(21),
];

pub const PELVIS: usize = 0;
pub const HEAD: usize = 15;
pub const NECK: usize = 12;

/// `(left, right)` joint index pairs.
pub const LEFT_RIGHT_PAIRS: [(usize, usize); 9] = [
    (1, 2),
    (4, 5),
    (7, 8),
    (10, 11),
    (13, 14),
    (16, 17),
    (18, 19),
    (20, 21),
    (22, 23),
];

/// Bones as `(child, parent)` pairs.
pub fn bones() -> impl Iterator<Item = (usize, usize)> {
    JOINT_PARENTS
        .iter()
        .enumerate()
        .filter_map(|(child, parent)| parent.map(|p| (child, p)))
}

/// One frame of motion-capture ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameGroundTruth {
    pub frame_id: u64,
    /// World-space joint positions, meters.
    pub joints_3d: Joints,
    /// SMPL shape coefficients, carried through unchanged.
    #[serde(default)]
    pub betas: [f64; NUM_BETAS],
    /// SMPL axis-angle pose, carried through unchanged.
    #[serde(default = "zero_pose")]
    pub pose: Joints,
}

fn zero_pose() -> Joints {
    [[0.0; 3]; NUM_JOINTS]
}

impl FrameGroundTruth {
    pub fn new(frame_id: u64, joints_3d: Joints) -> Self {
        Self {
            frame_id,
            joints_3d,
            betas: [0.0; NUM_BETAS],
            pose: zero_pose(),
        }
    }

    pub fn joint(&self, idx: usize) -> Vec3 {
        Vec3::from(self.joints_3d[idx])
    }

    pub fn pelvis_xy(&self) -> [f64; 2] {
        [self.joints_3d[PELVIS][0], self.joints_3d[PELVIS][1]]
    }

    pub fn is_finite(&self) -> bool {
        self.joints_3d
            .iter()
            .chain(self.pose.iter())
            .flatten()
            .chain(self.betas.iter())
            .all(|v| v.is_finite())
    }
}

/// A ground-truth sequence file: `{"actor": ..., "frames": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceGroundTruth {
    #[serde(default)]
    pub actor: Option<String>,
    pub frames: Vec<FrameGroundTruth>,
}

/// Rest skeleton with pelvis at the origin, `+z` up and the body facing `+y`.
/// `arm_drop` lowers both arms from the T-pose by that angle (radians).
pub fn standing_skeleton(arm_drop: f64) -> Joints {
    let mut j: Joints = [
        [0.0, 0.0, 0.0],
        [0.09, 0.0, -0.08],
        [-0.09, 0.0, -0.08],
        [0.0, -0.02, 0.11],
        [0.10, 0.0, -0.46],
        [-0.10, 0.0, -0.46],
        [0.0, -0.02, 0.24],
        [0.09, -0.02, -0.86],
        [-0.09, -0.02, -0.86],
        [0.0, -0.01, 0.30],
        [0.10, 0.10, -0.91],
        [-0.10, 0.10, -0.91],
        [0.0, 0.0, 0.50],
        [0.08, 0.0, 0.42],
        [-0.08, 0.0, 0.42],
        [0.0, 0.02, 0.62],
        [0.18, 0.0, 0.44],
        [-0.18, 0.0, 0.44],
        [0.44, 0.0, 0.44],
        [-0.44, 0.0, 0.44],
        [0.69, 0.0, 0.44],
        [-0.69, 0.0, 0.44],
        [0.77, 0.0, 0.44],
        [-0.77, 0.0, 0.44],
    ];
    let (s, c) = arm_drop.sin_cos();
    for (left, right) in [(18, 19), (20, 21), (22, 23)] {
        for (idx, shoulder) in [(left, 16), (right, 17)] {
            let dx = j[idx][0] - j[shoulder][0];
            let dz = j[idx][2] - j[shoulder][2];
            let sign = dx.signum();
            // Rotate downward in the shoulder's xz-plane.
            j[idx][0] = j[shoulder][0] + c * dx + sign * s * dz;
            j[idx][2] = j[shoulder][2] - sign * s * dx + c * dz;
        }
    }
    j
}

/// Translates every joint by `offset`.
pub fn translate(joints: &Joints, offset: Vec3) -> Joints {
    joints.map(|p| [p[0] + offset.x, p[1] + offset.y, p[2] + offset.z])
}

/// Two-frame demo sequence used by the bundled pipeline example.
pub fn demo_sequence() -> SequenceGroundTruth {
    let frames = (0..2u64)
        .map(|k| {
            let drop = 0.35 + 0.4 * k as f64;
            let offset = Vec3::new(0.06 * k as f64, -0.04 * k as f64, 0.0);
            let mut frame = FrameGroundTruth::new(k, translate(&standing_skeleton(drop), offset));
            frame.betas[0] = 0.25;
            frame.betas[1] = -0.1;
            frame.pose[18] = [0.0, 0.0, -drop];
            frame.pose[19] = [0.0, 0.0, drop];
            frame
        })
        .collect();
    SequenceGroundTruth {
        actor: Some("demo".into()),
        frames,
    }
}
