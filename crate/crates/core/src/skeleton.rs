//! Parametric human motion: per-frame states, a fixed 22-joint kinematic
//! skeleton, canonical/global joint positions and the inter-state distance
//! used by every alignment stage.
//!
//! The skeleton is a simplified stand-in for learned body models: alignment
//! only ever consumes 3D joint positions, so any fixed non-degenerate tree
//! works. Externally computed joints can be ingested through the joints-only
//! motion file variant and flow through unchanged.

use crate::error::{Error, Result};
use crate::geom::rodrigues;
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

pub const JOINT_COUNT: usize = 22;
pub const SHAPE_COUNT: usize = 16;

/// State of one tracked person in one frame: root orientation (axis-angle,
/// radians), 22 relative joint rotations (axis-angle, radians), 16 shape
/// coefficients and root position in scene units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanState {
    pub root_orientation: Vector3<f64>,
    pub body_pose: Vec<Vector3<f64>>,
    pub shape: Vec<f64>,
    pub root_position: Vector3<f64>,
}

impl HumanState {
    pub fn rest() -> Self {
        Self {
            root_orientation: Vector3::zeros(),
            body_pose: vec![Vector3::zeros(); JOINT_COUNT],
            shape: vec![0.0; SHAPE_COUNT],
            root_position: Vector3::zeros(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.body_pose.len() != JOINT_COUNT {
            return Err(Error::InputError(format!(
                "body_pose must have {JOINT_COUNT} joints, got {}",
                self.body_pose.len()
            )));
        }
        if self.shape.len() != SHAPE_COUNT {
            return Err(Error::InputError(format!(
                "shape must have {SHAPE_COUNT} coefficients, got {}",
                self.shape.len()
            )));
        }
        Ok(())
    }
}

/// Whether a joint set lives in the canonical (root-free) or global frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JointFrame {
    Canonical,
    Global,
}

/// 3D joint positions; 22 rows per human, concatenated over humans when a
/// frame tracks several people.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSet {
    pub kind: JointFrame,
    pub positions: Vec<Vector3<f64>>,
}

impl JointSet {
    /// Frobenius norm of the row-wise difference of two equally sized sets.
    pub fn distance(&self, other: &JointSet) -> f64 {
        debug_assert_eq!(self.positions.len(), other.positions.len());
        self.positions
            .iter()
            .zip(&other.positions)
            .map(|(a, b)| (a - b).norm_squared())
            .sum::<f64>()
            .sqrt()
    }
}

/// One frame of a motion sequence. Raw parametric states may be absent for
/// joints-only inputs (externally computed joints, resampled sequences).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub states: Option<Vec<HumanState>>,
    pub canonical: Option<JointSet>,
    pub global: Option<JointSet>,
}

/// Per-camera human motion as a time series. Frame timestamps are the
/// implicit integers `0..frames.len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionSequence {
    pub camera_id: String,
    pub fps: f64,
    pub humans: usize,
    pub frames: Vec<Frame>,
}

impl MotionSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.fps <= 0.0 {
            return Err(Error::InputError(format!(
                "fps must be positive, got {}",
                self.fps
            )));
        }
        for (t, frame) in self.frames.iter().enumerate() {
            let k = match (&frame.states, &frame.canonical) {
                (Some(states), _) => {
                    for s in states {
                        s.validate()?;
                    }
                    states.len()
                }
                (None, Some(canon)) => {
                    if canon.positions.len() % JOINT_COUNT != 0 {
                        return Err(Error::InputError(format!(
                            "frame {t}: joint count {} is not a multiple of {JOINT_COUNT}",
                            canon.positions.len()
                        )));
                    }
                    canon.positions.len() / JOINT_COUNT
                }
                (None, None) => {
                    return Err(Error::InputError(format!(
                        "frame {t} carries neither states nor joints"
                    )))
                }
            };
            if k != self.humans {
                return Err(Error::CorrespondenceMismatch {
                    left: self.humans,
                    right: k,
                });
            }
        }
        Ok(())
    }

    /// Populates the per-frame canonical and global joint caches.
    pub fn ensure_joints(&mut self, model: &SkeletonModel) {
        for frame in &mut self.frames {
            if frame.canonical.is_none() || frame.global.is_none() {
                let states = frame
                    .states
                    .as_ref()
                    .expect("frame without joints must carry states");
                frame.canonical = Some(concat_joints(states, model, JointFrame::Canonical));
                frame.global = Some(concat_joints(states, model, JointFrame::Global));
            }
        }
    }

    pub fn canonical(&self, t: usize) -> &JointSet {
        self.frames[t]
            .canonical
            .as_ref()
            .expect("canonical joints not computed; call ensure_joints first")
    }

    pub fn global(&self, t: usize) -> &JointSet {
        self.frames[t]
            .global
            .as_ref()
            .expect("global joints not computed; call ensure_joints first")
    }
}

/// Fixed-topology kinematic tree: parent indices, rest bone offsets and a
/// linear map from the leading shape coefficients to per-bone length scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonModel {
    pub parents: Vec<usize>,
    pub rest_offsets: Vec<Vector3<f64>>,
    /// Per-bone coefficient on shape channel 0 (overall size).
    pub size_weights: Vec<f64>,
    /// Per-bone coefficient on shape channel 1 (limb length).
    pub limb_weights: Vec<f64>,
}

// Joint order: 0 pelvis, 1-5 spine/neck/head, 6-9 left leg, 10-13 right leg,
// 14-17 left arm, 18-21 right arm.
pub const PELVIS: usize = 0;
pub const HEAD: usize = 5;
pub const LEFT_ANKLE: usize = 8;
pub const RIGHT_ANKLE: usize = 12;
pub const LEFT_WRIST: usize = 17;
pub const RIGHT_WRIST: usize = 21;

impl SkeletonModel {
    /// The rest skeleton shipped with the toolkit: symmetric humanoid,
    /// pelvis-rooted, z-up, scene units roughly meters.
    pub fn default_human() -> Self {
        let parents = vec![
            0, // 0 pelvis (root)
            0, // 1 spine1
            1, // 2 spine2
            2, // 3 chest
            3, // 4 neck
            4, // 5 head
            0, // 6 l_hip
            6, // 7 l_knee
            7, // 8 l_ankle
            8, // 9 l_foot
            0, // 10 r_hip
            10, // 11 r_knee
            11, // 12 r_ankle
            12, // 13 r_foot
            3, // 14 l_clavicle
            14, // 15 l_shoulder
            15, // 16 l_elbow
            16, // 17 l_wrist
            3, // 18 r_clavicle
            18, // 19 r_shoulder
            19, // 20 r_elbow
            20, // 21 r_wrist
        ];
        let v = Vector3::new;
        let rest_offsets = vec![
            v(0.0, 0.0, 0.0),     // pelvis
            v(0.0, 0.0, 0.10),    // spine1
            v(0.0, 0.0, 0.12),    // spine2
            v(0.0, 0.0, 0.13),    // chest
            v(0.0, 0.0, 0.12),    // neck
            v(0.0, 0.0, 0.12),    // head
            v(0.09, 0.0, -0.05),  // l_hip
            v(0.0, 0.0, -0.40),   // l_knee
            v(0.0, 0.0, -0.42),   // l_ankle
            v(0.0, 0.12, -0.05),  // l_foot
            v(-0.09, 0.0, -0.05), // r_hip
            v(0.0, 0.0, -0.40),   // r_knee
            v(0.0, 0.0, -0.42),   // r_ankle
            v(0.0, 0.12, -0.05),  // r_foot
            v(0.08, 0.0, 0.10),   // l_clavicle
            v(0.10, 0.0, 0.02),   // l_shoulder
            v(0.26, 0.0, 0.0),    // l_elbow
            v(0.25, 0.0, 0.0),    // l_wrist
            v(-0.08, 0.0, 0.10),  // r_clavicle
            v(-0.10, 0.0, 0.02),  // r_shoulder
            v(-0.26, 0.0, 0.0),   // r_elbow
            v(-0.25, 0.0, 0.0),   // r_wrist
        ];
        let mut size_weights = vec![0.12; JOINT_COUNT];
        size_weights[PELVIS] = 0.0;
        let mut limb_weights = vec![0.0; JOINT_COUNT];
        for j in [7, 8, 11, 12, 16, 17, 20, 21] {
            limb_weights[j] = 0.10;
        }
        Self {
            parents,
            rest_offsets,
            size_weights,
            limb_weights,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.parents.len() != JOINT_COUNT || self.rest_offsets.len() != JOINT_COUNT {
            return Err(Error::InputError("skeleton must have 22 joints".into()));
        }
        for (j, &p) in self.parents.iter().enumerate().skip(1) {
            if p >= j {
                return Err(Error::InputError(format!(
                    "joint {j} has parent {p}; tree must be topologically ordered"
                )));
            }
        }
        Ok(())
    }

    /// Bone length multiplier for joint `j` under shape coefficients `beta`.
    pub fn bone_scale(&self, j: usize, beta: &[f64]) -> f64 {
        let s = 1.0 + beta[0] * self.size_weights[j] + beta[1] * self.limb_weights[j];
        s.max(0.05)
    }
}

/// Forward kinematics with an explicit root pose. `canonical_joints` and
/// `global_joints` are the two entry points used by the pipeline.
fn forward_kinematics(
    state: &HumanState,
    model: &SkeletonModel,
    root_rotation: &Vector3<f64>,
    root_position: &Vector3<f64>,
) -> Vec<Vector3<f64>> {
    let mut rotations: Vec<Matrix3<f64>> = Vec::with_capacity(JOINT_COUNT);
    let mut positions: Vec<Vector3<f64>> = Vec::with_capacity(JOINT_COUNT);
    rotations.push(rodrigues(root_rotation) * rodrigues(&state.body_pose[0]));
    positions.push(*root_position);
    for j in 1..JOINT_COUNT {
        let parent = model.parents[j];
        let offset = model.rest_offsets[j] * model.bone_scale(j, &state.shape);
        positions.push(positions[parent] + rotations[parent] * offset);
        rotations.push(rotations[parent] * rodrigues(&state.body_pose[j]));
    }
    positions
}

/// Joint positions in the canonical frame: root rotation forced to zero and
/// root pinned at the origin, so the result is invariant to where and how the
/// person stands.
pub fn canonical_joints(state: &HumanState, model: &SkeletonModel) -> JointSet {
    JointSet {
        kind: JointFrame::Canonical,
        positions: forward_kinematics(state, model, &Vector3::zeros(), &Vector3::zeros()),
    }
}

/// Joint positions in the global frame: canonical skeleton rotated by the
/// root orientation and translated by the root position.
pub fn global_joints(state: &HumanState, model: &SkeletonModel) -> JointSet {
    JointSet {
        kind: JointFrame::Global,
        positions: forward_kinematics(state, model, &state.root_orientation, &state.root_position),
    }
}

fn concat_joints(states: &[HumanState], model: &SkeletonModel, kind: JointFrame) -> JointSet {
    let mut positions = Vec::with_capacity(states.len() * JOINT_COUNT);
    for s in states {
        let js = match kind {
            JointFrame::Canonical => canonical_joints(s, model),
            JointFrame::Global => global_joints(s, model),
        };
        positions.extend(js.positions);
    }
    JointSet { kind, positions }
}

/// Distance between two multi-person states: Frobenius norm of the difference
/// of the concatenated canonical joint sets.
pub fn state_distance(a: &[HumanState], b: &[HumanState], model: &SkeletonModel) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::CorrespondenceMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let ja = concat_joints(a, model, JointFrame::Canonical);
    let jb = concat_joints(b, model, JointFrame::Canonical);
    Ok(ja.distance(&jb))
}

/// Linearly resamples a sequence to a higher frame rate. Interpolation acts
/// on 3D joint positions, never on axis-angle parameters; the output carries
/// joints-only frames. Output frames landing exactly on a source timestamp
/// copy the source joints bit for bit.
pub fn resample_motion(
    seq: &MotionSequence,
    target_fps: f64,
    model: &SkeletonModel,
) -> Result<MotionSequence> {
    if seq.is_empty() {
        return Err(Error::EmptySequence(seq.camera_id.clone()));
    }
    if target_fps < seq.fps {
        return Err(Error::DownsampleUnsupported {
            source_fps: seq.fps,
            target_fps,
        });
    }
    let mut src = seq.clone();
    src.ensure_joints(model);

    let last = (src.len() - 1) as f64;
    let mut frames = Vec::new();
    let mut i = 0usize;
    loop {
        // source timestamp of output frame i; the product form keeps integer
        // ratios exact (e.g. 5 * 24 / 30 == 4.0 precisely)
        let t_src = (i as f64 * src.fps) / target_fps;
        if t_src > last + 1e-9 {
            break;
        }
        let t_src = t_src.min(last);
        let lo = t_src.floor() as usize;
        let frac = t_src - lo as f64;
        let frame = if frac == 0.0 {
            Frame {
                states: None,
                canonical: Some(src.canonical(lo).clone()),
                global: Some(src.global(lo).clone()),
            }
        } else {
            let hi = lo + 1;
            let lerp = |a: &JointSet, b: &JointSet| JointSet {
                kind: a.kind,
                positions: a
                    .positions
                    .iter()
                    .zip(&b.positions)
                    .map(|(p, q)| p * (1.0 - frac) + q * frac)
                    .collect(),
            };
            Frame {
                states: None,
                canonical: Some(lerp(src.canonical(lo), src.canonical(hi))),
                global: Some(lerp(src.global(lo), src.global(hi))),
            }
        };
        frames.push(frame);
        i += 1;
    }

    Ok(MotionSequence {
        camera_id: src.camera_id,
        fps: target_fps,
        humans: src.humans,
        frames,
    })
}
