//! Camera pose initialization: SIM(3) transforms into the anchor camera's
//! frame via Procrustes analysis on time-aligned global joint positions, and
//! remapping of per-video camera trajectories through those transforms.

use crate::error::{Error, Result};
use crate::skeleton::{resample_motion, MotionSequence, SkeletonModel};
use crate::timesync::{AlignmentMatrices, GlobalOffsets};
use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

/// Similarity transform in the five-parameter Procrustes form. The composite
/// map is `x -> scale_dst * R * ((x - centroid_src) / scale_src) + centroid_dst`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTransform {
    pub scale_src: f64,
    pub scale_dst: f64,
    pub centroid_src: Vector3<f64>,
    pub centroid_dst: Vector3<f64>,
    pub rotation: Matrix3<f64>,
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        Self {
            scale_src: 1.0,
            scale_dst: 1.0,
            centroid_src: Vector3::zeros(),
            centroid_dst: Vector3::zeros(),
            rotation: Matrix3::identity(),
        }
    }

    /// Builds the transform `x -> scale * rotation * x + translation`.
    pub fn from_parts(scale: f64, rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            scale_src: 1.0,
            scale_dst: scale,
            centroid_src: Vector3::zeros(),
            centroid_dst: translation,
            rotation,
        }
    }

    pub fn apply(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.scale_dst * (self.rotation * ((x - self.centroid_src) / self.scale_src))
            + self.centroid_dst
    }

    /// Composite scale factor `scale_dst / scale_src`.
    pub fn scale(&self) -> f64 {
        self.scale_dst / self.scale_src
    }

    pub fn inverse(&self) -> SimilarityTransform {
        SimilarityTransform {
            scale_src: self.scale_dst,
            scale_dst: self.scale_src,
            centroid_src: self.centroid_dst,
            centroid_dst: self.centroid_src,
            rotation: self.rotation.transpose(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scale_src <= 0.0 || self.scale_dst <= 0.0 {
            return Err(Error::InputError("scales must be strictly positive".into()));
        }
        let r = self.rotation;
        if ((r * r.transpose()) - Matrix3::identity()).norm() > 1e-9
            || (r.determinant() - 1.0).abs() > 1e-9
        {
            return Err(Error::InputError(
                "rotation must be orthonormal with determinant +1".into(),
            ));
        }
        Ok(())
    }
}

/// Pinhole intrinsics, assumed known.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

/// World-to-camera extrinsics at one timestamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    pub timestamp: i64,
}

impl CameraPose {
    /// Camera center `o = -R^T tau`.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    /// Builds the pose from a rotation and camera center.
    pub fn from_center(rotation: Matrix3<f64>, center: Vector3<f64>, timestamp: i64) -> Self {
        let translation = -(rotation * center);
        Self {
            rotation,
            translation,
            timestamp,
        }
    }
}

/// Camera trajectory: a single pose for static cameras, one per frame for
/// moving cameras.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraTrajectory {
    pub camera_id: String,
    pub poses: Vec<CameraPose>,
    pub intrinsics: Intrinsics,
}

impl CameraTrajectory {
    pub fn is_static(&self) -> bool {
        self.poses.len() == 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.poses.is_empty() {
            return Err(Error::InputError(format!(
                "trajectory {} has no poses",
                self.camera_id
            )));
        }
        if !self.poses.windows(2).all(|w| w[0].timestamp < w[1].timestamp) {
            return Err(Error::InputError(format!(
                "trajectory {} timestamps must be strictly increasing",
                self.camera_id
            )));
        }
        Ok(())
    }
}

/// Least-squares similarity alignment of corresponded point sets: centroids,
/// root-mean-square scales and the rotation from the SVD of the normalized
/// cross-covariance. `det(R) = +1` is enforced by flipping the last singular
/// vector when the raw product would be a reflection.
pub fn procrustes(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> Result<SimilarityTransform> {
    if src.len() != dst.len() {
        return Err(Error::InputError(format!(
            "point sets must have equal cardinality ({} vs {})",
            src.len(),
            dst.len()
        )));
    }
    let n = src.len();
    if n < 3 {
        return Err(Error::DegenerateConfiguration(format!(
            "need at least 3 points, got {n}"
        )));
    }
    let nf = n as f64;
    let centroid_src = src.iter().sum::<Vector3<f64>>() / nf;
    let centroid_dst = dst.iter().sum::<Vector3<f64>>() / nf;
    let scale_src = (src.iter().map(|p| (p - centroid_src).norm_squared()).sum::<f64>() / nf).sqrt();
    let scale_dst = (dst.iter().map(|p| (p - centroid_dst).norm_squared()).sum::<f64>() / nf).sqrt();
    if scale_src <= 0.0 || scale_dst <= 0.0 {
        return Err(Error::DegenerateConfiguration(
            "point set has zero spread around its centroid".into(),
        ));
    }

    // cross covariance of the normalized sets, dst-major (Y X^T)
    let mut cross = Matrix3::zeros();
    for (x, y) in src.iter().zip(dst) {
        let xh = (x - centroid_src) / scale_src;
        let yh = (y - centroid_dst) / scale_dst;
        cross += yh * xh.transpose();
    }

    let svd = cross.svd(true, true);
    let u = svd.u.ok_or_else(|| Error::Numerical("SVD failed".into()))?;
    let v_t = svd.v_t.ok_or_else(|| Error::Numerical("SVD failed".into()))?;
    let sv = svd.singular_values;
    if sv[1] <= 1e-12 * sv[0].max(1e-300) {
        return Err(Error::DegenerateConfiguration(
            "cross-covariance rank < 2 (collinear points)".into(),
        ));
    }
    let mut rotation = u * v_t;
    if rotation.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        rotation = u * v_t;
    }

    Ok(SimilarityTransform {
        scale_src,
        scale_dst,
        centroid_src,
        centroid_dst,
        rotation,
    })
}

/// How the pose anchor camera is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AnchorMode {
    /// Camera minimizing the total pairwise DTW cost (deterministic default).
    MinTotalCost,
    /// Seeded random choice, for parity with randomized anchor selection.
    Random { seed: u64 },
    Fixed { index: usize },
}

pub fn select_anchor(mats: &AlignmentMatrices, mode: AnchorMode) -> usize {
    match mode {
        AnchorMode::MinTotalCost => {
            let totals = mats.total_costs();
            let mut best = 0;
            for (i, &c) in totals.iter().enumerate() {
                if c < totals[best] {
                    best = i;
                }
            }
            best
        }
        AnchorMode::Random { seed } => {
            use rand::Rng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            rng.random_range(0..mats.len())
        }
        AnchorMode::Fixed { index } => index,
    }
}

/// Estimates per-camera SIM(3) transforms into the anchor camera's frame by
/// stacking global joints of all humans over the time-aligned overlap with
/// the anchor and running Procrustes against the anchor's joints.
pub fn align_motions(
    seqs: &[MotionSequence],
    offsets: &GlobalOffsets,
    anchor: usize,
    model: &SkeletonModel,
) -> Result<Vec<SimilarityTransform>> {
    if seqs.len() != offsets.offsets.len() {
        return Err(Error::InputError(format!(
            "{} sequences but {} offsets",
            seqs.len(),
            offsets.offsets.len()
        )));
    }
    let common = seqs.iter().map(|s| s.fps).fold(f64::MIN, f64::max);
    let prepared: Vec<MotionSequence> = seqs
        .iter()
        .map(|s| resample_motion(s, common, model))
        .collect::<Result<_>>()?;

    let anchor_seq = &prepared[anchor];
    let mut transforms = Vec::with_capacity(prepared.len());
    for (i, seq) in prepared.iter().enumerate() {
        if i == anchor {
            transforms.push(SimilarityTransform::identity());
            continue;
        }
        // matched frames share a global timestamp: t_i - dt_i == t_a - dt_a
        let shift = offsets.offsets[i] - offsets.offsets[anchor];
        let mut src = Vec::new();
        let mut dst = Vec::new();
        for t_i in 0..seq.len() as i64 {
            let t_a = t_i - shift;
            if t_a < 0 || t_a >= anchor_seq.len() as i64 {
                continue;
            }
            src.extend_from_slice(&seq.global(t_i as usize).positions);
            dst.extend_from_slice(&anchor_seq.global(t_a as usize).positions);
        }
        if src.is_empty() {
            return Err(Error::NoOverlap { a: i, b: anchor });
        }
        transforms.push(procrustes(&src, &dst).map_err(|e| Error::PairFailed {
            a: i,
            b: anchor,
            source: Box::new(e),
        })?);
    }
    Ok(transforms)
}

/// Maps a camera trajectory through a similarity transform: camera centers go
/// through the composite map, rotations compose with the transform rotation's
/// inverse, translations are recomputed from the new centers.
pub fn apply_to_trajectory(
    traj: &CameraTrajectory,
    transform: &SimilarityTransform,
) -> CameraTrajectory {
    let poses = traj
        .poses
        .iter()
        .map(|p| {
            let center = transform.apply(&p.center());
            let rotation = p.rotation * transform.rotation.transpose();
            CameraPose::from_center(rotation, center, p.timestamp)
        })
        .collect();
    CameraTrajectory {
        camera_id: traj.camera_id.clone(),
        poses,
        intrinsics: traj.intrinsics,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::random_rotation;
    use crate::skeleton::{Frame, JointFrame, JointSet, JOINT_COUNT};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points<R: Rng>(rng: &mut R, n: usize) -> Vec<Vector3<f64>> {
        (0..n)
            .map(|_| Vector3::new(rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()) * 4.0)
            .collect()
    }

    fn random_sim3<R: Rng>(rng: &mut R) -> SimilarityTransform {
        let scale = 0.1 + rng.random::<f64>() * 9.9;
        let rotation = random_rotation(rng);
        let t = Vector3::new(rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()) * 10.0;
        SimilarityTransform::from_parts(scale, rotation, t)
    }

    #[test]
    fn identity_on_equal_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = random_points(&mut rng, 8);
        let t = procrustes(&pts, &pts).unwrap();
        t.validate().unwrap();
        assert!((t.rotation - Matrix3::identity()).norm() < 1e-12);
        assert!((t.scale_src - t.scale_dst).abs() < 1e-12);
        assert!((t.centroid_src - t.centroid_dst).norm() < 1e-12);
    }

    #[test]
    fn recovers_random_similarity_transforms() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let n = rng.random_range(4..30);
            let src = random_points(&mut rng, n);
            let applied = random_sim3(&mut rng);
            let dst: Vec<_> = src.iter().map(|p| applied.apply(p)).collect();
            let est = procrustes(&src, &dst).unwrap();
            est.validate().unwrap();
            for (s, d) in src.iter().zip(&dst) {
                let err = (est.apply(s) - d).norm() / d.norm().max(1.0);
                assert!(err < 1e-9, "residual {err}");
            }
            assert!((est.scale() - applied.scale()).abs() / applied.scale() < 1e-9);
        }
    }

    #[test]
    fn pure_translation_keeps_rotation_and_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let src = random_points(&mut rng, 10);
        let shift = Vector3::new(2.0, -1.0, 0.5);
        let dst: Vec<_> = src.iter().map(|p| p + shift).collect();
        let t = procrustes(&src, &dst).unwrap();
        assert!((t.rotation - Matrix3::identity()).norm() < 1e-9);
        assert!((t.scale_src - t.scale_dst).abs() < 1e-12);
        assert!((t.centroid_dst - t.centroid_src - shift).norm() < 1e-12);
    }

    #[test]
    fn mirrored_inputs_still_yield_proper_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let src = random_points(&mut rng, 12);
            let dst: Vec<_> = src
                .iter()
                .map(|p| Vector3::new(p.x, p.y, -p.z)) // reflection
                .collect();
            let t = procrustes(&src, &dst).unwrap();
            assert!(
                (t.rotation.determinant() - 1.0).abs() < 1e-9,
                "det = {}",
                t.rotation.determinant()
            );
        }
    }

    #[test]
    fn degenerate_configurations_error() {
        let p = Vector3::new(1.0, 2.0, 3.0);
        assert!(matches!(
            procrustes(&[p, p + Vector3::x()], &[p, p + Vector3::x()]),
            Err(Error::DegenerateConfiguration(_))
        ));
        // collinear
        let src: Vec<_> = (0..5).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect();
        assert!(matches!(
            procrustes(&src, &src),
            Err(Error::DegenerateConfiguration(_))
        ));
        // zero spread
        let same = vec![p; 4];
        assert!(matches!(
            procrustes(&same, &same),
            Err(Error::DegenerateConfiguration(_))
        ));
    }

    #[test]
    fn relabeling_points_identically_is_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let src = random_points(&mut rng, 9);
        let applied = random_sim3(&mut rng);
        let dst: Vec<_> = src.iter().map(|p| applied.apply(p)).collect();
        let t1 = procrustes(&src, &dst).unwrap();
        let perm = [3usize, 1, 4, 0, 8, 2, 7, 5, 6];
        let src_p: Vec<_> = perm.iter().map(|&i| src[i]).collect();
        let dst_p: Vec<_> = perm.iter().map(|&i| dst[i]).collect();
        let t2 = procrustes(&src_p, &dst_p).unwrap();
        for p in &src {
            assert!((t1.apply(p) - t2.apply(p)).norm() < 1e-9);
        }
    }

    /// Joints-only sequence whose global joints are `transform(world)` and
    /// whose canonical joints carry the transform's scale.
    fn mapped_sequence(
        world: &[Vec<Vector3<f64>>],
        canon: &[Vec<Vector3<f64>>],
        transform: &SimilarityTransform,
        id: &str,
    ) -> MotionSequence {
        let frames = world
            .iter()
            .zip(canon)
            .map(|(g, c)| Frame {
                states: None,
                canonical: Some(JointSet {
                    kind: JointFrame::Canonical,
                    positions: c.iter().map(|p| p * transform.scale()).collect(),
                }),
                global: Some(JointSet {
                    kind: JointFrame::Global,
                    positions: g.iter().map(|p| transform.apply(p)).collect(),
                }),
            })
            .collect();
        MotionSequence {
            camera_id: id.into(),
            fps: 30.0,
            humans: 1,
            frames,
        }
    }

    fn world_joint_motion(frames: usize) -> (Vec<Vec<Vector3<f64>>>, Vec<Vec<Vector3<f64>>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let base = random_points(&mut rng, JOINT_COUNT);
        let global: Vec<Vec<Vector3<f64>>> = (0..frames)
            .map(|t| {
                base.iter()
                    .enumerate()
                    .map(|(j, p)| {
                        p + Vector3::new(
                            (0.1 * t as f64 + j as f64).sin() * 0.3,
                            (0.07 * t as f64).cos() * 0.2,
                            0.01 * t as f64,
                        )
                    })
                    .collect()
            })
            .collect();
        let canon = global.clone();
        (global, canon)
    }

    #[test]
    fn align_motions_recovers_per_camera_transforms() {
        let model = SkeletonModel::default_human();
        let (world, canon) = world_joint_motion(30);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let transforms: Vec<_> = (0..4)
            .map(|i| {
                if i == 0 {
                    SimilarityTransform::identity()
                } else {
                    random_sim3(&mut rng)
                }
            })
            .collect();
        let seqs: Vec<_> = transforms
            .iter()
            .enumerate()
            .map(|(i, t)| mapped_sequence(&world, &canon, t, &format!("c{i}")))
            .collect();
        let offsets = GlobalOffsets {
            offsets: vec![0; 4],
            anchor: 0,
        };
        let est = align_motions(&seqs, &offsets, 0, &model).unwrap();
        assert_eq!(est[0], SimilarityTransform::identity());
        for i in 1..4 {
            // the recovered map must take camera-i joints onto the anchor's
            let mut rms = 0.0;
            let mut count = 0;
            for frame in &world {
                for p in frame {
                    let cam_i = transforms[i].apply(p);
                    let back = est[i].apply(&cam_i);
                    rms += (back - p).norm_squared();
                    count += 1;
                }
            }
            rms = (rms / count as f64).sqrt();
            assert!(rms < 1e-9, "camera {i} rms {rms}");
        }
    }

    #[test]
    fn align_motions_already_common_frame_gives_identities() {
        let model = SkeletonModel::default_human();
        let (world, canon) = world_joint_motion(10);
        let id = SimilarityTransform::identity();
        let seqs: Vec<_> = (0..3)
            .map(|i| mapped_sequence(&world, &canon, &id, &format!("c{i}")))
            .collect();
        let offsets = GlobalOffsets {
            offsets: vec![0; 3],
            anchor: 0,
        };
        let est = align_motions(&seqs, &offsets, 0, &model).unwrap();
        for t in &est {
            assert!((t.rotation - Matrix3::identity()).norm() < 1e-9);
            assert!((t.scale() - 1.0).abs() < 1e-9);
            for p in &world[0] {
                assert!((t.apply(p) - p).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn single_frame_overlap_is_enough() {
        let model = SkeletonModel::default_human();
        let (world, canon) = world_joint_motion(12);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let t1 = random_sim3(&mut rng);
        // camera b is delayed by 11 frames, so only its local frame 11
        // (holding world frame 0) overlaps with the anchor's frame 0
        let b_world: Vec<_> = (0..12).map(|t| world[(t + 1) % 12].clone()).collect();
        let b_canon: Vec<_> = (0..12).map(|t| canon[(t + 1) % 12].clone()).collect();
        let seqs = vec![
            mapped_sequence(&world, &canon, &SimilarityTransform::identity(), "a"),
            mapped_sequence(&b_world, &b_canon, &t1, "b"),
        ];
        let offsets = GlobalOffsets {
            offsets: vec![0, 11],
            anchor: 0,
        };
        let est = align_motions(&seqs, &offsets, 0, &model).unwrap();
        let p = &world[0][3];
        assert!((est[1].apply(&t1.apply(p)) - p).norm() < 1e-8);
    }

    #[test]
    fn disjoint_timelines_report_no_overlap() {
        let model = SkeletonModel::default_human();
        let (world, canon) = world_joint_motion(10);
        let id = SimilarityTransform::identity();
        let seqs = vec![
            mapped_sequence(&world, &canon, &id, "a"),
            mapped_sequence(&world, &canon, &id, "b"),
        ];
        let offsets = GlobalOffsets {
            offsets: vec![0, 100],
            anchor: 0,
        };
        assert!(matches!(
            align_motions(&seqs, &offsets, 0, &model),
            Err(Error::NoOverlap { a: 1, b: 0 })
        ));
    }

    fn random_trajectory<R: Rng>(rng: &mut R, poses: usize) -> CameraTrajectory {
        CameraTrajectory {
            camera_id: "cam".into(),
            poses: (0..poses)
                .map(|t| CameraPose::from_center(random_rotation(rng), random_points(rng, 1)[0], t as i64))
                .collect(),
            intrinsics: Intrinsics {
                fx: 40.0,
                fy: 40.0,
                cx: 16.0,
                cy: 16.0,
                width: 32,
                height: 32,
            },
        }
    }

    #[test]
    fn identity_transform_keeps_trajectory() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let traj = random_trajectory(&mut rng, 5);
        let out = apply_to_trajectory(&traj, &SimilarityTransform::identity());
        for (a, b) in traj.poses.iter().zip(&out.poses) {
            assert!((a.rotation - b.rotation).norm() < 1e-15);
            assert!((a.translation - b.translation).norm() < 1e-12);
            assert_eq!(a.timestamp, b.timestamp);
        }
    }

    #[test]
    fn transform_then_inverse_roundtrips() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..20 {
            let traj = random_trajectory(&mut rng, 3);
            let t = random_sim3(&mut rng);
            let back = apply_to_trajectory(&apply_to_trajectory(&traj, &t), &t.inverse());
            for (a, b) in traj.poses.iter().zip(&back.poses) {
                assert!((a.rotation - b.rotation).norm() < 1e-12);
                assert!((a.center() - b.center()).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn estimation_is_equivariant_under_pretransform() {
        let model = SkeletonModel::default_human();
        let (world, canon) = world_joint_motion(20);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t1 = random_sim3(&mut rng);
        let g = random_sim3(&mut rng);
        let id = SimilarityTransform::identity();
        let base = vec![
            mapped_sequence(&world, &canon, &id, "a"),
            mapped_sequence(&world, &canon, &t1, "b"),
        ];
        // pre-transform camera b's data by g
        let composed = SimilarityTransform::from_parts(
            g.scale() * t1.scale(),
            g.rotation * t1.rotation,
            g.scale() * (g.rotation * t1.centroid_dst) + g.centroid_dst,
        );
        let pre = vec![
            base[0].clone(),
            mapped_sequence(&world, &canon, &composed, "b"),
        ];
        let offsets = GlobalOffsets {
            offsets: vec![0, 0],
            anchor: 0,
        };
        let est_base = align_motions(&base, &offsets, 0, &model).unwrap();
        let est_pre = align_motions(&pre, &offsets, 0, &model).unwrap();
        // T_pre == T_base . g^{-1}: applying it to g-mapped data matches
        for p in world.iter().flatten().take(40) {
            let x = t1.apply(p);
            let lhs = est_pre[1].apply(&g.apply(&x));
            let rhs = est_base[1].apply(&x);
            assert!((lhs - rhs).norm() < 1e-7, "{lhs:?} vs {rhs:?}");
        }
    }
}
