//! Fully ground-truthed synthetic datasets: articulated skeleton motion,
//! static camera rigs with randomized per-video SIM(3) frames, integer time
//! offsets with a pairwise-overlap guarantee, per-channel noise models,
//! mixed frame rates and renderable blob scenes for end-to-end refinement
//! tests.

mod blobs;
mod motion;

pub use blobs::{look_at, ring_rig, Blob, BlobScene};
pub use motion::MotionModel;

use crate::error::{Error, Result};
use crate::geom::{axis_angle_from_matrix, random_rotation, rodrigues};
use crate::io::{self, GroundTruth};
use crate::posealign::{apply_to_trajectory, SimilarityTransform};
use crate::skeleton::{global_joints, Frame, HumanState, MotionSequence, SkeletonModel};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Per-channel Gaussian noise levels.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// On stored 3D joint positions (joints-only files), scene units.
    pub joint_sigma: f64,
    /// On body pose axis-angle components, radians.
    pub pose_sigma: f64,
    /// On shape coefficients, unitless.
    pub shape_sigma: f64,
}

/// Noise presets matching the robustness protocol levels.
pub const ROBUSTNESS_SIGMAS: [f64; 5] = [0.01, 0.02, 0.05, 0.1, 0.2];

/// Dataset generation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub n_cameras: usize,
    pub n_humans: usize,
    /// Frames per video.
    pub frames: usize,
    pub fps: f64,
    /// Five cameras at 24 fps, the rest at `fps`.
    pub mixed_fps: bool,
    /// Offsets are sampled uniformly in `[-max_offset, max_offset]` frames
    /// of the reference (highest) rate.
    pub max_offset: i64,
    /// Minimum pairwise overlap, frames of the reference rate.
    pub min_overlap: usize,
    pub noise: NoiseSpec,
    /// Randomizes each video's world frame by a SIM(3).
    pub sim3_randomize: bool,
    pub sim3_scale_range: (f64, f64),
    /// Images are rendered when nonzero.
    pub image_size: usize,
    pub seed: u64,
}

impl SceneSpec {
    /// Offset-recovery scale: many cameras, long videos, wide offsets.
    pub fn sync_preset(seed: u64) -> Self {
        Self {
            n_cameras: 10,
            n_humans: 1,
            frames: 270,
            fps: 30.0,
            mixed_fps: false,
            max_offset: 120,
            min_overlap: 150,
            noise: NoiseSpec::default(),
            sim3_randomize: true,
            sim3_scale_range: (1.0, 1.0),
            image_size: 0,
            seed,
        }
    }

    /// Desk-scale refinement: renderable blob scene, short videos.
    pub fn desk_preset(seed: u64) -> Self {
        Self {
            n_cameras: 8,
            n_humans: 1,
            frames: 120,
            fps: 30.0,
            mixed_fps: false,
            max_offset: 10,
            min_overlap: 100,
            noise: NoiseSpec::default(),
            sim3_randomize: true,
            sim3_scale_range: (1.0, 1.0),
            image_size: 32,
            seed,
        }
    }

    pub fn fps_per_camera(&self) -> Vec<f64> {
        (0..self.n_cameras)
            .map(|i| {
                if self.mixed_fps && i < 5 {
                    24.0
                } else {
                    self.fps
                }
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_cameras == 0 || self.frames < 2 || self.n_humans == 0 {
            return Err(Error::SpecError(
                "need at least one camera, one human and two frames".into(),
            ));
        }
        if self.fps <= 0.0 {
            return Err(Error::SpecError("fps must be positive".into()));
        }
        if self.sim3_scale_range.0 <= 0.0 || self.sim3_scale_range.1 < self.sim3_scale_range.0 {
            return Err(Error::SpecError("invalid sim3 scale range".into()));
        }
        if self.mixed_fps && self.fps < 24.0 {
            return Err(Error::SpecError(
                "mixed fps preset expects a base rate of at least 24".into(),
            ));
        }
        Ok(())
    }
}

/// A generated dataset on disk plus its in-memory ground truth.
#[derive(Debug, Clone)]
pub struct GeneratedDataset {
    pub dir: PathBuf,
    pub camera_ids: Vec<String>,
    pub ground_truth: GroundTruth,
}

fn sample_offsets(spec: &SceneSpec, fps: &[f64], fps_ref: f64, rng: &mut ChaCha8Rng) -> Result<Vec<i64>> {
    // start/end of each video on the world timeline, in seconds, for the
    // pairwise overlap check
    let feasible = |offsets: &[i64]| -> bool {
        for i in 0..offsets.len() {
            for j in (i + 1)..offsets.len() {
                let start_i = -(offsets[i] as f64) / fps_ref;
                let start_j = -(offsets[j] as f64) / fps_ref;
                let end_i = start_i + (spec.frames as f64 - 1.0) / fps[i];
                let end_j = start_j + (spec.frames as f64 - 1.0) / fps[j];
                let overlap = (end_i.min(end_j) - start_i.max(start_j)) * fps_ref;
                if overlap < spec.min_overlap as f64 {
                    return false;
                }
            }
        }
        true
    };
    for _ in 0..10_000 {
        let offsets: Vec<i64> = (0..spec.n_cameras)
            .map(|_| rng.random_range(-spec.max_offset..=spec.max_offset))
            .collect();
        if feasible(&offsets) {
            return Ok(offsets);
        }
    }
    Err(Error::SpecError(format!(
        "could not satisfy the minimum pairwise overlap of {} frames with max offset {} and {} frames per video",
        spec.min_overlap, spec.max_offset, spec.frames
    )))
}

fn random_sim3(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> SimilarityTransform {
    if !spec.sim3_randomize {
        return SimilarityTransform::identity();
    }
    let (lo, hi) = spec.sim3_scale_range;
    let scale = lo + rng.random::<f64>() * (hi - lo);
    let rotation = random_rotation(rng);
    let translation = Vector3::new(
        rng.random::<f64>() * 4.0 - 2.0,
        rng.random::<f64>() * 4.0 - 2.0,
        rng.random::<f64>() * 4.0 - 2.0,
    );
    SimilarityTransform::from_parts(scale, rotation, translation)
}

/// Re-expresses a world-frame state in a video frame related to the world by
/// `sim3` (video = sim3(world)). The uniform scale folds into the leading
/// shape coefficients, which scale every bone length by the same factor.
fn state_to_video(state: &HumanState, sim3: &SimilarityTransform) -> HumanState {
    let s = sim3.scale();
    let rot = sim3.rotation;
    let mut out = state.clone();
    out.root_orientation =
        axis_angle_from_matrix(&(rot * rodrigues(&state.root_orientation)));
    out.root_position = sim3.apply(&state.root_position);
    out.shape[0] = (s * (1.0 + 0.12 * state.shape[0]) - 1.0) / 0.12;
    out.shape[1] = s * state.shape[1];
    out
}

/// Generates the dataset: motion files (parametric states, per-video frame),
/// camera files, optional blob-scene image sequences and the ground-truth
/// file. Deterministic for a given spec.
pub fn generate(spec: &SceneSpec, dir: &Path) -> Result<GeneratedDataset> {
    spec.validate()?;
    let fps = spec.fps_per_camera();
    let fps_ref = fps.iter().cloned().fold(f64::MIN, f64::max);

    let mut offset_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    offset_rng.set_stream(1);
    let offsets = sample_offsets(spec, &fps, fps_ref, &mut offset_rng)?;

    let mut sim3_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    sim3_rng.set_stream(2);
    let sim3: Vec<SimilarityTransform> =
        (0..spec.n_cameras).map(|_| random_sim3(spec, &mut sim3_rng)).collect();

    let motion = MotionModel::sample(spec.seed.wrapping_add(0x6d6f74), spec.n_humans);
    let world_rig = ring_rig(
        spec.n_cameras,
        if spec.image_size > 0 { spec.image_size } else { 32 },
        Vector3::new(0.0, 0.0, 1.0),
        3.5,
    );
    let camera_ids: Vec<String> = world_rig.iter().map(|c| c.camera_id.clone()).collect();

    // motion + camera files, expressed in each video's frame
    for i in 0..spec.n_cameras {
        let frames: Vec<Frame> = (0..spec.frames)
            .map(|t| {
                let tau = t as f64 / fps[i] - offsets[i] as f64 / fps_ref;
                let states = (0..spec.n_humans)
                    .map(|k| state_to_video(&motion.state_at(k, tau), &sim3[i]))
                    .collect();
                Frame {
                    states: Some(states),
                    canonical: None,
                    global: None,
                }
            })
            .collect();
        let seq = MotionSequence {
            camera_id: camera_ids[i].clone(),
            fps: fps[i],
            humans: spec.n_humans,
            frames,
        };
        io::save_motion(
            &io::motions_dir(dir).join(format!("{}.json", camera_ids[i])),
            &seq,
        )?;

        let video_traj = apply_to_trajectory(&world_rig[i], &sim3[i]);
        io::save_trajectory(
            &io::cameras_dir(dir).join(format!("{}.json", camera_ids[i])),
            &video_traj,
        )?;
    }

    // blob-scene images, rendered in the world frame (projection is invariant
    // to the per-video similarity)
    if spec.image_size > 0 {
        let model = SkeletonModel::default_human();
        let scene = BlobScene::standard(spec.n_humans);
        let jobs: Vec<(usize, usize)> = (0..spec.n_cameras)
            .flat_map(|i| (0..spec.frames).map(move |t| (i, t)))
            .collect();
        jobs.par_iter().try_for_each(|&(i, t)| -> Result<()> {
            let tau = t as f64 / fps[i] - offsets[i] as f64 / fps_ref;
            let centers = blob_centers(&scene, &motion, &model, tau);
            let image =
                scene.render_image(&world_rig[i].poses[0], &world_rig[i].intrinsics, &centers);
            io::write_ppm(&io::image_path(dir, &camera_ids[i], t), &image)
        })?;
    }

    let ground_truth = GroundTruth {
        offsets,
        fps_ref,
        sim3,
        world_trajectories: world_rig,
    };
    io::save_ground_truth(&io::gt_path(dir), &ground_truth, &camera_ids)?;

    Ok(GeneratedDataset {
        dir: dir.to_path_buf(),
        camera_ids,
        ground_truth,
    })
}

/// World-space centers of every blob at one instant (concatenated over
/// humans, matching `BlobScene::standard`'s blob order).
pub fn blob_centers(
    scene: &BlobScene,
    motion: &MotionModel,
    model: &SkeletonModel,
    tau: f64,
) -> Vec<Vector3<f64>> {
    let per_human = scene.blobs.len() / motion.n_humans();
    let mut centers = Vec::with_capacity(scene.blobs.len());
    for k in 0..motion.n_humans() {
        let joints = global_joints(&motion.state_at(k, tau), model);
        for b in 0..per_human {
            centers.push(joints.positions[scene.blobs[k * per_human + b].joint]);
        }
    }
    centers
}

/// Adds zero-mean Gaussian noise to the selected channels of the sequences,
/// in place. Joint caches are invalidated for frames whose states changed.
pub fn perturb_sequences(seqs: &mut [MotionSequence], noise: &NoiseSpec, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(3);
    let normal = |sigma: f64, rng: &mut ChaCha8Rng| -> f64 {
        if sigma == 0.0 {
            0.0
        } else {
            sigma * rng.sample::<f64, _>(StandardNormal)
        }
    };
    for seq in seqs {
        for frame in &mut seq.frames {
            if let Some(states) = &mut frame.states {
                let mut touched = false;
                for state in states {
                    if noise.pose_sigma > 0.0 {
                        touched = true;
                        for joint in &mut state.body_pose {
                            for c in 0..3 {
                                joint[c] += normal(noise.pose_sigma, &mut rng);
                            }
                        }
                    }
                    if noise.shape_sigma > 0.0 {
                        touched = true;
                        for b in &mut state.shape {
                            *b += normal(noise.shape_sigma, &mut rng);
                        }
                    }
                }
                if touched {
                    frame.canonical = None;
                    frame.global = None;
                }
            }
            if noise.joint_sigma > 0.0 {
                for joints in [frame.canonical.as_mut(), frame.global.as_mut()]
                    .into_iter()
                    .flatten()
                {
                    for p in &mut joints.positions {
                        for c in 0..3 {
                            p[c] += normal(noise.joint_sigma, &mut rng);
                        }
                    }
                }
            }
        }
    }
}

/// Copies a dataset to `output` with noised motion files; cameras, images
/// and ground truth pass through byte-identically.
pub fn perturb_dataset(input: &Path, output: &Path, noise: &NoiseSpec, seed: u64) -> Result<()> {
    let mut motions = io::load_all_motions(input)?;
    perturb_sequences(&mut motions, noise, seed);
    for seq in &motions {
        io::save_motion(
            &io::motions_dir(output).join(format!("{}.json", seq.camera_id)),
            &seq.clone(),
        )?;
    }
    for cam in io::load_all_cameras(input)? {
        io::save_trajectory(
            &io::cameras_dir(output).join(format!("{}.json", cam.camera_id)),
            &cam,
        )?;
    }
    let copy = |rel: &Path| -> Result<()> {
        let src = input.join(rel);
        let dst = output.join(rel);
        if let Some(parent) = dst.parent() {
            std::fs::create_dir_all(parent).map_err(|source| Error::Write {
                path: dst.clone(),
                source,
            })?;
        }
        std::fs::copy(&src, &dst).map_err(|source| Error::Write {
            path: dst.clone(),
            source,
        })?;
        Ok(())
    };
    copy(Path::new("gt.json"))?;
    let images_root = input.join("images");
    if images_root.is_dir() {
        for cam_entry in std::fs::read_dir(&images_root).map_err(|source| Error::Read {
            path: images_root.clone(),
            source,
        })? {
            let cam_dir = cam_entry
                .map_err(|source| Error::Read {
                    path: images_root.clone(),
                    source,
                })?
                .path();
            if !cam_dir.is_dir() {
                continue;
            }
            for img in std::fs::read_dir(&cam_dir).map_err(|source| Error::Read {
                path: cam_dir.clone(),
                source,
            })? {
                let img = img
                    .map_err(|source| Error::Read {
                        path: cam_dir.clone(),
                        source,
                    })?
                    .path();
                let rel = img.strip_prefix(input).expect("image under dataset root");
                copy(rel)?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::canonical_joints;
    use std::fs;

    fn tmpdir(name: &str) -> PathBuf {
        let dir =
            std::env::temp_dir().join(format!("motioncal_synth_{name}_{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    fn small_spec(seed: u64) -> SceneSpec {
        SceneSpec {
            n_cameras: 3,
            n_humans: 1,
            frames: 24,
            fps: 30.0,
            mixed_fps: false,
            max_offset: 4,
            min_overlap: 16,
            noise: NoiseSpec::default(),
            sim3_randomize: true,
            sim3_scale_range: (0.8, 1.25),
            image_size: 0,
            seed,
        }
    }

    #[test]
    fn degenerate_spec_gives_identical_motion_files() {
        let dir = tmpdir("degenerate");
        let mut spec = small_spec(1);
        spec.sim3_randomize = false;
        spec.max_offset = 0;
        generate(&spec, &dir).unwrap();
        let m0 = fs::read(io::motions_dir(&dir).join("cam00.json")).unwrap();
        for i in 1..3 {
            let mi = fs::read(io::motions_dir(&dir).join(format!("cam{i:02}.json"))).unwrap();
            // identical except for the camera_id field
            let s0 = String::from_utf8(m0.clone()).unwrap().replace("cam00", "camXX");
            let si = String::from_utf8(mi).unwrap().replace(&format!("cam{i:02}"), "camXX");
            assert_eq!(s0, si);
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let d1 = tmpdir("det1");
        let d2 = tmpdir("det2");
        let mut spec = small_spec(7);
        spec.image_size = 12;
        spec.frames = 4;
        spec.min_overlap = 2;
        spec.max_offset = 1;
        generate(&spec, &d1).unwrap();
        generate(&spec, &d2).unwrap();
        for rel in [
            "motions/cam00.json",
            "motions/cam02.json",
            "cameras/cam01.json",
            "gt.json",
            "images/cam00/000003.ppm",
            "images/cam02/000000.ppm",
        ] {
            let a = fs::read(d1.join(rel)).unwrap();
            let b = fs::read(d2.join(rel)).unwrap();
            assert_eq!(a, b, "{rel}");
        }
    }

    #[test]
    fn offsets_respect_the_paper_bound() {
        let dir = tmpdir("offsets");
        let spec = SceneSpec::sync_preset(3);
        let out = generate(&spec, &dir).unwrap();
        for (i, &oi) in out.ground_truth.offsets.iter().enumerate() {
            assert!(oi.abs() <= 120);
            for &oj in &out.ground_truth.offsets[i + 1..] {
                assert!((oi - oj).abs() <= 120, "pairwise offset exceeds bound");
            }
        }
    }

    #[test]
    fn unsatisfiable_overlap_errors() {
        let dir = tmpdir("unsat");
        let mut spec = small_spec(1);
        spec.min_overlap = 500; // longer than the videos themselves
        assert!(matches!(generate(&spec, &dir), Err(Error::SpecError(_))));
    }

    #[test]
    fn video_data_is_world_data_through_sim3_and_offset() {
        let dir = tmpdir("consistency");
        let spec = small_spec(11);
        let out = generate(&spec, &dir).unwrap();
        let model = SkeletonModel::default_human();
        let motion = MotionModel::sample(spec.seed.wrapping_add(0x6d6f74), spec.n_humans);
        let motions = io::load_all_motions(&dir).unwrap();
        let gt = &out.ground_truth;
        for (i, seq) in motions.iter().enumerate() {
            for t in (0..spec.frames).step_by(7) {
                let tau = t as f64 / spec.fps - gt.offsets[i] as f64 / gt.fps_ref;
                let world = global_joints(&motion.state_at(0, tau), &model);
                let stored = global_joints(&seq.frames[t].states.as_ref().unwrap()[0], &model);
                for (w, s) in world.positions.iter().zip(&stored.positions) {
                    let mapped = gt.sim3[i].apply(w);
                    let scale = mapped.norm().max(1.0);
                    assert!(
                        (mapped - s).norm() / scale < 1e-12,
                        "camera {i} frame {t}: {mapped:?} vs {s:?}"
                    );
                }
                // canonical joints see only the scale
                let wc = canonical_joints(&motion.state_at(0, tau), &model);
                let sc = canonical_joints(&seq.frames[t].states.as_ref().unwrap()[0], &model);
                let s_factor = gt.sim3[i].scale();
                for (w, s) in wc.positions.iter().zip(&sc.positions) {
                    assert!((w * s_factor - s).norm() < 1e-12 * s_factor.max(1.0));
                }
            }
        }
    }

    #[test]
    fn zero_noise_perturbation_is_bit_identical() {
        let src = tmpdir("noise_src");
        let dst = tmpdir("noise_dst");
        let mut spec = small_spec(5);
        spec.image_size = 8;
        spec.frames = 3;
        spec.min_overlap = 2;
        spec.max_offset = 0;
        generate(&spec, &src).unwrap();
        perturb_dataset(&src, &dst, &NoiseSpec::default(), 1).unwrap();
        for rel in ["motions/cam00.json", "gt.json", "images/cam01/000002.ppm"] {
            assert_eq!(
                fs::read(src.join(rel)).unwrap(),
                fs::read(dst.join(rel)).unwrap(),
                "{rel}"
            );
        }
    }

    #[test]
    fn pose_noise_has_the_configured_std() {
        let dir = tmpdir("noise_std");
        let mut spec = small_spec(13);
        spec.frames = 160; // 160 frames * 22 joints * 3 = 10560 samples
        generate(&spec, &dir).unwrap();
        let clean = io::load_all_motions(&dir).unwrap();
        let mut noised = clean.clone();
        let noise = NoiseSpec {
            joint_sigma: 0.0,
            pose_sigma: 0.05,
            shape_sigma: 0.0,
        };
        perturb_sequences(&mut noised[..1], &noise, 99);
        let mut deviations = Vec::new();
        for (cf, nf) in clean[0].frames.iter().zip(&noised[0].frames) {
            let cs = &cf.states.as_ref().unwrap()[0];
            let ns = &nf.states.as_ref().unwrap()[0];
            for (a, b) in cs.body_pose.iter().zip(&ns.body_pose) {
                for c in 0..3 {
                    deviations.push(b[c] - a[c]);
                }
            }
        }
        assert!(deviations.len() >= 10_000);
        let mean = deviations.iter().sum::<f64>() / deviations.len() as f64;
        let var = deviations.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>()
            / deviations.len() as f64;
        let std = var.sqrt();
        assert!(
            (std - 0.05).abs() / 0.05 < 0.10,
            "empirical std {std} vs sigma 0.05"
        );
    }
}
