//! Pipeline orchestration: composable subcommands wiring the file formats
//! between the calibration stages.

pub mod config;

pub use config::PipelineConfig;

use motioncal::error::Error as CoreError;
use motioncal::evalkit::{self, CalibReport, ImageMetrics};
use motioncal::io::{self, Checkpoint, GroundTruth, Image, RefinedFile};
use motioncal::planefield::{Aabb, Decoders, PlaneField, RenderConfig, TrainSchedule};
use motioncal::posealign::{
    align_motions, apply_to_trajectory, select_anchor, AnchorMode, CameraPose, CameraTrajectory,
};
use motioncal::refine::{
    train, AblationMode, CameraView, RefineDataset, TimeMap, TrainConfig, TrainResult,
};
use motioncal::skeleton::{global_joints, MotionSequence, SkeletonModel};
use motioncal::synth::{self, NoiseSpec, ROBUSTNESS_SIGMAS};
use motioncal::timesync::{build_matrices_windowed, global_align, GlobalOffsets};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Process exit codes: 0 success, 2 configuration error, 3 data error,
/// 4 numerical failure.
pub fn exit_code(err: &CoreError) -> i32 {
    match err {
        CoreError::SpecError(_) => 2,
        CoreError::Numerical(_) => 4,
        CoreError::PairFailed { source, .. } => exit_code(source),
        _ => 3,
    }
}

fn camera_ids(motions: &[MotionSequence]) -> Vec<String> {
    motions.iter().map(|m| m.camera_id.clone()).collect()
}

/// Generates the synthetic dataset (and optionally the robustness-noise
/// variants next to it).
pub fn cmd_simulate(cfg: &PipelineConfig) -> Result<(), CoreError> {
    let mut scene = cfg.simulate.scene.clone();
    scene.seed = cfg.seed;
    synth::generate(&scene, &cfg.dataset_dir)?;
    let has_noise = cfg.simulate.noise.pose_sigma > 0.0
        || cfg.simulate.noise.shape_sigma > 0.0
        || cfg.simulate.noise.joint_sigma > 0.0;
    if has_noise {
        let noised = cfg.dataset_dir.with_extension("noised");
        synth::perturb_dataset(&cfg.dataset_dir, &noised, &cfg.simulate.noise, cfg.seed)?;
    }
    if cfg.simulate.table2_variants {
        for sigma in ROBUSTNESS_SIGMAS {
            let noise = NoiseSpec {
                joint_sigma: 0.0,
                pose_sigma: sigma,
                shape_sigma: sigma,
            };
            let out = cfg
                .dataset_dir
                .with_file_name(format!(
                    "{}_sigma_{sigma}",
                    cfg.dataset_dir
                        .file_name()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_else(|| "dataset".into())
                ));
            synth::perturb_dataset(&cfg.dataset_dir, &out, &noise, cfg.seed)?;
        }
    }
    Ok(())
}

pub fn offsets_path(cfg: &PipelineConfig) -> PathBuf {
    cfg.output_dir.join("offsets.json")
}

pub fn poses_path(cfg: &PipelineConfig) -> PathBuf {
    cfg.output_dir.join("poses.json")
}

pub fn sim3_path(cfg: &PipelineConfig) -> PathBuf {
    cfg.output_dir.join("sim3.json")
}

pub fn refined_path(cfg: &PipelineConfig) -> PathBuf {
    cfg.output_dir.join("refined.json")
}

pub fn metrics_path(cfg: &PipelineConfig) -> PathBuf {
    cfg.output_dir.join("metrics.jsonl")
}

pub fn checkpoint_path(cfg: &PipelineConfig) -> PathBuf {
    cfg.output_dir.join("checkpoint.json")
}

pub fn report_path(cfg: &PipelineConfig) -> PathBuf {
    cfg.output_dir.join("report.json")
}

/// Pairwise DTW over all cameras plus greedy global alignment; writes
/// `offsets.json` with the matrices and the common (upsampled) frame rate.
pub fn cmd_sync(cfg: &PipelineConfig) -> Result<(), CoreError> {
    let motions = io::load_all_motions(&cfg.dataset_dir)?;
    if motions.len() < 2 {
        return Err(CoreError::InputError(format!(
            "need at least 2 cameras, found {}",
            motions.len()
        )));
    }
    let model = SkeletonModel::default_human();
    let mats = build_matrices_windowed(&motions, &model, cfg.sync.dtw_window)?;
    let offsets = global_align(&mats)?;
    let common_fps = motions.iter().map(|m| m.fps).fold(f64::MIN, f64::max);
    io::save_offsets(&offsets_path(cfg), &offsets, &mats, common_fps)
}

fn anchor_mode(cfg: &PipelineConfig) -> Result<AnchorMode, CoreError> {
    match cfg.pose.anchor_mode.as_str() {
        "min_cost" => Ok(AnchorMode::MinTotalCost),
        "random" => Ok(AnchorMode::Random {
            seed: cfg.pose.anchor_seed,
        }),
        "fixed" => Ok(AnchorMode::Fixed {
            index: cfg.pose.anchor_index,
        }),
        other => Err(CoreError::SpecError(format!(
            "unknown anchor mode '{other}'"
        ))),
    }
}

/// Estimates per-camera SIM(3) transforms into the anchor frame and maps the
/// per-video camera trajectories through them; writes `poses.json` and
/// `sim3.json`.
pub fn cmd_pose(cfg: &PipelineConfig) -> Result<(), CoreError> {
    let motions = io::load_all_motions(&cfg.dataset_dir)?;
    let cameras = io::load_all_cameras(&cfg.dataset_dir)?;
    let (offsets, mats, _) = io::load_offsets(&offsets_path(cfg))?;
    let model = SkeletonModel::default_human();
    let anchor = select_anchor(&mats, anchor_mode(cfg)?);
    let offsets = offsets.reanchored(anchor);
    let transforms = align_motions(&motions, &offsets, anchor, &model)?;
    let aligned: Vec<CameraTrajectory> = cameras
        .iter()
        .zip(&transforms)
        .map(|(c, t)| apply_to_trajectory(c, t))
        .collect();
    io::save_poses(&poses_path(cfg), &aligned)?;
    let entries: Vec<(String, motioncal::posealign::SimilarityTransform)> = camera_ids(&motions)
        .into_iter()
        .zip(transforms)
        .collect();
    io::save_sim3(&sim3_path(cfg), &entries)
}

/// Scene box, depth range and background estimated from the aligned motion
/// and the camera rig.
pub fn auto_render_setup(
    motions: &[MotionSequence],
    transforms: &[motioncal::posealign::SimilarityTransform],
    poses: &[CameraPose],
    sample_images: &[&Image],
) -> (Aabb, f64, f64, Vector3<f64>) {
    let model = SkeletonModel::default_human();
    let mut lo = Vector3::new(f64::MAX, f64::MAX, f64::MAX);
    let mut hi = Vector3::new(f64::MIN, f64::MIN, f64::MIN);
    for (seq, transform) in motions.iter().zip(transforms) {
        for frame in seq.frames.iter().step_by(5) {
            let joints = match (&frame.global, &frame.states) {
                (Some(j), _) => j.clone(),
                (None, Some(states)) => {
                    let mut positions = Vec::new();
                    for s in states {
                        positions.extend(global_joints(s, &model).positions);
                    }
                    motioncal::skeleton::JointSet {
                        kind: motioncal::skeleton::JointFrame::Global,
                        positions,
                    }
                }
                _ => continue,
            };
            for p in &joints.positions {
                let q = transform.apply(p);
                lo = lo.inf(&q);
                hi = hi.sup(&q);
            }
        }
    }
    let margin = Vector3::new(0.45, 0.45, 0.45);
    let bounds = Aabb::new(lo - margin, hi + margin);
    let center = bounds.center();
    // tight depth window: cameras to the content sphere
    let r_content = 0.5 * (hi - lo).norm() + 0.45;
    let d_min = poses
        .iter()
        .map(|p| (p.center() - center).norm())
        .fold(f64::MAX, f64::min);
    let d_max = poses
        .iter()
        .map(|p| (p.center() - center).norm())
        .fold(0.0f64, f64::max);
    let near = (d_min - r_content).max(0.05);
    let far = d_max + r_content;

    // background from image corners
    let mut bg = Vector3::zeros();
    let mut count = 0.0;
    for img in sample_images {
        for (x, y) in [
            (0, 0),
            (img.width - 1, 0),
            (0, img.height - 1),
            (img.width - 1, img.height - 1),
        ] {
            bg += img.pixel(x, y);
            count += 1.0;
        }
    }
    if count > 0.0 {
        bg /= count;
    }
    (bounds, near, far, bg)
}

fn load_view(
    dataset: &Path,
    traj: &CameraTrajectory,
    frames: usize,
) -> Result<CameraView, CoreError> {
    let mut images = Vec::with_capacity(frames);
    for t in 0..frames {
        let path = io::image_path(dataset, &traj.camera_id, t);
        if !path.is_file() {
            // the sampler only draws frames that exist, so a truncated video
            // just shortens this camera's timeline
            eprintln!(
                "warning: {} missing frame {t}; using the first {} frames",
                traj.camera_id,
                images.len()
            );
            break;
        }
        images.push(io::read_ppm(&path)?);
    }
    if images.is_empty() {
        return Err(CoreError::InputError(format!(
            "no images for camera {} under {}",
            traj.camera_id,
            dataset.display()
        )));
    }
    Ok(CameraView {
        camera_id: traj.camera_id.clone(),
        base_pose: traj.poses[0].clone(),
        intrinsics: traj.intrinsics,
        images,
        moving: !traj.is_static(),
    })
}

fn train_config_from(cfg: &PipelineConfig, bounds: Aabb, near: f64, far: f64, bg: Vector3<f64>) -> TrainConfig {
    let r = &cfg.refine;
    TrainConfig {
        schedule: TrainSchedule {
            total_steps: r.total_steps,
            coarse_to_fine_end: r.coarse_to_fine_end,
            s0: if r.curriculum { r.s0 } else { 0 },
            s1: if r.curriculum { r.s1 } else { 0 },
            levels: r.spatial_res.len(),
            reg_decay_start: r.reg_decay_start,
            reg_decay_end: r.reg_decay_end,
            coarse_to_fine_enabled: r.coarse_to_fine,
        },
        render: RenderConfig {
            samples_per_ray: r.samples_per_ray,
            near,
            far,
            background: bg,
            jitter: true,
        },
        bounds,
        spatial_res: r.spatial_res.clone(),
        time_res: r.time_res,
        feature_dim: r.feature_dim,
        hidden: r.hidden,
        f_hat_dim: r.f_hat_dim,
        n_freq: r.n_freq,
        batch_rays: r.batch_rays,
        chunk_rays: r.chunk_rays,
        lr_planes: r.lr_planes,
        lr_decoders: r.lr_decoders,
        lr_pose: r.lr_pose,
        lr_offset: r.lr_offset,
        reg_weights: r.reg_weights,
        density_reg_samples: r.density_reg_samples,
        lr_decay_start: r.lr_decay_start,
        lr_decay_end: r.lr_decay_end,
        lr_floor: r.lr_floor,
        log_every: r.log_every,
        snapshot_every: r.snapshot_every,
        seed: cfg.seed,
    }
}

/// Everything `cmd_refine` assembles before training; shared with eval.
pub struct RefineInputs {
    pub dataset: RefineDataset,
    pub offsets: GlobalOffsets,
    pub config: TrainConfig,
    pub gt: Option<GroundTruth>,
    pub heldout: Option<(usize, CameraView)>,
}

pub fn assemble_refine_inputs(cfg: &PipelineConfig) -> Result<RefineInputs, CoreError> {
    let motions = io::load_all_motions(&cfg.dataset_dir)?;
    let (offsets, mats, _) = io::load_offsets(&offsets_path(cfg))?;
    let anchor = select_anchor(&mats, anchor_mode(cfg)?);
    let mut offsets = offsets.reanchored(anchor);
    let aligned = io::load_poses(&poses_path(cfg))?;
    let sim3: Vec<_> = io::load_sim3(&sim3_path(cfg))?
        .into_iter()
        .map(|(_, t)| t)
        .collect();
    let frames = motions.iter().map(|m| m.len()).min().unwrap_or(0);
    let mut views = Vec::new();
    let mut heldout = None;
    for (i, traj) in aligned.iter().enumerate() {
        let view = load_view(&cfg.dataset_dir, traj, frames)?;
        if Some(i) == cfg.refine.heldout_camera {
            heldout = Some((i, view));
        } else {
            views.push(view);
        }
    }
    if let Some((h, _)) = heldout {
        if h == offsets.anchor {
            return Err(CoreError::InputError(
                "held-out camera cannot be the anchor".into(),
            ));
        }
        let kept: Vec<i64> = offsets
            .offsets
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != h)
            .map(|(_, &o)| o)
            .collect();
        let new_anchor = if offsets.anchor > h {
            offsets.anchor - 1
        } else {
            offsets.anchor
        };
        offsets = GlobalOffsets {
            offsets: kept,
            anchor: new_anchor,
        };
    }

    let base_poses: Vec<CameraPose> = views.iter().map(|v| v.base_pose.clone()).collect();
    let sample_images: Vec<&Image> = views.iter().filter_map(|v| v.images.first()).collect();
    let (bounds, near, far, bg) = auto_render_setup(&motions, &sim3, &base_poses, &sample_images);
    let config = train_config_from(cfg, bounds, near, far, bg);
    let gt = io::load_ground_truth(&io::gt_path(&cfg.dataset_dir)).ok();

    Ok(RefineInputs {
        dataset: RefineDataset { views },
        offsets,
        config,
        gt: gt.map(|mut g| {
            if let Some((h, _)) = heldout {
                g.offsets.remove(h);
                g.sim3.remove(h);
                g.world_trajectories.remove(h);
            }
            g
        }),
        heldout,
    })
}

/// Joint refinement; writes `refined.json`, the metrics log and the final
/// checkpoint.
pub fn cmd_refine(cfg: &PipelineConfig) -> Result<TrainResult, CoreError> {
    let inputs = assemble_refine_inputs(cfg)?;
    let result = train(
        &inputs.dataset,
        &inputs.offsets,
        &inputs.config,
        inputs.gt.as_ref(),
    )?;
    write_refine_outputs(cfg, &inputs, &result)?;
    Ok(result)
}

pub fn write_refine_outputs(
    cfg: &PipelineConfig,
    inputs: &RefineInputs,
    result: &TrainResult,
) -> Result<(), CoreError> {
    let calib = &result.calibration;
    let cameras: Vec<io::RefinedCamera> = (0..calib.len())
        .map(|i| {
            io::refined_camera(
                &inputs.dataset.views[i].camera_id,
                &calib.current_pose(i),
                calib.offsets[i],
            )
        })
        .collect();
    let refined = RefinedFile {
        cameras,
        anchor: calib.anchor,
        schedule: serde_json::to_value(inputs.config.schedule)?,
    };
    io::write_json(&refined_path(cfg), &refined)?;
    io::save_metrics_log(&metrics_path(cfg), &result.metrics)?;
    io::save_checkpoint(
        &checkpoint_path(cfg),
        &Checkpoint {
            version: io::CHECKPOINT_VERSION,
            step: inputs.config.schedule.total_steps,
            field: result.field.clone(),
            decoders: result.decoders.clone(),
            pose_deltas: calib.pose_deltas.clone(),
            offsets: calib.offsets.clone(),
        },
    )
}

/// Full evaluation report: init-stage errors, refine-stage errors when a
/// refinement ran, and rendered-image metrics against the dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub dataset_id: String,
    pub init: CalibReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refine: Option<CalibReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image_metrics: Option<ImageMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub heldout: Option<HeldoutReport>,
}

/// Held-out camera test-time optimization summary (supplementary protocol:
/// the ground-truth test pose is mapped into the estimation frame by
/// aligning the training cameras, then only the test camera's pose and
/// offset are optimized against a frozen field).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeldoutReport {
    pub camera_id: String,
    pub psnr_before: f64,
    pub psnr_after: f64,
    pub offset: f64,
    pub diverged: bool,
}

pub fn cmd_eval(cfg: &PipelineConfig) -> Result<Report, CoreError> {
    let gt = io::load_ground_truth(&io::gt_path(&cfg.dataset_dir))?;
    let aligned = io::load_poses(&poses_path(cfg))?;
    let (offsets, mats, _) = io::load_offsets(&offsets_path(cfg))?;
    let anchor = select_anchor(&mats, anchor_mode(cfg)?);
    let offsets = offsets.reanchored(anchor);
    let ids: Vec<String> = aligned.iter().map(|t| t.camera_id.clone()).collect();
    let dataset_id = cfg
        .dataset_dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());

    let est_poses: Vec<CameraPose> = aligned.iter().map(|t| t.poses[0].clone()).collect();
    let est_offsets: Vec<f64> = offsets.offsets.iter().map(|&o| o as f64).collect();
    let gt_poses: Vec<CameraPose> = gt.world_trajectories.iter().map(|t| t.poses[0].clone()).collect();
    let gt_offsets: Vec<f64> = gt.offsets.iter().map(|&o| o as f64).collect();
    let init = evalkit::calib_errors(
        &ids,
        &est_poses,
        &est_offsets,
        &gt_poses,
        &gt_offsets,
        &dataset_id,
        "init",
    )?;

    let mut refine_report = None;
    let mut image_metrics = None;
    if refined_path(cfg).is_file() {
        let refined: RefinedFile = io::read_json(&refined_path(cfg))?;
        let held = cfg.refine.heldout_camera;
        let keep = |i: usize| held != Some(i);
        let r_ids: Vec<String> = refined.cameras.iter().map(|c| c.camera_id.clone()).collect();
        let r_poses: Vec<CameraPose> = (0..refined.cameras.len()).map(|i| refined.pose(i)).collect();
        let r_offsets: Vec<f64> = refined.cameras.iter().map(|c| c.dt).collect();
        let g_poses: Vec<CameraPose> = gt_poses
            .iter()
            .enumerate()
            .filter(|(i, _)| keep(*i))
            .map(|(_, p)| p.clone())
            .collect();
        let g_offsets: Vec<f64> = gt_offsets
            .iter()
            .enumerate()
            .filter(|(i, _)| keep(*i))
            .map(|(_, &o)| o)
            .collect();
        refine_report = Some(evalkit::calib_errors(
            &r_ids, &r_poses, &r_offsets, &g_poses, &g_offsets, &dataset_id, "refine",
        )?);

        if checkpoint_path(cfg).is_file() {
            image_metrics = Some(rendered_image_metrics(cfg, &refined)?);
        }
    }

    let mut heldout_report = None;
    if let Some(h) = cfg.refine.heldout_camera {
        if refined_path(cfg).is_file() && checkpoint_path(cfg).is_file() {
            heldout_report = Some(heldout_eval(cfg, h, &gt)?);
        }
    }

    let report = Report {
        dataset_id,
        init,
        refine: refine_report,
        image_metrics,
        heldout: heldout_report,
    };
    io::write_json(&report_path(cfg), &report)?;
    let mut tables = vec![&report.init];
    if let Some(r) = &report.refine {
        tables.push(r);
    }
    let text = evalkit::render_report_table(&tables);
    std::fs::write(cfg.output_dir.join("report.txt"), &text).map_err(|source| {
        CoreError::Write {
            path: cfg.output_dir.join("report.txt"),
            source,
        }
    })?;
    Ok(report)
}

fn rendered_image_metrics(
    cfg: &PipelineConfig,
    refined: &RefinedFile,
) -> Result<ImageMetrics, CoreError> {
    let ckpt = io::load_checkpoint(&checkpoint_path(cfg))?;
    let inputs = assemble_refine_inputs(cfg)?;
    let schedule: TrainSchedule = serde_json::from_value(refined.schedule.clone())?;
    let level_weights = schedule.level_weights(schedule.total_steps);
    let time_map = TimeMap::from_init(
        &inputs
            .offsets
            .offsets
            .iter()
            .map(|&o| o as f64)
            .collect::<Vec<_>>(),
        &inputs.dataset.frame_counts(),
    );
    let field: &PlaneField = &ckpt.field;
    let decoders: &Decoders = &ckpt.decoders;
    let mut psnr_acc = 0.0;
    let mut ssim_acc = 0.0;
    let mut count = 0.0;
    let n_cams = inputs.dataset.views.len().min(cfg.eval.metric_cameras.max(1));
    for (ci, view) in inputs.dataset.views.iter().take(n_cams).enumerate() {
        let pose = refined.pose(ci);
        let dt = refined.cameras[ci].dt;
        let frames = view.images.len();
        let step = (frames / cfg.eval.metric_frames.max(1)).max(1);
        for t in (0..frames).step_by(step).take(cfg.eval.metric_frames.max(1)) {
            let t_norm = time_map.normalize(t as f64, dt);
            if !(0.0..=1.0).contains(&t_norm) {
                continue;
            }
            let rendered = evalkit::render_field_image(
                field,
                decoders,
                &level_weights,
                &inputs.config.render,
                &pose,
                &view.intrinsics,
                t_norm,
            );
            let m = evalkit::image_metrics(&rendered, &view.images[t])?;
            psnr_acc += if m.psnr == evalkit::PSNR_SENTINEL { 60.0 } else { m.psnr };
            ssim_acc += m.ssim;
            count += 1.0;
        }
    }
    if count == 0.0 {
        return Err(CoreError::InputError(
            "no frames available for image metrics".into(),
        ));
    }
    Ok(ImageMetrics {
        psnr: psnr_acc / count,
        ssim: ssim_acc / count,
    })
}

fn heldout_eval(
    cfg: &PipelineConfig,
    test_cam: usize,
    gt: &GroundTruth,
) -> Result<HeldoutReport, CoreError> {
    let ckpt = io::load_checkpoint(&checkpoint_path(cfg))?;
    let refined: RefinedFile = io::read_json(&refined_path(cfg))?;
    let inputs = assemble_refine_inputs(cfg)?;
    let Some((_, test_view)) = &inputs.heldout else {
        return Err(CoreError::InputError(
            "held-out camera not present in the dataset".into(),
        ));
    };
    let schedule: TrainSchedule = serde_json::from_value(refined.schedule.clone())?;
    let level_weights = schedule.level_weights(schedule.total_steps);
    let offsets_f: Vec<f64> = inputs.offsets.offsets.iter().map(|&o| o as f64).collect();
    let time_map = TimeMap::from_init(&offsets_f, &inputs.dataset.frame_counts());

    // map the ground-truth test pose into the estimation frame by aligning
    // the ground-truth training cameras to the refined ones
    let est_train: Vec<CameraPose> = (0..refined.cameras.len()).map(|i| refined.pose(i)).collect();
    let gt_train: Vec<CameraPose> = gt
        .world_trajectories
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != test_cam)
        .map(|(_, t)| t.poses[0].clone())
        .collect();
    let (_, to_est) = evalkit::align_camera_sets(&gt_train, &est_train)?;
    let gt_test = &gt.world_trajectories[test_cam].poses[0];
    let init_pose = CameraPose::from_center(
        gt_test.rotation * to_est.rotation.transpose(),
        to_est.apply(&gt_test.center()),
        0,
    );
    // offsets share one gauge shift with the estimates
    let shift: f64 = refined
        .cameras
        .iter()
        .zip(gt.offsets.iter().enumerate().filter(|(i, _)| *i != test_cam))
        .map(|(c, (_, &g))| c.dt - g as f64)
        .sum::<f64>()
        / refined.cameras.len() as f64;
    let init_offset = gt.offsets[test_cam] as f64 + shift;

    let render_frame = |pose: &CameraPose, offset: f64, t: usize| {
        evalkit::render_field_image(
            &ckpt.field,
            &ckpt.decoders,
            &level_weights,
            &inputs.config.render,
            pose,
            &test_view.intrinsics,
            time_map.normalize(t as f64, offset),
        )
    };
    let mid = test_view.images.len() / 2;
    let before = evalkit::psnr(&render_frame(&init_pose, init_offset, mid), &test_view.images[mid])?;

    let traj = CameraTrajectory {
        camera_id: test_view.camera_id.clone(),
        poses: vec![init_pose.clone()],
        intrinsics: test_view.intrinsics,
    };
    let result = evalkit::heldout_testtime_opt(
        &ckpt.field,
        &ckpt.decoders,
        &level_weights,
        &inputs.config.render,
        &traj,
        &test_view.images,
        &init_pose,
        init_offset,
        &time_map,
        cfg.eval.heldout_iters,
        cfg.seed,
    )?;
    let after = evalkit::psnr(&render_frame(&result.pose, result.offset, mid), &test_view.images[mid])?;
    Ok(HeldoutReport {
        camera_id: test_view.camera_id.clone(),
        psnr_before: before,
        psnr_after: after,
        offset: result.offset,
        diverged: result.diverged,
    })
}

/// Runs every stage in order and returns the final report.
pub fn cmd_pipeline(cfg: &PipelineConfig) -> Result<Report, CoreError> {
    cmd_simulate(cfg)?;
    cmd_sync(cfg)?;
    cmd_pose(cfg)?;
    cmd_refine(cfg)?;
    cmd_eval(cfg)
}

/// Ablation entry point mirroring `cmd_refine` (used by tests and the
/// acceptance suite rather than a dedicated subcommand).
pub fn run_ablation(cfg: &PipelineConfig, mode: AblationMode) -> Result<TrainResult, CoreError> {
    let inputs = assemble_refine_inputs(cfg)?;
    motioncal::refine::ablate_schedule(
        &inputs.dataset,
        &inputs.offsets,
        &inputs.config,
        mode,
        inputs.gt.as_ref(),
    )
}
