//! Joint refinement: fits the plane field and decoders to the input videos
//! while optimizing per-camera 6-DoF pose deltas and continuous time
//! offsets, under the coarse-to-fine level schedule and staged curriculum
//! (field only, then poses at `s0`, then offsets at `s0 + s1`).

use crate::error::{Error, Result};
use crate::geom::{rodrigues, rotate_jacobian};
use crate::io::{GroundTruth, Image, MetricsRecord};
use crate::planefield::{
    Aabb, DecoderGrads, Decoders, FieldGrads, PlaneField, RegWeights, RenderConfig,
    RenderScratch, TrainSchedule,
};
use crate::posealign::{CameraPose, Intrinsics};
use crate::timesync::GlobalOffsets;
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// First-order adaptive-moment optimizer over one parameter block.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    pub lr: f64,
}

impl Adam {
    pub fn new(len: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
            lr,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.step_scaled(params, grads, 1.0);
    }

    pub fn step_scaled(&mut self, params: &mut [f64], grads: &[f64], lr_scale: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.t += 1;
        let bc1 = 1.0 - B1.powi(self.t as i32);
        let bc2 = 1.0 - B2.powi(self.t as i32);
        let lr = self.lr * lr_scale;
        for i in 0..params.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grads[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grads[i] * grads[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + EPS);
        }
    }
}

/// Learnable calibration: per-camera base pose plus a 6-DoF tangent delta
/// (rotation, then camera-center translation) and a continuous time offset.
/// The anchor camera is fully frozen to fix the gauge; moving cameras pass
/// through unrefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationState {
    pub base_poses: Vec<CameraPose>,
    pub pose_deltas: Vec<[f64; 6]>,
    pub offsets: Vec<f64>,
    pub anchor: usize,
    pub moving: Vec<bool>,
}

impl CalibrationState {
    pub fn new(base_poses: Vec<CameraPose>, offsets: &GlobalOffsets, moving: Vec<bool>) -> Self {
        let n = base_poses.len();
        Self {
            base_poses,
            pose_deltas: vec![[0.0; 6]; n],
            offsets: offsets.offsets.iter().map(|&o| o as f64).collect(),
            anchor: offsets.anchor,
            moving,
        }
    }

    pub fn len(&self) -> usize {
        self.base_poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base_poses.is_empty()
    }

    pub fn current_pose(&self, i: usize) -> CameraPose {
        pose_from_delta(&self.base_poses[i], &self.pose_deltas[i])
    }
}

/// Applies a 6-DoF tangent delta to a base pose: the rotation delta composes
/// on the world side, the translation delta moves the camera center.
pub fn pose_from_delta(base: &CameraPose, delta: &[f64; 6]) -> CameraPose {
    let omega = Vector3::new(delta[0], delta[1], delta[2]);
    let v = Vector3::new(delta[3], delta[4], delta[5]);
    let rotation = rodrigues(&omega) * base.rotation;
    CameraPose::from_center(rotation, base.center() + v, base.timestamp)
}

/// Affine map from a camera-local frame index and its offset to the
/// normalized field time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeMap {
    pub origin: f64,
    pub scale: f64,
}

impl TimeMap {
    /// Covers the union of all cameras' timelines under the initial offsets.
    pub fn from_init(offsets: &[f64], frame_counts: &[usize]) -> Self {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (o, &m) in offsets.iter().zip(frame_counts) {
            lo = lo.min(0.0 - o);
            hi = hi.max((m as f64 - 1.0) - o);
        }
        let span = (hi - lo).max(1e-9);
        Self {
            origin: lo,
            scale: 1.0 / span,
        }
    }

    #[inline]
    pub fn normalize(&self, frame: f64, offset: f64) -> f64 {
        (frame - offset - self.origin) * self.scale
    }

    /// d normalized-time / d offset.
    #[inline]
    pub fn d_offset(&self) -> f64 {
        -self.scale
    }
}

/// Gradients of one ray's loss contribution with respect to the camera's
/// pose delta and the query time.
#[derive(Debug, Clone, Copy, Default)]
pub struct RayCalibGrads {
    pub d_delta: [f64; 6],
    pub d_t: f64,
}

/// Renders one pixel from a delta-parametrized camera and backpropagates the
/// photometric residual into the field/decoder buffers and the calibration
/// parameters. `scale` multiplies the residual gradient (2 / batch for a
/// batch-mean squared loss).
#[allow(clippy::too_many_arguments)]
pub fn ray_with_gradients(
    field: &PlaneField,
    decoders: &Decoders,
    pose: &CameraPose,
    base_pose: &CameraPose,
    delta: &[f64; 6],
    intr: &Intrinsics,
    pixel: (f64, f64),
    t_norm: f64,
    render: &RenderConfig,
    level_weights: &[f64],
    jitter: Option<&[f64]>,
    gt: &Vector3<f64>,
    scale: f64,
    grads: (&mut FieldGrads, &mut DecoderGrads),
    scratch: &mut RenderScratch,
) -> (Vector3<f64>, RayCalibGrads) {
    let d_cam = Vector3::new(
        (pixel.0 - intr.cx) / intr.fx,
        (pixel.1 - intr.cy) / intr.fy,
        1.0,
    );
    let omega = Vector3::new(delta[0], delta[1], delta[2]);
    // world direction: R0^T rodrigues(-omega) d_cam, then normalized
    let u = rodrigues(&-omega) * d_cam;
    let d_unnorm = base_pose.rotation.transpose() * u;
    let norm = d_unnorm.norm();
    let dir = d_unnorm / norm;
    let origin = pose.center();

    // one forward for the residual, then the backward pass reuses the caches
    let (field_grads, decoder_grads) = grads;
    let out = crate::planefield::render_ray(
        field,
        decoders,
        &origin,
        &dir,
        t_norm,
        render,
        level_weights,
        jitter,
        scratch,
    );
    let d_rgb = scale * (out.rgb - gt);
    let ray_grads = crate::planefield::render_ray_backward(
        field,
        decoders,
        &dir,
        render,
        level_weights,
        &d_rgb,
        field_grads,
        decoder_grads,
        scratch,
    );

    // chain to the pose delta
    let mut calib = RayCalibGrads {
        d_t: ray_grads.d_t,
        ..Default::default()
    };
    // translation delta moves the origin directly
    calib.d_delta[3] = ray_grads.d_origin.x;
    calib.d_delta[4] = ray_grads.d_origin.y;
    calib.d_delta[5] = ray_grads.d_origin.z;
    // direction normalization back through the rotation delta
    let d_d_unnorm = (ray_grads.d_dir - dir * dir.dot(&ray_grads.d_dir)) / norm;
    let d_u = base_pose.rotation * d_d_unnorm;
    let d_omega = -(rotate_jacobian(&-omega, &d_cam).transpose() * d_u);
    calib.d_delta[0] = d_omega.x;
    calib.d_delta[1] = d_omega.y;
    calib.d_delta[2] = d_omega.z;
    (out.rgb, calib)
}

/// One camera's refinement inputs: the initialized pose (estimation frame),
/// intrinsics and the video frames.
#[derive(Debug, Clone)]
pub struct CameraView {
    pub camera_id: String,
    pub base_pose: CameraPose,
    pub intrinsics: Intrinsics,
    pub images: Vec<Image>,
    pub moving: bool,
}

/// Refinement dataset: one view per camera.
#[derive(Debug, Clone)]
pub struct RefineDataset {
    pub views: Vec<CameraView>,
}

impl RefineDataset {
    pub fn frame_counts(&self) -> Vec<usize> {
        self.views.iter().map(|v| v.images.len()).collect()
    }
}

/// All trainer knobs. Learning rates are desk-scale defaults, not ground
/// truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub schedule: TrainSchedule,
    pub render: RenderConfig,
    pub bounds: Aabb,
    pub spatial_res: Vec<usize>,
    pub time_res: usize,
    pub feature_dim: usize,
    pub hidden: usize,
    pub f_hat_dim: usize,
    pub n_freq: usize,
    pub batch_rays: usize,
    pub chunk_rays: usize,
    pub lr_planes: f64,
    pub lr_decoders: f64,
    pub lr_pose: f64,
    pub lr_offset: f64,
    pub reg_weights: RegWeights,
    pub density_reg_samples: usize,
    /// Cosine learning-rate decay window applied to every parameter group;
    /// disabled when end <= start.
    pub lr_decay_start: usize,
    pub lr_decay_end: usize,
    pub lr_floor: f64,
    pub log_every: usize,
    pub snapshot_every: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Desk-scale defaults over a given scene box and depth range.
    pub fn desk(bounds: Aabb, near: f64, far: f64, background: Vector3<f64>, seed: u64) -> Self {
        Self {
            schedule: TrainSchedule {
                total_steps: 14_000,
                coarse_to_fine_end: 5_000,
                s0: 500,
                s1: 1_500,
                levels: 3,
                reg_decay_start: 5_000,
                reg_decay_end: 10_000,
                coarse_to_fine_enabled: true,
            },
            render: RenderConfig {
                samples_per_ray: 16,
                near,
                far,
                background,
                jitter: true,
            },
            bounds,
            spatial_res: vec![8, 16, 32],
            time_res: 16,
            feature_dim: 16,
            hidden: 64,
            f_hat_dim: 16,
            n_freq: 4,
            batch_rays: 96,
            chunk_rays: 12,
            lr_planes: 1e-2,
            lr_decoders: 1e-3,
            lr_pose: 3e-3,
            lr_offset: 1e-2,
            reg_weights: RegWeights::default(),
            density_reg_samples: 32,
            lr_decay_start: 7_000,
            lr_decay_end: 14_000,
            lr_floor: 0.1,
            log_every: 500,
            snapshot_every: 500,
            seed,
        }
    }
}

/// Bit-level snapshot of the calibration parameters at one step (taken
/// before the optimizer update of that step).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibSnapshot {
    pub step: usize,
    pub pose_deltas: Vec<[f64; 6]>,
    pub offsets: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub field: PlaneField,
    pub decoders: Decoders,
    pub calibration: CalibrationState,
    pub time_map: TimeMap,
    pub metrics: Vec<MetricsRecord>,
    pub snapshots: Vec<CalibSnapshot>,
    pub final_loss: f64,
}

/// Which scheduling mechanism an ablation disables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AblationMode {
    Full,
    /// All level weights pinned to 1 from step 0.
    NoCoarseToFine,
    /// Every parameter group unfrozen from step 0.
    NoCurriculum,
}

struct ChunkWorker {
    field_grads: FieldGrads,
    decoder_grads: DecoderGrads,
    pose_grads: Vec<[f64; 6]>,
    offset_grads: Vec<f64>,
    loss: f64,
    scratch: RenderScratch,
}

struct RayJob {
    cam: usize,
    frame: usize,
    px: usize,
    py: usize,
    jitter: Vec<f64>,
}

/// Runs the full training loop. `gt` is used only for metrics logging.
pub fn train(
    dataset: &RefineDataset,
    init_offsets: &GlobalOffsets,
    config: &TrainConfig,
    gt: Option<&GroundTruth>,
) -> Result<TrainResult> {
    let n_cams = dataset.views.len();
    if n_cams == 0 {
        return Err(Error::InputError("refinement dataset has no cameras".into()));
    }
    if init_offsets.offsets.len() != n_cams {
        return Err(Error::InputError("offsets/camera count mismatch".into()));
    }
    config.render.validate()?;
    if config.schedule.levels != config.spatial_res.len() {
        return Err(Error::InputError(
            "schedule level count must match the grid resolutions".into(),
        ));
    }

    let mut field = PlaneField::new(
        &config.spatial_res,
        config.time_res,
        config.feature_dim,
        config.bounds,
        config.seed,
    );
    let mut decoders = Decoders::new(
        config.spatial_res.len() * config.feature_dim,
        config.hidden,
        config.f_hat_dim,
        config.n_freq,
        config.seed.wrapping_add(1),
    );
    let mut calib = CalibrationState::new(
        dataset.views.iter().map(|v| v.base_pose.clone()).collect(),
        init_offsets,
        dataset.views.iter().map(|v| v.moving).collect(),
    );
    let time_map = TimeMap::from_init(&calib.offsets, &dataset.frame_counts());

    let mut plane_adams: Vec<Adam> = field
        .planes
        .iter()
        .map(|p| Adam::new(p.data.len(), config.lr_planes))
        .collect();
    let mut density_adams: Vec<(Adam, Adam)> = decoders
        .density
        .layers
        .iter()
        .map(|l| (Adam::new(l.w.len(), config.lr_decoders), Adam::new(l.b.len(), config.lr_decoders)))
        .collect();
    let mut color_adams: Vec<(Adam, Adam)> = decoders
        .color
        .layers
        .iter()
        .map(|l| (Adam::new(l.w.len(), config.lr_decoders), Adam::new(l.b.len(), config.lr_decoders)))
        .collect();
    let mut pose_adam = Adam::new(6 * n_cams, config.lr_pose);
    let mut offset_adam = Adam::new(n_cams, config.lr_offset);

    let n_chunks = config.batch_rays.div_ceil(config.chunk_rays);
    let mut workers: Vec<ChunkWorker> = (0..n_chunks)
        .map(|_| ChunkWorker {
            field_grads: FieldGrads::zeros_like(&field),
            decoder_grads: DecoderGrads::zeros_like(&decoders),
            pose_grads: vec![[0.0; 6]; n_cams],
            offset_grads: vec![0.0; n_cams],
            loss: 0.0,
            scratch: RenderScratch::new(&field, &decoders, config.render.samples_per_ray),
        })
        .collect();
    let mut main_field_grads = FieldGrads::zeros_like(&field);
    let mut main_decoder_grads = DecoderGrads::zeros_like(&decoders);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x747261696e));
    let mut metrics = Vec::new();
    let mut snapshots = Vec::new();
    let mut last_loss = f64::NAN;
    let schedule = &config.schedule;

    for step in 0..schedule.total_steps {
        // coarse-to-fine: initialize a finer level from the coarser one the
        // first time its weight activates
        if schedule.coarse_to_fine_enabled && step > 0 {
            let alpha = schedule.alpha(step);
            let alpha_prev = schedule.alpha(step - 1);
            for level in 1..field.levels() {
                if alpha >= level as f64 && alpha_prev < level as f64 {
                    field.upsample_init(level);
                }
            }
        }
        let level_weights = schedule.level_weights(step);

        if config.snapshot_every > 0 && step % config.snapshot_every == 0 {
            snapshots.push(CalibSnapshot {
                step,
                pose_deltas: calib.pose_deltas.clone(),
                offsets: calib.offsets.clone(),
            });
        }

        // sample the batch; rays whose shifted time leaves the recorded
        // window are dropped
        let mut jobs: Vec<RayJob> = Vec::with_capacity(config.batch_rays);
        for _ in 0..config.batch_rays {
            let cam = rng.random_range(0..n_cams);
            let view = &dataset.views[cam];
            let frame = rng.random_range(0..view.images.len());
            let px = rng.random_range(0..view.intrinsics.width);
            let py = rng.random_range(0..view.intrinsics.height);
            let jitter: Vec<f64> = (0..config.render.samples_per_ray)
                .map(|_| rng.random::<f64>())
                .collect();
            jobs.push(RayJob {
                cam,
                frame,
                px,
                py,
                jitter,
            });
        }
        let reg_samples: Vec<[f64; 4]> = (0..config.density_reg_samples)
            .map(|_| {
                [
                    config.bounds.min.x
                        + rng.random::<f64>() * (config.bounds.max.x - config.bounds.min.x),
                    config.bounds.min.y
                        + rng.random::<f64>() * (config.bounds.max.y - config.bounds.min.y),
                    config.bounds.min.z
                        + rng.random::<f64>() * (config.bounds.max.z - config.bounds.min.z),
                    rng.random::<f64>(),
                ]
            })
            .collect();

        jobs.retain(|j| {
            let t = time_map.normalize(j.frame as f64, calib.offsets[j.cam]);
            (0.0..=1.0).contains(&t)
        });
        if jobs.is_empty() {
            continue;
        }
        let kept = jobs.len();
        let scale = 2.0 / kept as f64;
        let poses: Vec<CameraPose> = (0..n_cams).map(|i| calib.current_pose(i)).collect();

        // parallel chunk evaluation with a fixed-order reduction
        let chunks: Vec<&[RayJob]> = jobs.chunks(config.chunk_rays).collect();
        let active_workers = &mut workers[..chunks.len()];
        active_workers
            .par_iter_mut()
            .zip(chunks.par_iter())
            .for_each(|(worker, chunk)| {
                worker.field_grads.clear();
                worker.decoder_grads.clear();
                worker.pose_grads.iter_mut().for_each(|g| *g = [0.0; 6]);
                worker.offset_grads.iter_mut().for_each(|g| *g = 0.0);
                worker.loss = 0.0;
                for job in *chunk {
                    let view = &dataset.views[job.cam];
                    let gt_rgb = *view.images[job.frame].pixel(job.px, job.py);
                    let t_norm = time_map.normalize(job.frame as f64, calib.offsets[job.cam]);
                    let (rgb, calib_grads) = ray_with_gradients(
                        &field,
                        &decoders,
                        &poses[job.cam],
                        &view.base_pose,
                        &calib.pose_deltas[job.cam],
                        &view.intrinsics,
                        (job.px as f64 + 0.5, job.py as f64 + 0.5),
                        t_norm,
                        &config.render,
                        &level_weights,
                        if config.render.jitter {
                            Some(&job.jitter)
                        } else {
                            None
                        },
                        &gt_rgb,
                        scale,
                        (&mut worker.field_grads, &mut worker.decoder_grads),
                        &mut worker.scratch,
                    );
                    worker.loss += (rgb - gt_rgb).norm_squared();
                    for i in 0..6 {
                        worker.pose_grads[job.cam][i] += calib_grads.d_delta[i];
                    }
                    worker.offset_grads[job.cam] += calib_grads.d_t * time_map.d_offset();
                }
            });

        main_field_grads.clear();
        main_decoder_grads.clear();
        let mut pose_grads = vec![0.0f64; 6 * n_cams];
        let mut offset_grads = vec![0.0f64; n_cams];
        let mut loss = 0.0;
        for worker in active_workers.iter() {
            main_field_grads.add_assign(&worker.field_grads);
            main_decoder_grads.add_assign(&worker.decoder_grads);
            for c in 0..n_cams {
                for i in 0..6 {
                    pose_grads[c * 6 + i] += worker.pose_grads[c][i];
                }
                offset_grads[c] += worker.offset_grads[c];
            }
            loss += worker.loss;
        }
        loss /= kept as f64;

        let lr_scale = lr_decay_scale(config, step);
        let reg = crate::planefield::regularizer_losses(
            &field,
            &decoders,
            &config.reg_weights.scaled(schedule.reg_scale(step)),
            &level_weights,
            &reg_samples,
            Some((&mut main_field_grads, &mut main_decoder_grads)),
        );
        loss += reg.total();

        if !loss.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite loss at step {step} (photometric+reg, last finite loss {last_loss})"
            )));
        }
        last_loss = loss;

        // parameter updates; anchor and moving cameras stay frozen to fix
        // the gauge
        for (plane, (adam, grads)) in field
            .planes
            .iter_mut()
            .zip(plane_adams.iter_mut().zip(&main_field_grads.planes))
        {
            adam.step_scaled(&mut plane.data, grads, lr_scale);
        }
        for (layer, ((aw, ab), (gw, gb))) in decoders
            .density
            .layers
            .iter_mut()
            .zip(density_adams.iter_mut().zip(&main_decoder_grads.density.layers))
        {
            aw.step_scaled(&mut layer.w, gw, lr_scale);
            ab.step_scaled(&mut layer.b, gb, lr_scale);
        }
        for (layer, ((aw, ab), (gw, gb))) in decoders
            .color
            .layers
            .iter_mut()
            .zip(color_adams.iter_mut().zip(&main_decoder_grads.color.layers))
        {
            aw.step_scaled(&mut layer.w, gw, lr_scale);
            ab.step_scaled(&mut layer.b, gb, lr_scale);
        }
        if schedule.poses_active(step) {
            for c in 0..n_cams {
                if c == calib.anchor || calib.moving[c] {
                    for i in 0..6 {
                        pose_grads[c * 6 + i] = 0.0;
                    }
                }
            }
            let mut flat: Vec<f64> = calib.pose_deltas.iter().flatten().copied().collect();
            pose_adam.step_scaled(&mut flat, &pose_grads, lr_scale);
            for (c, chunk) in flat.chunks_exact(6).enumerate() {
                calib.pose_deltas[c].copy_from_slice(chunk);
            }
        }
        if schedule.offsets_active(step) {
            offset_grads[calib.anchor] = 0.0;
            offset_adam.step_scaled(&mut calib.offsets, &offset_grads, lr_scale);
        }

        if config.log_every > 0 && (step % config.log_every == 0 || step + 1 == schedule.total_steps)
        {
            metrics.push(metric_record(step, loss, &calib, gt));
        }
    }

    snapshots.push(CalibSnapshot {
        step: schedule.total_steps,
        pose_deltas: calib.pose_deltas.clone(),
        offsets: calib.offsets.clone(),
    });

    Ok(TrainResult {
        final_loss: last_loss,
        field,
        decoders,
        calibration: calib,
        time_map,
        metrics,
        snapshots,
    })
}

fn lr_decay_scale(config: &TrainConfig, step: usize) -> f64 {
    if config.lr_decay_end <= config.lr_decay_start {
        return 1.0;
    }
    let t = ((step as f64 - config.lr_decay_start as f64)
        / (config.lr_decay_end - config.lr_decay_start) as f64)
        .clamp(0.0, 1.0);
    config.lr_floor + (1.0 - config.lr_floor) * (1.0 + (std::f64::consts::PI * t).cos()) / 2.0
}

fn metric_record(
    step: usize,
    loss: f64,
    calib: &CalibrationState,
    gt: Option<&GroundTruth>,
) -> MetricsRecord {
    let mut rec = MetricsRecord {
        step,
        loss,
        rot_err_deg: None,
        trans_err: None,
        dt_err: None,
    };
    if let Some(gt) = gt {
        let ids: Vec<String> = (0..calib.len()).map(|i| format!("cam{i:02}")).collect();
        let est: Vec<CameraPose> = (0..calib.len()).map(|i| calib.current_pose(i)).collect();
        let gt_poses: Vec<CameraPose> =
            gt.world_trajectories.iter().map(|t| t.poses[0].clone()).collect();
        let gt_offsets: Vec<f64> = gt.offsets.iter().map(|&o| o as f64).collect();
        if let Ok(report) = crate::evalkit::calib_errors(
            &ids,
            &est,
            &calib.offsets,
            &gt_poses,
            &gt_offsets,
            "train",
            "refine",
        ) {
            rec.rot_err_deg = Some(report.mean_rotation_deg);
            rec.trans_err = Some(report.mean_translation);
            rec.dt_err = Some(report.mean_offset_frames);
        }
    }
    rec
}

/// Runs `train` with one scheduling mechanism disabled.
pub fn ablate_schedule(
    dataset: &RefineDataset,
    init_offsets: &GlobalOffsets,
    config: &TrainConfig,
    mode: AblationMode,
    gt: Option<&GroundTruth>,
) -> Result<TrainResult> {
    let mut config = config.clone();
    match mode {
        AblationMode::Full => {}
        AblationMode::NoCoarseToFine => {
            config.schedule.coarse_to_fine_enabled = false;
        }
        AblationMode::NoCurriculum => {
            config.schedule.s0 = 0;
            config.schedule.s1 = 0;
        }
    }
    train(dataset, init_offsets, &config, gt)
}
