//! Calibration and reconstruction quality measurement: gauge-removing
//! alignment of estimated camera sets to ground truth, rotation/translation/
//! offset errors, PSNR/SSIM image metrics and held-out-camera test-time
//! optimization against a frozen field.

use crate::error::{Error, Result};
use crate::geom::rotation_angle_deg;
use crate::io::Image;
use crate::planefield::{render_ray, Decoders, PlaneField, RenderConfig, RenderScratch};
use crate::posealign::{procrustes, CameraPose, CameraTrajectory, SimilarityTransform};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Sentinel reported instead of infinite PSNR when images are identical.
pub const PSNR_SENTINEL: f64 = 999.0;

/// Per-camera calibration errors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CameraErrors {
    pub camera_id: String,
    pub rotation_deg: f64,
    pub translation: f64,
    pub offset_frames: f64,
}

/// Calibration report for one stage of one dataset; the mean row is the
/// arithmetic mean of the per-camera values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibReport {
    pub dataset_id: String,
    pub stage: String,
    pub cameras: Vec<CameraErrors>,
    pub mean_rotation_deg: f64,
    pub mean_translation: f64,
    pub mean_offset_frames: f64,
}

impl CalibReport {
    pub fn from_cameras(dataset_id: &str, stage: &str, cameras: Vec<CameraErrors>) -> Self {
        let n = cameras.len().max(1) as f64;
        let mean_rotation_deg = cameras.iter().map(|c| c.rotation_deg).sum::<f64>() / n;
        let mean_translation = cameras.iter().map(|c| c.translation).sum::<f64>() / n;
        let mean_offset_frames = cameras.iter().map(|c| c.offset_frames).sum::<f64>() / n;
        Self {
            dataset_id: dataset_id.to_string(),
            stage: stage.to_string(),
            cameras,
            mean_rotation_deg,
            mean_translation,
            mean_offset_frames,
        }
    }
}

/// Aligns an estimated camera set to a reference set: Procrustes on camera
/// centers, rotation composition, translation recomputation. Returns the
/// aligned poses and the similarity used.
pub fn align_camera_sets(
    est: &[CameraPose],
    reference: &[CameraPose],
) -> Result<(Vec<CameraPose>, SimilarityTransform)> {
    if est.len() != reference.len() {
        return Err(Error::InputError(format!(
            "camera sets differ in size: {} vs {}",
            est.len(),
            reference.len()
        )));
    }
    let est_centers: Vec<Vector3<f64>> = est.iter().map(|p| p.center()).collect();
    let ref_centers: Vec<Vector3<f64>> = reference.iter().map(|p| p.center()).collect();
    let transform = procrustes(&est_centers, &ref_centers)?;
    let aligned = est
        .iter()
        .map(|p| {
            let center = transform.apply(&p.center());
            let rotation = p.rotation * transform.rotation.transpose();
            CameraPose::from_center(rotation, center, p.timestamp)
        })
        .collect();
    Ok((aligned, transform))
}

/// Rotation, translation and offset errors after removing the gauge: the
/// estimated set is aligned to ground truth by a similarity on camera
/// centers, and the mean-optimal shared shift is subtracted from the offset
/// residuals.
pub fn calib_errors(
    camera_ids: &[String],
    est_poses: &[CameraPose],
    est_offsets: &[f64],
    gt_poses: &[CameraPose],
    gt_offsets: &[f64],
    dataset_id: &str,
    stage: &str,
) -> Result<CalibReport> {
    let n = camera_ids.len();
    if est_poses.len() != n || gt_poses.len() != n || est_offsets.len() != n || gt_offsets.len() != n
    {
        return Err(Error::InputError("camera set size mismatch".into()));
    }
    let (aligned, _) = align_camera_sets(est_poses, gt_poses)?;
    let shift =
        est_offsets.iter().zip(gt_offsets).map(|(e, g)| e - g).sum::<f64>() / n.max(1) as f64;
    let cameras = (0..n)
        .map(|i| CameraErrors {
            camera_id: camera_ids[i].clone(),
            rotation_deg: rotation_angle_deg(&aligned[i].rotation, &gt_poses[i].rotation),
            translation: (aligned[i].center() - gt_poses[i].center()).norm(),
            offset_frames: (est_offsets[i] - gt_offsets[i] - shift).abs(),
        })
        .collect();
    Ok(CalibReport::from_cameras(dataset_id, stage, cameras))
}

/// Image metric pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub psnr: f64,
    pub ssim: f64,
}

/// PSNR over [0, 1] images; identical images report the documented sentinel.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::InputError("image dimensions differ".into()));
    }
    let mse = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .map(|(p, q)| (p - q).norm_squared())
        .sum::<f64>()
        / (3.0 * a.pixels.len() as f64);
    if mse == 0.0 {
        return Ok(PSNR_SENTINEL);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

fn gaussian_window() -> [f64; 11] {
    let sigma = 1.5;
    let mut w = [0.0; 11];
    let mut sum = 0.0;
    for (i, v) in w.iter_mut().enumerate() {
        let x = i as f64 - 5.0;
        *v = (-x * x / (2.0 * sigma * sigma)).exp();
        sum += *v;
    }
    for v in &mut w {
        *v /= sum;
    }
    w
}

/// SSIM with the standard 11x11 Gaussian window (sigma 1.5, K1 = 0.01,
/// K2 = 0.03, dynamic range 1), evaluated on all fully interior windows and
/// averaged over the three channels.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::InputError("image dimensions differ".into()));
    }
    if a.width < 11 || a.height < 11 {
        return Err(Error::InputError("images must be at least 11x11".into()));
    }
    let w = gaussian_window();
    let c1 = 0.01f64 * 0.01;
    let c2 = 0.03f64 * 0.03;
    let mut total = 0.0;
    let mut count = 0usize;
    for cy in 5..a.height - 5 {
        for cx in 5..a.width - 5 {
            for ch in 0..3 {
                let mut mx = 0.0;
                let mut my = 0.0;
                let mut mxx = 0.0;
                let mut myy = 0.0;
                let mut mxy = 0.0;
                for dy in 0..11 {
                    for dx in 0..11 {
                        let weight = w[dy] * w[dx];
                        let x = a.pixel(cx + dx - 5, cy + dy - 5)[ch];
                        let y = b.pixel(cx + dx - 5, cy + dy - 5)[ch];
                        mx += weight * x;
                        my += weight * y;
                        mxx += weight * x * x;
                        myy += weight * y * y;
                        mxy += weight * x * y;
                    }
                }
                let vx = mxx - mx * mx;
                let vy = myy - my * my;
                let cov = mxy - mx * my;
                total += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                    / ((mx * mx + my * my + c1) * (vx + vy + c2));
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}

pub fn image_metrics(rendered: &Image, reference: &Image) -> Result<ImageMetrics> {
    Ok(ImageMetrics {
        psnr: psnr(rendered, reference)?,
        ssim: ssim(rendered, reference)?,
    })
}

/// Plain-text rendering of init/refine reports in a small table.
pub fn render_report_table(reports: &[&CalibReport]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<12} {:<8} {:>12} {:>12} {:>12}\n",
        "camera", "stage", "rot (deg)", "trans", "dt (frames)"
    ));
    for report in reports {
        for c in &report.cameras {
            out.push_str(&format!(
                "{:<12} {:<8} {:>12.6} {:>12.6} {:>12.6}\n",
                c.camera_id, report.stage, c.rotation_deg, c.translation, c.offset_frames
            ));
        }
        out.push_str(&format!(
            "{:<12} {:<8} {:>12.6} {:>12.6} {:>12.6}\n",
            "mean",
            report.stage,
            report.mean_rotation_deg,
            report.mean_translation,
            report.mean_offset_frames
        ));
    }
    out
}

/// Held-out camera test-time optimization: optimizes only the test camera's
/// 6-DoF delta and continuous offset against photometric loss while the
/// field and decoders stay frozen. Returns the optimized pose/offset, the
/// best loss seen, and whether early divergence stopped the run.
#[derive(Debug, Clone)]
pub struct TestTimeResult {
    pub pose: CameraPose,
    pub offset: f64,
    pub best_loss: f64,
    pub diverged: bool,
}

#[allow(clippy::too_many_arguments)]
pub fn heldout_testtime_opt(
    field: &PlaneField,
    decoders: &Decoders,
    level_weights: &[f64],
    render: &RenderConfig,
    view: &CameraTrajectory,
    images: &[Image],
    init_pose: &CameraPose,
    init_offset: f64,
    time_map: &crate::refine::TimeMap,
    iters: usize,
    seed: u64,
) -> Result<TestTimeResult> {
    use crate::planefield::{DecoderGrads, FieldGrads};
    use crate::refine::{pose_from_delta, ray_with_gradients, Adam};

    if images.is_empty() {
        return Err(Error::InputError("test view has no images".into()));
    }
    let intr = view.intrinsics;
    let mut delta = [0.0f64; 6];
    let mut offset = init_offset;
    let mut adam_pose = Adam::new(6, 1e-3);
    let mut adam_offset = Adam::new(1, 1e-2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scratch = RenderScratch::new(field, decoders, render.samples_per_ray);
    // parameter gradients land here and are discarded: the field stays frozen
    let mut sink_field = FieldGrads::zeros_like(field);
    let mut sink_dec = DecoderGrads::zeros_like(decoders);

    let batch = 64usize;
    let mut best = (f64::INFINITY, delta, offset);
    let mut since_best = 0usize;
    let mut diverged = false;

    struct RaySample {
        px: usize,
        py: usize,
        frame: usize,
        jitter: Vec<f64>,
    }

    for _ in 0..iters {
        let mut d_delta = [0.0f64; 6];
        let mut d_offset = 0.0;
        let pose = pose_from_delta(init_pose, &delta);

        let samples: Vec<RaySample> = (0..batch)
            .map(|_| RaySample {
                px: rng.random_range(0..intr.width),
                py: rng.random_range(0..intr.height),
                frame: rng.random_range(0..images.len()),
                jitter: (0..render.samples_per_ray).map(|_| rng.random::<f64>()).collect(),
            })
            .collect();

        let kept: Vec<&RaySample> = samples
            .iter()
            .filter(|s| (0.0..=1.0).contains(&time_map.normalize(s.frame as f64, offset)))
            .collect();
        if kept.is_empty() {
            continue;
        }
        let scale = 2.0 / kept.len() as f64;
        let mut loss = 0.0;
        for s in &kept {
            let gt = *images[s.frame].pixel(s.px, s.py);
            let t_norm = time_map.normalize(s.frame as f64, offset);
            let (rgb, gradients) = ray_with_gradients(
                field,
                decoders,
                &pose,
                init_pose,
                &delta,
                &intr,
                (s.px as f64 + 0.5, s.py as f64 + 0.5),
                t_norm,
                render,
                level_weights,
                if render.jitter { Some(&s.jitter) } else { None },
                &gt,
                scale,
                (&mut sink_field, &mut sink_dec),
                &mut scratch,
            );
            loss += (rgb - gt).norm_squared();
            for i in 0..6 {
                d_delta[i] += gradients.d_delta[i];
            }
            d_offset += gradients.d_t * time_map.d_offset();
        }
        loss /= kept.len() as f64;
        if loss < best.0 {
            best = (loss, delta, offset);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > 60 {
                diverged = true;
                break;
            }
        }
        adam_pose.step(&mut delta, &d_delta);
        adam_offset.step(std::slice::from_mut(&mut offset), &[d_offset]);
    }

    let (best_loss, best_delta, best_offset) = best;
    Ok(TestTimeResult {
        pose: pose_from_delta(init_pose, &best_delta),
        offset: best_offset,
        best_loss,
        diverged,
    })
}

/// Renders a full image from the field, row-parallel.
pub fn render_field_image(
    field: &PlaneField,
    decoders: &Decoders,
    level_weights: &[f64],
    render: &RenderConfig,
    pose: &CameraPose,
    intr: &crate::posealign::Intrinsics,
    t_norm: f64,
) -> Image {
    use rayon::prelude::*;
    let rows: Vec<Vec<Vector3<f64>>> = (0..intr.height)
        .into_par_iter()
        .map(|py| {
            let mut scratch = RenderScratch::new(field, decoders, render.samples_per_ray);
            (0..intr.width)
                .map(|px| {
                    let (o, d) = crate::planefield::camera_ray(
                        pose,
                        intr,
                        px as f64 + 0.5,
                        py as f64 + 0.5,
                    )
                    .expect("finite intrinsics");
                    render_ray(
                        field,
                        decoders,
                        &o,
                        &d,
                        t_norm,
                        render,
                        level_weights,
                        None,
                        &mut scratch,
                    )
                    .rgb
                })
                .collect()
        })
        .collect();
    let mut image = Image::new(intr.width, intr.height);
    for (py, row) in rows.into_iter().enumerate() {
        for (px, rgb) in row.into_iter().enumerate() {
            *image.pixel_mut(px, py) = rgb;
        }
    }
    image
}
