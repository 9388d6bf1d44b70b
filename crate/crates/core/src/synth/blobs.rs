//! Renderable stand-in scene: soft Gaussian density blobs centered on
//! skeleton joints, volume-rendered analytically with a fine fixed
//! quadrature. This renderer is independent of the plane-field renderer and
//! provides the photometric ground truth for refinement tests.

use crate::io::Image;
use crate::posealign::{CameraPose, CameraTrajectory, Intrinsics};
use crate::skeleton::{HEAD, LEFT_ANKLE, LEFT_WRIST, PELVIS, RIGHT_ANKLE, RIGHT_WRIST};
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

/// One emissive blob attached to a skeleton joint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub joint: usize,
    pub color: Vector3<f64>,
}

/// Blob-scene parameters shared by all frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobScene {
    pub blobs: Vec<Blob>,
    pub background: Vector3<f64>,
    pub radius: f64,
    pub density_peak: f64,
    pub quadrature_samples: usize,
}

impl BlobScene {
    /// Six blobs per human on extremities and torso, distinct colors.
    pub fn standard(n_humans: usize) -> Self {
        let palette = [
            Vector3::new(0.95, 0.25, 0.20),
            Vector3::new(0.20, 0.85, 0.30),
            Vector3::new(0.25, 0.40, 0.95),
            Vector3::new(0.95, 0.85, 0.20),
            Vector3::new(0.85, 0.30, 0.90),
            Vector3::new(0.25, 0.90, 0.90),
        ];
        let joints = [PELVIS, HEAD, LEFT_WRIST, RIGHT_WRIST, LEFT_ANKLE, RIGHT_ANKLE];
        let mut blobs = Vec::new();
        for k in 0..n_humans {
            for (b, &joint) in joints.iter().enumerate() {
                blobs.push(Blob {
                    joint,
                    color: palette[(b + k) % palette.len()],
                });
            }
        }
        Self {
            blobs,
            background: Vector3::new(0.12, 0.12, 0.16),
            radius: 0.22,
            density_peak: 24.0,
            quadrature_samples: 96,
        }
    }

    /// Density and color fields at a point, given blob centers (one entry per
    /// blob, in the same order; for K humans pass the concatenated joints).
    fn density_color(&self, x: &Vector3<f64>, centers: &[Vector3<f64>]) -> (f64, Vector3<f64>) {
        let inv_two_r2 = 1.0 / (2.0 * self.radius * self.radius);
        let mut sigma = 0.0;
        let mut color_acc = Vector3::zeros();
        let mut weight_acc = 0.0;
        for (blob, center) in self.blobs.iter().zip(centers) {
            let d2 = (x - center).norm_squared();
            let w = (-d2 * inv_two_r2).exp();
            sigma += self.density_peak * w;
            color_acc += w * blob.color;
            weight_acc += w;
        }
        let eps = 1e-9;
        let color = (color_acc + eps * self.background) / (weight_acc + eps);
        (sigma, color)
    }

    /// Analytic volume render of one ray by midpoint quadrature.
    fn render_ray(
        &self,
        origin: &Vector3<f64>,
        dir: &Vector3<f64>,
        near: f64,
        far: f64,
        centers: &[Vector3<f64>],
    ) -> Vector3<f64> {
        let n = self.quadrature_samples;
        let delta = (far - near) / n as f64;
        let mut t = 1.0f64;
        let mut rgb = Vector3::zeros();
        for k in 0..n {
            let p = near + (k as f64 + 0.5) * delta;
            let x = origin + dir * p;
            let (sigma, color) = self.density_color(&x, centers);
            let t_next = t * (-sigma * delta).exp();
            rgb += (t - t_next) * color;
            t = t_next;
            if t < 1e-8 {
                break;
            }
        }
        rgb + t * self.background
    }

    /// Renders the full image of one camera with blob centers at `centers`.
    pub fn render_image(
        &self,
        pose: &CameraPose,
        intrinsics: &Intrinsics,
        centers: &[Vector3<f64>],
    ) -> Image {
        let origin = pose.center();
        // quadrature window wide enough to cover the scene from this camera
        let dist = centers
            .iter()
            .fold(0.0f64, |acc, c| acc.max((c - origin).norm()));
        let near = ((dist - 4.0).max(0.05)).min(1.0);
        let far = dist + 4.0;
        let mut image = Image::new(intrinsics.width, intrinsics.height);
        for row in 0..intrinsics.height {
            for col in 0..intrinsics.width {
                let u = col as f64 + 0.5;
                let v = row as f64 + 0.5;
                let d_cam = Vector3::new(
                    (u - intrinsics.cx) / intrinsics.fx,
                    (v - intrinsics.cy) / intrinsics.fy,
                    1.0,
                );
                let dir = (pose.rotation.transpose() * d_cam).normalize();
                *image.pixel_mut(col, row) = self.render_ray(&origin, &dir, near, far, centers);
            }
        }
        image
    }
}

/// Static ring rig around the scene center with varied heights (keeps the
/// camera centers non-coplanar for alignment).
pub fn ring_rig(
    n_cameras: usize,
    image_size: usize,
    center: Vector3<f64>,
    radius: f64,
) -> Vec<CameraTrajectory> {
    let image_size = image_size.max(2);
    let intrinsics = Intrinsics {
        fx: image_size as f64,
        fy: image_size as f64,
        cx: image_size as f64 / 2.0,
        cy: image_size as f64 / 2.0,
        width: image_size,
        height: image_size,
    };
    (0..n_cameras)
        .map(|i| {
            let angle = std::f64::consts::TAU * i as f64 / n_cameras as f64;
            let height = 1.0 + 1.1 * (2.4 * i as f64).sin();
            let position = center + Vector3::new(radius * angle.cos(), radius * angle.sin(), height);
            let pose = look_at(position, center, 0);
            CameraTrajectory {
                camera_id: format!("cam{i:02}"),
                poses: vec![pose],
                intrinsics,
            }
        })
        .collect()
}

/// World-to-camera pose looking from `eye` toward `target`, world +z up,
/// image v axis pointing down.
pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>, timestamp: i64) -> CameraPose {
    let forward = (target - eye).normalize();
    let up = Vector3::new(0.0, 0.0, 1.0);
    let mut right = forward.cross(&up);
    if right.norm() < 1e-9 {
        right = forward.cross(&Vector3::new(0.0, 1.0, 0.0));
    }
    let right = right.normalize();
    let down = forward.cross(&right);
    let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
    CameraPose::from_center(rotation, eye, timestamp)
}
