//! Ray generation, stratified sampling and differentiable volume rendering
//! over the plane field, with a hand-written backward pass through the
//! compositing, the decoders and the plane interpolation.

use super::decoder::{sigmoid, softplus, DecoderGrads, Decoders};
use super::grid::{FieldGrads, PlaneField, PlaneTap, PLANES_PER_LEVEL};
use crate::error::{Error, Result};
use crate::posealign::{CameraPose, Intrinsics};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

/// Ray sampling configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderConfig {
    pub samples_per_ray: usize,
    pub near: f64,
    pub far: f64,
    pub background: Vector3<f64>,
    /// Stratified jitter inside each depth bin; midpoints when disabled.
    pub jitter: bool,
}

impl RenderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_ray < 1 {
            return Err(Error::InputError("samples_per_ray must be >= 1".into()));
        }
        if !(self.near < self.far) {
            return Err(Error::InputError(format!(
                "near ({}) must be < far ({})",
                self.near, self.far
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn delta(&self) -> f64 {
        (self.far - self.near) / self.samples_per_ray as f64
    }
}

/// World ray through a pixel: origin is the camera center, direction is the
/// unit back-projection of the pixel coordinate.
pub fn camera_ray(
    pose: &CameraPose,
    intrinsics: &Intrinsics,
    u: f64,
    v: f64,
) -> Result<(Vector3<f64>, Vector3<f64>)> {
    let d_cam = Vector3::new(
        (u - intrinsics.cx) / intrinsics.fx,
        (v - intrinsics.cy) / intrinsics.fy,
        1.0,
    );
    let d_world = pose.rotation.transpose() * d_cam;
    let norm = d_world.norm();
    if !(norm > 1e-12) {
        return Err(Error::RayConstruction(format!(
            "degenerate direction for pixel ({u}, {v})"
        )));
    }
    Ok((pose.center(), d_world / norm))
}

/// Output of one rendered ray.
#[derive(Debug, Clone)]
pub struct RayRender {
    pub rgb: Vector3<f64>,
    pub weights: Vec<f64>,
    pub transmittance: f64,
}

/// Gradients of a scalar loss with respect to the ray inputs.
#[derive(Debug, Clone, Copy, Default)]
pub struct RayGradients {
    pub d_origin: Vector3<f64>,
    pub d_dir: Vector3<f64>,
    pub d_t: f64,
}

/// Preallocated per-ray working memory; reuse across rays.
pub struct RenderScratch {
    n_samples: usize,
    levels: usize,
    f_dim: usize,
    // forward caches, per sample
    qs: Vec<[f64; 4]>,
    depths: Vec<f64>,
    psi: Vec<f64>,
    taps: Vec<PlaneTap>,
    // batched decoder caches: per-layer segments of n_samples rows each
    dcache: Vec<f64>,
    ccache: Vec<f64>,
    sigma: Vec<f64>,
    sigma_raw: Vec<f64>,
    colors: Vec<Vector3<f64>>,
    trans: Vec<f64>,
    // backward work buffers
    work: Vec<f64>,
    d_fused: Vec<f64>,
    d_level: Vec<f64>,
    d_cin: Vec<f64>,
    d_dout: Vec<f64>,
    d_cout: Vec<f64>,
    dir_enc: Vec<f64>,
    d_enc: Vec<f64>,
}

impl RenderScratch {
    pub fn new(field: &PlaneField, decoders: &Decoders, n_samples: usize) -> Self {
        let levels = field.levels();
        let f_dim = field.feature_dim;
        let fused_dim = levels * f_dim;
        let work_len =
            4 * n_samples * decoders.density.max_width().max(decoders.color.max_width());
        Self {
            n_samples,
            levels,
            f_dim,
            qs: vec![[0.0; 4]; n_samples],
            depths: vec![0.0; n_samples],
            psi: vec![0.0; n_samples * levels * PLANES_PER_LEVEL * f_dim],
            taps: vec![PlaneTap::default(); n_samples * levels * PLANES_PER_LEVEL],
            dcache: vec![0.0; n_samples * decoders.density.cache_len()],
            ccache: vec![0.0; n_samples * decoders.color.cache_len()],
            sigma: vec![0.0; n_samples],
            sigma_raw: vec![0.0; n_samples],
            colors: vec![Vector3::zeros(); n_samples],
            trans: vec![0.0; n_samples + 1],
            work: vec![0.0; work_len],
            d_fused: vec![0.0; n_samples * fused_dim],
            d_level: vec![0.0; f_dim],
            d_cin: vec![0.0; n_samples * decoders.color.in_dim()],
            d_dout: vec![0.0; n_samples * (1 + decoders.f_hat_dim)],
            d_cout: vec![0.0; n_samples * 3],
            dir_enc: vec![0.0; decoders.dir_enc_dim()],
            d_enc: vec![0.0; decoders.dir_enc_dim()],
        }
    }
}

/// Transmittance compositing of per-sample densities and colors with a
/// constant inter-sample spacing `delta` and a background color.
pub fn composite(
    sigmas: &[f64],
    colors: &[Vector3<f64>],
    delta: f64,
    background: &Vector3<f64>,
) -> RayRender {
    let mut rgb = Vector3::zeros();
    let mut t = 1.0f64;
    let mut weights = Vec::with_capacity(sigmas.len());
    for (&s, c) in sigmas.iter().zip(colors) {
        let t_next = t * (-s * delta).exp();
        let w = t - t_next;
        rgb += w * c;
        weights.push(w);
        t = t_next;
    }
    rgb += t * background;
    RayRender {
        rgb,
        weights,
        transmittance: t,
    }
}

fn forward(
    field: &PlaneField,
    decoders: &Decoders,
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    t_query: f64,
    cfg: &RenderConfig,
    level_weights: &[f64],
    jitter: Option<&[f64]>,
    s: &mut RenderScratch,
) -> RayRender {
    let n = cfg.samples_per_ray;
    debug_assert_eq!(s.n_samples, n);
    debug_assert_eq!(level_weights.len(), s.levels);
    let delta = cfg.delta();
    let fused_dim = s.levels * s.f_dim;
    let cin_dim = decoders.color.in_dim();
    let dout_dim = decoders.density.out_dim();
    let dout_off = n * (decoders.density.cache_len() - dout_dim);
    let cout_off = n * (decoders.color.cache_len() - 3);

    decoders.encode_direction(dir, &mut s.dir_enc);

    // sample positions and fused features (written straight into the density
    // decoder's batched input segment)
    for k in 0..n {
        let j = jitter.map_or(0.5, |js| js[k]);
        let p = cfg.near + (k as f64 + j) * delta;
        s.depths[k] = p;
        let x = origin + dir * p;
        let q = [x.x, x.y, x.z, t_query];
        s.qs[k] = q;

        let fused = &mut s.dcache[k * fused_dim..(k + 1) * fused_dim];
        fused.fill(0.0);
        for (l, &w) in level_weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let psi = &mut s.psi[(k * s.levels + l) * PLANES_PER_LEVEL * s.f_dim
                ..(k * s.levels + l + 1) * PLANES_PER_LEVEL * s.f_dim];
            let taps = &mut s.taps
                [(k * s.levels + l) * PLANES_PER_LEVEL..(k * s.levels + l + 1) * PLANES_PER_LEVEL];
            let out = &mut s.d_level;
            field.sample_level(&q, l, out, Some((psi, taps)));
            for f in 0..s.f_dim {
                fused[l * s.f_dim + f] = w * out[f];
            }
        }
    }

    // density decode, batched over the samples
    decoders.density.forward_batch(n, &mut s.dcache);
    for k in 0..n {
        let raw = s.dcache[dout_off + k * dout_dim];
        s.sigma_raw[k] = raw;
        s.sigma[k] = softplus(raw);
    }

    // color decode, batched
    for k in 0..n {
        let f_hat = &s.dcache[dout_off + k * dout_dim + 1..dout_off + (k + 1) * dout_dim];
        let cin = &mut s.ccache[k * cin_dim..(k + 1) * cin_dim];
        cin[..decoders.f_hat_dim].copy_from_slice(f_hat);
        cin[decoders.f_hat_dim..].copy_from_slice(&s.dir_enc);
    }
    decoders.color.forward_batch(n, &mut s.ccache);
    for k in 0..n {
        let cout = &s.ccache[cout_off + k * 3..cout_off + (k + 1) * 3];
        s.colors[k] = Vector3::new(sigmoid(cout[0]), sigmoid(cout[1]), sigmoid(cout[2]));
    }

    // compositing, keeping per-sample transmittance for the backward pass
    let mut rgb = Vector3::zeros();
    let mut t = 1.0f64;
    let mut weights = Vec::with_capacity(n);
    for k in 0..n {
        s.trans[k] = t;
        let t_next = t * (-s.sigma[k] * delta).exp();
        let w = t - t_next;
        rgb += w * s.colors[k];
        weights.push(w);
        t = t_next;
    }
    s.trans[n] = t;
    rgb += t * cfg.background;
    RayRender {
        rgb,
        weights,
        transmittance: t,
    }
}

/// Renders one ray: stratified samples in `[near, far]`, density/color
/// decoding at `(x_k, t_query)`, transmittance compositing over a constant
/// background.
#[allow(clippy::too_many_arguments)]
pub fn render_ray(
    field: &PlaneField,
    decoders: &Decoders,
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    t_query: f64,
    cfg: &RenderConfig,
    level_weights: &[f64],
    jitter: Option<&[f64]>,
    scratch: &mut RenderScratch,
) -> RayRender {
    forward(
        field,
        decoders,
        origin,
        dir,
        t_query,
        cfg,
        level_weights,
        jitter,
        scratch,
    )
}

/// Backward pass for the most recent [`render_ray`] call on this scratch:
/// backpropagates `d_rgb` into the plane features, the decoder parameters
/// and the ray inputs (origin, unit direction, query time).
pub fn render_ray_backward(
    field: &PlaneField,
    decoders: &Decoders,
    dir: &Vector3<f64>,
    cfg: &RenderConfig,
    level_weights: &[f64],
    d_rgb: &Vector3<f64>,
    field_grads: &mut FieldGrads,
    decoder_grads: &mut DecoderGrads,
    s: &mut RenderScratch,
) -> RayGradients {
    let n = cfg.samples_per_ray;
    let delta = cfg.delta();
    let fused_dim = s.levels * s.f_dim;
    let cin_dim = decoders.color.in_dim();
    let dout_dim = decoders.density.out_dim();
    let cout_off = n * (decoders.color.cache_len() - 3);
    let mut grad = RayGradients::default();

    // d loss / d sigma_k via a reverse suffix accumulation:
    //   dL/du_k = dw_k * T_k e^{-u_k} - sum_{j>k} dw_j w_j - dT_fin * T_fin
    let d_t_fin = d_rgb.dot(&cfg.background);
    let mut suffix = d_t_fin * s.trans[n];
    s.d_enc.fill(0.0);

    // per-sample upstream gradients at the decoder heads
    for k in (0..n).rev() {
        let w_k = s.trans[k] - s.trans[k + 1];
        let d_w = d_rgb.dot(&s.colors[k]);
        let e = (-s.sigma[k] * delta).exp();
        let d_sigma = delta * (d_w * s.trans[k] * e - suffix);
        suffix += d_w * w_k;

        let cout = &s.ccache[cout_off + k * 3..cout_off + (k + 1) * 3];
        s.d_cout[k * 3] = w_k * d_rgb.x * sigmoid(cout[0]) * (1.0 - sigmoid(cout[0]));
        s.d_cout[k * 3 + 1] = w_k * d_rgb.y * sigmoid(cout[1]) * (1.0 - sigmoid(cout[1]));
        s.d_cout[k * 3 + 2] = w_k * d_rgb.z * sigmoid(cout[2]) * (1.0 - sigmoid(cout[2]));
        s.d_dout[k * dout_dim] = d_sigma * sigmoid(s.sigma_raw[k]);
    }

    // color backward (batched): sigmoid head gradients through the MLP
    decoders.color.backward_batch(
        n,
        &s.d_cout,
        &s.ccache,
        &mut s.d_cin,
        &mut decoder_grads.color,
        &mut s.work,
    );
    for k in 0..n {
        let d_cin = &s.d_cin[k * cin_dim..(k + 1) * cin_dim];
        for (acc, v) in s.d_enc.iter_mut().zip(&d_cin[decoders.f_hat_dim..]) {
            *acc += v;
        }
        s.d_dout[k * dout_dim + 1..(k + 1) * dout_dim]
            .copy_from_slice(&d_cin[..decoders.f_hat_dim]);
    }

    // density backward (batched): softplus head plus the color path into
    // the intermediate feature
    decoders.density.backward_batch(
        n,
        &s.d_dout,
        &s.dcache,
        &mut s.d_fused,
        &mut decoder_grads.density,
        &mut s.work,
    );

    // fused features -> plane entries and query points
    for k in 0..n {
        let d_fused = &s.d_fused[k * fused_dim..(k + 1) * fused_dim];
        let mut d_q = [0.0; 4];
        for (l, &w) in level_weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for f in 0..s.f_dim {
                s.d_level[f] = w * d_fused[l * s.f_dim + f];
            }
            let psi = &s.psi[(k * s.levels + l) * PLANES_PER_LEVEL * s.f_dim
                ..(k * s.levels + l + 1) * PLANES_PER_LEVEL * s.f_dim];
            let taps = &s.taps
                [(k * s.levels + l) * PLANES_PER_LEVEL..(k * s.levels + l + 1) * PLANES_PER_LEVEL];
            field.sample_level_backward(l, &s.d_level, psi, taps, field_grads, &mut d_q);
        }
        let d_x = Vector3::new(d_q[0], d_q[1], d_q[2]);
        grad.d_origin += d_x;
        grad.d_dir += d_x * s.depths[k];
        grad.d_t += d_q[3];
    }

    grad.d_dir += decoders.encode_direction_backward(dir, &s.d_enc);
    grad
}

/// Renders one ray and backpropagates `d_rgb` (forward plus
/// [`render_ray_backward`] in one call).
#[allow(clippy::too_many_arguments)]
pub fn render_ray_grad(
    field: &PlaneField,
    decoders: &Decoders,
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    t_query: f64,
    cfg: &RenderConfig,
    level_weights: &[f64],
    jitter: Option<&[f64]>,
    d_rgb: &Vector3<f64>,
    field_grads: &mut FieldGrads,
    decoder_grads: &mut DecoderGrads,
    scratch: &mut RenderScratch,
) -> (RayRender, RayGradients) {
    let out = forward(
        field,
        decoders,
        origin,
        dir,
        t_query,
        cfg,
        level_weights,
        jitter,
        scratch,
    );
    let grad = render_ray_backward(
        field,
        decoders,
        dir,
        cfg,
        level_weights,
        d_rgb,
        field_grads,
        decoder_grads,
        scratch,
    );
    (out, grad)
}

/// Mean over the batch of squared per-pixel L2 residuals.
pub fn photometric_loss(rendered: &[Vector3<f64>], reference: &[Vector3<f64>]) -> f64 {
    debug_assert_eq!(rendered.len(), reference.len());
    if rendered.is_empty() {
        return 0.0;
    }
    rendered
        .iter()
        .zip(reference)
        .map(|(a, b)| (a - b).norm_squared())
        .sum::<f64>()
        / rendered.len() as f64
}
