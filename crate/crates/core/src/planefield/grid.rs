//! Multiresolution plane grids and spatiotemporal feature sampling.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const PLANES_PER_LEVEL: usize = 6;

/// Axis pairs of the six planes; 0..2 are x, y, z and 3 is t.
/// Order: xy, yz, zx (space-only), then xt, yt, zt (space-time).
pub const PLANE_AXES: [(usize, usize); PLANES_PER_LEVEL] =
    [(0, 1), (1, 2), (2, 0), (0, 3), (1, 3), (2, 3)];

/// Axis-aligned scene bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb {
    pub fn new(min: Vector3<f64>, max: Vector3<f64>) -> Self {
        Self { min, max }
    }

    pub fn diagonal(&self) -> f64 {
        (self.max - self.min).norm()
    }

    pub fn center(&self) -> Vector3<f64> {
        (self.min + self.max) * 0.5
    }
}

/// One 2D grid of F-dimensional feature vectors, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub rows: usize,
    pub cols: usize,
    pub feature_dim: usize,
    pub data: Vec<f64>,
}

impl Plane {
    fn new(rows: usize, cols: usize, feature_dim: usize, fill: f64) -> Self {
        Self {
            rows,
            cols,
            feature_dim,
            data: vec![fill; rows * cols * feature_dim],
        }
    }

    #[inline]
    pub fn node_offset(&self, i: usize, j: usize) -> usize {
        (i * self.cols + j) * self.feature_dim
    }
}

/// The factorized 4D field: `levels x 6` planes over a scene box and the
/// time range `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneField {
    pub feature_dim: usize,
    pub spatial_res: Vec<usize>,
    pub time_res: usize,
    pub bounds: Aabb,
    pub planes: Vec<Plane>,
}

/// Interpolation footprint of one plane lookup: the four corner node offsets
/// with their bilinear weights, fractional coordinates and the chain factors
/// from world coordinates to grid coordinates (zero when clamped).
#[derive(Debug, Clone, Copy, Default)]
pub struct PlaneTap {
    pub idx: [usize; 4], // 00, 01, 10, 11 node offsets (already * feature_dim)
    pub w: [f64; 4],
    pub fu: f64,
    pub fv: f64,
    pub du_dworld: f64,
    pub dv_dworld: f64,
    pub u_axis: usize,
    pub v_axis: usize,
}

impl PlaneField {
    /// Fresh field: space-only planes uniform in [-0.1, 0.1], space-time
    /// planes at 1 (the fixed point of the sparse-transient regularizer).
    pub fn new(
        spatial_res: &[usize],
        time_res: usize,
        feature_dim: usize,
        bounds: Aabb,
        seed: u64,
    ) -> Self {
        assert!(!spatial_res.is_empty());
        assert!(spatial_res.iter().all(|&r| r >= 2) && time_res >= 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut planes = Vec::with_capacity(spatial_res.len() * PLANES_PER_LEVEL);
        for &res in spatial_res {
            for c in 0..PLANES_PER_LEVEL {
                let (rows, cols) = if c < 3 { (res, res) } else { (res, time_res) };
                let mut plane = Plane::new(rows, cols, feature_dim, 1.0);
                if c < 3 {
                    for v in plane.data.iter_mut() {
                        *v = rng.random::<f64>() * 0.2 - 0.1;
                    }
                }
                planes.push(plane);
            }
        }
        Self {
            feature_dim,
            spatial_res: spatial_res.to_vec(),
            time_res,
            bounds,
            planes,
        }
    }

    pub fn levels(&self) -> usize {
        self.spatial_res.len()
    }

    #[inline]
    pub fn plane_index(level: usize, c: usize) -> usize {
        level * PLANES_PER_LEVEL + c
    }

    pub fn plane(&self, level: usize, c: usize) -> &Plane {
        &self.planes[Self::plane_index(level, c)]
    }

    /// Normalized coordinates in [0, 1] for the four query axes; out-of-range
    /// queries clamp (training perturbations transiently leave bounds).
    #[inline]
    fn normalized(&self, q: &[f64; 4]) -> ([f64; 4], [bool; 4]) {
        let mut n = [0.0; 4];
        let mut interior = [true; 4];
        for a in 0..3 {
            let extent = self.bounds.max[a] - self.bounds.min[a];
            let raw = (q[a] - self.bounds.min[a]) / extent;
            interior[a] = (0.0..=1.0).contains(&raw);
            n[a] = raw.clamp(0.0, 1.0);
        }
        interior[3] = (0.0..=1.0).contains(&q[3]);
        n[3] = q[3].clamp(0.0, 1.0);
        (n, interior)
    }

    #[inline]
    fn axis_scale(&self, axis: usize, level: usize) -> f64 {
        // d(grid coordinate) / d(world coordinate)
        let nodes = if axis < 3 {
            self.spatial_res[level]
        } else {
            self.time_res
        };
        let extent = if axis < 3 {
            self.bounds.max[axis] - self.bounds.min[axis]
        } else {
            1.0
        };
        (nodes as f64 - 1.0) / extent
    }

    /// Bilinear tap of one plane at a normalized query.
    fn tap(&self, level: usize, c: usize, n: &[f64; 4], interior: &[bool; 4]) -> PlaneTap {
        let plane = self.plane(level, c);
        let (ua, va) = PLANE_AXES[c];
        let gu = n[ua] * (plane.rows as f64 - 1.0);
        let gv = n[va] * (plane.cols as f64 - 1.0);
        let iu = (gu.floor() as usize).min(plane.rows - 2);
        let iv = (gv.floor() as usize).min(plane.cols - 2);
        let fu = gu - iu as f64;
        let fv = gv - iv as f64;
        PlaneTap {
            idx: [
                plane.node_offset(iu, iv),
                plane.node_offset(iu, iv + 1),
                plane.node_offset(iu + 1, iv),
                plane.node_offset(iu + 1, iv + 1),
            ],
            w: [
                (1.0 - fu) * (1.0 - fv),
                (1.0 - fu) * fv,
                fu * (1.0 - fv),
                fu * fv,
            ],
            fu,
            fv,
            du_dworld: if interior[ua] { self.axis_scale(ua, level) } else { 0.0 },
            dv_dworld: if interior[va] { self.axis_scale(va, level) } else { 0.0 },
            u_axis: ua,
            v_axis: va,
        }
    }

    /// Hadamard product of the six bilinearly interpolated plane features at
    /// one level. Writes the level feature into `out` and, when requested,
    /// the per-plane interpolants `psi` (6 x F) and taps for the backward
    /// pass.
    pub fn sample_level(
        &self,
        q: &[f64; 4],
        level: usize,
        out: &mut [f64],
        mut cache: Option<(&mut [f64], &mut [PlaneTap])>,
    ) {
        let f_dim = self.feature_dim;
        debug_assert_eq!(out.len(), f_dim);
        let (n, interior) = self.normalized(q);
        out.fill(1.0);
        for c in 0..PLANES_PER_LEVEL {
            let tap = self.tap(level, c, &n, &interior);
            let data = &self.plane(level, c).data;
            if let Some((psi, taps)) = cache.as_mut() {
                let psi_c = &mut psi[c * f_dim..(c + 1) * f_dim];
                for f in 0..f_dim {
                    let v = tap.w[0] * data[tap.idx[0] + f]
                        + tap.w[1] * data[tap.idx[1] + f]
                        + tap.w[2] * data[tap.idx[2] + f]
                        + tap.w[3] * data[tap.idx[3] + f];
                    psi_c[f] = v;
                    out[f] *= v;
                }
                taps[c] = tap;
            } else {
                for f in 0..f_dim {
                    let v = tap.w[0] * data[tap.idx[0] + f]
                        + tap.w[1] * data[tap.idx[1] + f]
                        + tap.w[2] * data[tap.idx[2] + f]
                        + tap.w[3] * data[tap.idx[3] + f];
                    out[f] *= v;
                }
            }
        }
    }

    /// Plain (unweighted) level feature; the Hadamard fusion of Eq-style
    /// plane factorizations.
    pub fn sample_plane_features(&self, q: &[f64; 4], level: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.feature_dim];
        self.sample_level(q, level, &mut out, None);
        out
    }

    /// Weighted multi-level fusion: concatenation of `w_l * f_l(q)`.
    pub fn fuse_features(&self, q: &[f64; 4], level_weights: &[f64]) -> Vec<f64> {
        let f_dim = self.feature_dim;
        let mut out = vec![0.0; self.levels() * f_dim];
        let mut level_buf = vec![0.0; f_dim];
        for (l, &w) in level_weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            self.sample_level(q, l, &mut level_buf, None);
            for f in 0..f_dim {
                out[l * f_dim + f] = w * level_buf[f];
            }
        }
        out
    }

    /// Backward of `sample_level` given `d_out` (dL/d level feature):
    /// accumulates plane-entry gradients into `grads` and the query-point
    /// gradient (x, y, z, t) into `d_q`.
    pub fn sample_level_backward(
        &self,
        level: usize,
        d_out: &[f64],
        psi: &[f64],
        taps: &[PlaneTap],
        grads: &mut FieldGrads,
        d_q: &mut [f64; 4],
    ) {
        let f_dim = self.feature_dim;
        // prefix[c] = product of psi over planes < c, suffix likewise above,
        // so the exclusion product is prefix[c] * suffix[c]
        let mut prefix = [[0.0f64; 64]; PLANES_PER_LEVEL];
        let mut suffix = [[0.0f64; 64]; PLANES_PER_LEVEL];
        debug_assert!(f_dim <= 64);
        for f in 0..f_dim {
            prefix[0][f] = 1.0;
            suffix[PLANES_PER_LEVEL - 1][f] = 1.0;
        }
        for c in 1..PLANES_PER_LEVEL {
            for f in 0..f_dim {
                prefix[c][f] = prefix[c - 1][f] * psi[(c - 1) * f_dim + f];
                let cr = PLANES_PER_LEVEL - 1 - c;
                suffix[cr][f] = suffix[cr + 1][f] * psi[(cr + 1) * f_dim + f];
            }
        }
        for c in 0..PLANES_PER_LEVEL {
            let tap = &taps[c];
            let data = &self.plane(level, c).data;
            let gplane = &mut grads.planes[Self::plane_index(level, c)];
            let mut d_fu = 0.0;
            let mut d_fv = 0.0;
            for f in 0..f_dim {
                let d_psi = d_out[f] * prefix[c][f] * suffix[c][f];
                gplane[tap.idx[0] + f] += d_psi * tap.w[0];
                gplane[tap.idx[1] + f] += d_psi * tap.w[1];
                gplane[tap.idx[2] + f] += d_psi * tap.w[2];
                gplane[tap.idx[3] + f] += d_psi * tap.w[3];

                let p00 = data[tap.idx[0] + f];
                let p01 = data[tap.idx[1] + f];
                let p10 = data[tap.idx[2] + f];
                let p11 = data[tap.idx[3] + f];
                d_fu += d_psi * ((p10 - p00) * (1.0 - tap.fv) + (p11 - p01) * tap.fv);
                d_fv += d_psi * ((p01 - p00) * (1.0 - tap.fu) + (p11 - p10) * tap.fu);
            }
            d_q[tap.u_axis] += d_fu * tap.du_dworld;
            d_q[tap.v_axis] += d_fv * tap.dv_dworld;
        }
    }

    /// Initializes the planes of `level` by bilinear interpolation of the
    /// next-coarser level; a no-op at level 0.
    pub fn upsample_init(&mut self, level: usize) {
        if level == 0 {
            return;
        }
        for c in 0..PLANES_PER_LEVEL {
            let coarse = self.plane(level - 1, c).clone();
            let fine = &mut self.planes[Self::plane_index(level, c)];
            for i in 0..fine.rows {
                let gu = i as f64 / (fine.rows as f64 - 1.0) * (coarse.rows as f64 - 1.0);
                let iu = (gu.floor() as usize).min(coarse.rows - 2);
                let fu = gu - iu as f64;
                for j in 0..fine.cols {
                    let gv = j as f64 / (fine.cols as f64 - 1.0) * (coarse.cols as f64 - 1.0);
                    let iv = (gv.floor() as usize).min(coarse.cols - 2);
                    let fv = gv - iv as f64;
                    let o00 = coarse.node_offset(iu, iv);
                    let o01 = coarse.node_offset(iu, iv + 1);
                    let o10 = coarse.node_offset(iu + 1, iv);
                    let o11 = coarse.node_offset(iu + 1, iv + 1);
                    let dst = fine.node_offset(i, j);
                    for f in 0..fine.feature_dim {
                        fine.data[dst + f] = (1.0 - fu) * (1.0 - fv) * coarse.data[o00 + f]
                            + (1.0 - fu) * fv * coarse.data[o01 + f]
                            + fu * (1.0 - fv) * coarse.data[o10 + f]
                            + fu * fv * coarse.data[o11 + f];
                    }
                }
            }
        }
    }
}

/// Gradient buffers mirroring the plane layout.
#[derive(Debug, Clone)]
pub struct FieldGrads {
    pub planes: Vec<Vec<f64>>,
}

impl FieldGrads {
    pub fn zeros_like(field: &PlaneField) -> Self {
        Self {
            planes: field.planes.iter().map(|p| vec![0.0; p.data.len()]).collect(),
        }
    }

    pub fn clear(&mut self) {
        for p in &mut self.planes {
            p.fill(0.0);
        }
    }

    pub fn add_assign(&mut self, other: &FieldGrads) {
        for (a, b) in self.planes.iter_mut().zip(&other.planes) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}
