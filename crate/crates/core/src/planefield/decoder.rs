//! Tiny fully-connected decoders: density (plus an intermediate feature) and
//! view-dependent color, with hand-written backward passes.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Four-lane unrolled dot product: independent accumulator chains let the
/// CPU overlap the FP additions (a plain `zip().sum()` is one serial chain).
/// The summation order is fixed, so results stay deterministic.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (xa, xb) in ca.zip(cb) {
        acc[0] += xa[0] * xb[0];
        acc[1] += xa[1] * xb[1];
        acc[2] += xa[2] * xb[2];
        acc[3] += xa[3] * xb[3];
    }
    let mut tail = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (xa, xb) in ra.iter().zip(rb) {
        tail += xa * xb;
    }
    tail
}

/// One linear layer, weights row-major `[out][in]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Dense {
    fn new<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
        Self {
            w: (0..in_dim * out_dim)
                .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * bound)
                .collect(),
            b: vec![0.0; out_dim],
            in_dim,
            out_dim,
        }
    }

    #[inline]
    fn forward(&self, x: &[f64], out: &mut [f64]) {
        for (o, (row, bias)) in self.w.chunks_exact(self.in_dim).zip(&self.b).enumerate() {
            out[o] = bias + dot(row, x);
        }
    }

    #[inline]
    fn backward(&self, x: &[f64], d_out: &[f64], d_x: &mut [f64], gw: &mut [f64], gb: &mut [f64]) {
        d_x.fill(0.0);
        for (o, row) in self.w.chunks_exact(self.in_dim).enumerate() {
            let dy = d_out[o];
            gb[o] += dy;
            let grow = &mut gw[o * self.in_dim..(o + 1) * self.in_dim];
            for i in 0..self.in_dim {
                grow[i] += dy * x[i];
                d_x[i] += dy * row[i];
            }
        }
    }
}

/// Multi-layer perceptron with tanh between layers and a linear head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    pub fn new<R: Rng>(dims: &[usize], rng: &mut R) -> Self {
        Self {
            layers: dims.windows(2).map(|d| Dense::new(d[0], d[1], rng)).collect(),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim
    }

    /// Total scratch length for one forward pass: the input plus every
    /// layer's (activated) output.
    pub fn cache_len(&self) -> usize {
        self.in_dim() + self.layers.iter().map(|l| l.out_dim).sum::<usize>()
    }

    /// Offset of the final output inside the cache.
    pub fn out_offset(&self) -> usize {
        self.cache_len() - self.out_dim()
    }

    /// Forward pass; `cache` receives the input and all layer outputs
    /// (post-tanh for hidden layers, raw for the head).
    pub fn forward(&self, x: &[f64], cache: &mut [f64]) {
        debug_assert_eq!(cache.len(), self.cache_len());
        cache[..x.len()].copy_from_slice(x);
        let mut off = 0;
        for (k, layer) in self.layers.iter().enumerate() {
            let (inp, rest) = cache.split_at_mut(off + layer.in_dim);
            let out = &mut rest[..layer.out_dim];
            layer.forward(&inp[off..], out);
            if k + 1 != self.layers.len() {
                for v in out.iter_mut() {
                    *v = v.tanh();
                }
            }
            off += layer.in_dim;
        }
    }

    /// Width of the widest interface, for sizing backward scratch.
    pub fn max_width(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.in_dim.max(l.out_dim))
            .max()
            .unwrap_or(0)
    }

    /// Batched forward over `rows` inputs. The caller writes the inputs into
    /// the first `rows * in_dim` slots of `cache` (row-major); every layer's
    /// activated output lands in the following segments.
    pub fn forward_batch(&self, rows: usize, cache: &mut [f64]) {
        debug_assert_eq!(cache.len(), rows * self.cache_len());
        let mut off = 0;
        for (k, layer) in self.layers.iter().enumerate() {
            let (inp, rest) = cache.split_at_mut(off + rows * layer.in_dim);
            let x = &inp[off..];
            let out = &mut rest[..rows * layer.out_dim];
            let (id, od) = (layer.in_dim, layer.out_dim);
            // weight rows stream once per layer; per-row dot products stay
            // in cache
            for (o, (wrow, bias)) in layer.w.chunks_exact(id).zip(&layer.b).enumerate() {
                for r in 0..rows {
                    let xr = &x[r * id..(r + 1) * id];
                    out[r * od + o] = bias + dot(wrow, xr);
                }
            }
            if k + 1 != self.layers.len() {
                for v in out.iter_mut() {
                    *v = v.tanh();
                }
            }
            off += rows * id;
        }
    }

    /// Batched backward matching [`forward_batch`]. `d_out` is `rows x
    /// out_dim`; parameter gradients accumulate once per (weight, batch)
    /// rather than per sample. `work` needs `4 * rows * max_width()` slots.
    pub fn backward_batch(
        &self,
        rows: usize,
        d_out: &[f64],
        cache: &[f64],
        d_in: &mut [f64],
        grads: &mut MlpGrads,
        work: &mut [f64],
    ) {
        const MAX_LAYERS: usize = 8;
        debug_assert!(self.layers.len() <= MAX_LAYERS);
        let mut offsets = [0usize; MAX_LAYERS + 1];
        for (k, layer) in self.layers.iter().enumerate() {
            offsets[k + 1] = offsets[k] + rows * layer.in_dim;
        }
        let width = rows * self.max_width();
        let (dy_buf, rest) = work.split_at_mut(width);
        let (dx_buf, rest) = rest.split_at_mut(width);
        let (xt_buf, dyt_buf) = rest.split_at_mut(width);
        dy_buf[..d_out.len()].copy_from_slice(d_out);

        for (k, layer) in self.layers.iter().enumerate().rev() {
            let (id, od) = (layer.in_dim, layer.out_dim);
            let x = &cache[offsets[k]..offsets[k] + rows * id];
            let dy = &mut dy_buf[..rows * od];
            if k + 1 != self.layers.len() {
                let act = &cache[offsets[k + 1]..offsets[k + 1] + rows * od];
                for (d, a) in dy.iter_mut().zip(act) {
                    *d *= 1.0 - a * a;
                }
            }
            // transpose to column-major so the row reductions below run over
            // contiguous memory
            for r in 0..rows {
                let xr = &x[r * id..(r + 1) * id];
                for (i, v) in xr.iter().enumerate() {
                    xt_buf[i * rows + r] = *v;
                }
                let dyr = &dy[r * od..(r + 1) * od];
                for (o, v) in dyr.iter().enumerate() {
                    dyt_buf[o * rows + r] = *v;
                }
            }
            let (gw, gb) = &mut grads.layers[k];
            for o in 0..od {
                let dyo = &dyt_buf[o * rows..(o + 1) * rows];
                gb[o] += dyo.iter().sum::<f64>();
                let grow = &mut gw[o * id..(o + 1) * id];
                for i in 0..id {
                    let xi = &xt_buf[i * rows..(i + 1) * rows];
                    grow[i] += dot(dyo, xi);
                }
            }
            let dx = &mut dx_buf[..rows * id];
            dx.fill(0.0);
            for o in 0..od {
                let wrow = &layer.w[o * id..(o + 1) * id];
                for r in 0..rows {
                    let dyro = dyt_buf[o * rows + r];
                    let dxr = &mut dx[r * id..(r + 1) * id];
                    for (dxi, wi) in dxr.iter_mut().zip(wrow) {
                        *dxi += dyro * wi;
                    }
                }
            }
            dy_buf[..rows * id].copy_from_slice(dx);
        }
        d_in.copy_from_slice(&dy_buf[..rows * self.in_dim()]);
    }

    /// Backward pass given `d_out` at the head; accumulates parameter
    /// gradients into `grads` and writes the input gradient into `d_in`.
    /// `work` must hold at least `2 * max_width()` scratch values.
    pub fn backward(
        &self,
        d_out: &[f64],
        cache: &[f64],
        d_in: &mut [f64],
        grads: &mut MlpGrads,
        work: &mut [f64],
    ) {
        const MAX_LAYERS: usize = 8;
        debug_assert!(self.layers.len() <= MAX_LAYERS);
        let mut offsets = [0usize; MAX_LAYERS + 1];
        for (k, layer) in self.layers.iter().enumerate() {
            offsets[k + 1] = offsets[k] + layer.in_dim;
        }

        let width = self.max_width();
        let (dy_buf, dx_buf) = work.split_at_mut(width);
        dy_buf[..d_out.len()].copy_from_slice(d_out);
        let mut dy_len = d_out.len();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let x = &cache[offsets[k]..offsets[k] + layer.in_dim];
            let dy = &mut dy_buf[..dy_len];
            if k + 1 != self.layers.len() {
                // chain through tanh via the stored post-activation
                let act = &cache[offsets[k + 1]..offsets[k + 1] + layer.out_dim];
                for (d, a) in dy.iter_mut().zip(act) {
                    *d *= 1.0 - a * a;
                }
            }
            let d_x = &mut dx_buf[..layer.in_dim];
            let (gw, gb) = &mut grads.layers[k];
            layer.backward(x, dy, d_x, gw, gb);
            dy_buf[..layer.in_dim].copy_from_slice(d_x);
            dy_len = layer.in_dim;
        }
        d_in.copy_from_slice(&dy_buf[..dy_len]);
    }
}

/// Gradient buffers mirroring an [`Mlp`].
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl MlpGrads {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Self {
            layers: mlp
                .layers
                .iter()
                .map(|l| (vec![0.0; l.w.len()], vec![0.0; l.b.len()]))
                .collect(),
        }
    }

    pub fn clear(&mut self) {
        for (w, b) in &mut self.layers {
            w.fill(0.0);
            b.fill(0.0);
        }
    }

    pub fn add_assign(&mut self, other: &MlpGrads) {
        for ((aw, ab), (bw, bb)) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in aw.iter_mut().zip(bw) {
                *x += y;
            }
            for (x, y) in ab.iter_mut().zip(bb) {
                *x += y;
            }
        }
    }
}

/// Density and color decoders plus the direction positional encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decoders {
    pub density: Mlp,
    pub color: Mlp,
    pub f_hat_dim: usize,
    pub n_freq: usize,
}

impl Decoders {
    pub fn new(feature_in: usize, hidden: usize, f_hat_dim: usize, n_freq: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dir_dim = 3 + 6 * n_freq;
        Self {
            density: Mlp::new(&[feature_in, hidden, hidden, 1 + f_hat_dim], &mut rng),
            color: Mlp::new(&[f_hat_dim + dir_dim, hidden, hidden, 3], &mut rng),
            f_hat_dim,
            n_freq,
        }
    }

    pub fn dir_enc_dim(&self) -> usize {
        3 + 6 * self.n_freq
    }

    /// Positional encoding of a (unit) direction: the raw vector followed by
    /// sin/cos at doubling frequencies.
    pub fn encode_direction(&self, d: &Vector3<f64>, out: &mut [f64]) {
        out[0] = d.x;
        out[1] = d.y;
        out[2] = d.z;
        let mut off = 3;
        let mut freq = 1.0;
        for _ in 0..self.n_freq {
            for a in 0..3 {
                out[off + a] = (freq * d[a]).sin();
                out[off + 3 + a] = (freq * d[a]).cos();
            }
            off += 6;
            freq *= 2.0;
        }
    }

    /// Direction gradient of the encoding given the encoding gradient.
    pub fn encode_direction_backward(&self, d: &Vector3<f64>, d_enc: &[f64]) -> Vector3<f64> {
        let mut g = Vector3::new(d_enc[0], d_enc[1], d_enc[2]);
        let mut off = 3;
        let mut freq = 1.0f64;
        for _ in 0..self.n_freq {
            for a in 0..3 {
                g[a] += d_enc[off + a] * freq * (freq * d[a]).cos();
                g[a] -= d_enc[off + 3 + a] * freq * (freq * d[a]).sin();
            }
            off += 6;
            freq *= 2.0;
        }
        g
    }

    /// Stand-alone density/color decode of a fused feature and a unit view
    /// direction. Density is view-independent by construction.
    pub fn decode(&self, feature: &[f64], direction: &Vector3<f64>) -> (f64, Vector3<f64>) {
        let mut dcache = vec![0.0; self.density.cache_len()];
        self.density.forward(feature, &mut dcache);
        let dout = &dcache[self.density.out_offset()..];
        let sigma = softplus(dout[0]);
        let f_hat = &dout[1..];

        let mut cin = vec![0.0; self.color.in_dim()];
        cin[..self.f_hat_dim].copy_from_slice(f_hat);
        self.encode_direction(direction, &mut cin[self.f_hat_dim..]);
        let mut ccache = vec![0.0; self.color.cache_len()];
        self.color.forward(&cin, &mut ccache);
        let cout = &ccache[self.color.out_offset()..];
        (
            sigma,
            Vector3::new(sigmoid(cout[0]), sigmoid(cout[1]), sigmoid(cout[2])),
        )
    }
}

/// Gradients for both decoders.
#[derive(Debug, Clone)]
pub struct DecoderGrads {
    pub density: MlpGrads,
    pub color: MlpGrads,
}

impl DecoderGrads {
    pub fn zeros_like(dec: &Decoders) -> Self {
        Self {
            density: MlpGrads::zeros_like(&dec.density),
            color: MlpGrads::zeros_like(&dec.color),
        }
    }

    pub fn clear(&mut self) {
        self.density.clear();
        self.color.clear();
    }

    pub fn add_assign(&mut self, other: &DecoderGrads) {
        self.density.add_assign(&other.density);
        self.color.add_assign(&other.color);
    }
}
