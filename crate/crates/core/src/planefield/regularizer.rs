//! Plane-grid and density regularizers with analytic gradients: spatial
//! total variation, temporal smoothness, the sparse-transient L1 pull of
//! space-time planes toward 1, and a density L1 over random scene samples.

use super::decoder::{sigmoid, softplus, DecoderGrads, Decoders};
use super::grid::{FieldGrads, PlaneField, PLANES_PER_LEVEL};
use serde::{Deserialize, Serialize};

/// Base regularizer weights (before cosine decay).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegWeights {
    pub tv_space: f64,
    pub smooth_time: f64,
    pub l1_time: f64,
    pub density_l1: f64,
}

impl Default for RegWeights {
    fn default() -> Self {
        // K-Planes-style defaults
        Self {
            tv_space: 0.001,
            smooth_time: 0.01,
            l1_time: 0.001,
            density_l1: 0.01,
        }
    }
}

impl RegWeights {
    pub fn scaled(&self, factor: f64) -> RegWeights {
        RegWeights {
            tv_space: self.tv_space * factor,
            smooth_time: self.smooth_time * factor,
            l1_time: self.l1_time * factor,
            density_l1: self.density_l1 * factor,
        }
    }
}

/// Weighted regularizer loss values.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RegLosses {
    pub tv_space: f64,
    pub smooth_time: f64,
    pub l1_time: f64,
    pub density_l1: f64,
}

impl RegLosses {
    pub fn total(&self) -> f64 {
        self.tv_space + self.smooth_time + self.l1_time + self.density_l1
    }
}

/// Computes the four regularizers, each multiplied by its (already decayed)
/// weight, accumulating gradients when buffers are supplied. Density L1 is
/// estimated over the supplied random spacetime samples with all level
/// weights at their scheduled values.
pub fn regularizer_losses(
    field: &PlaneField,
    decoders: &Decoders,
    weights: &RegWeights,
    level_weights: &[f64],
    density_samples: &[[f64; 4]],
    mut grads: Option<(&mut FieldGrads, &mut DecoderGrads)>,
) -> RegLosses {
    let mut losses = RegLosses::default();
    let f_dim = field.feature_dim;

    // spatial total variation: mean squared difference of adjacent entries
    // on space-only planes (both axes)
    if weights.tv_space > 0.0 {
        let mut total = 0.0;
        let mut count = 0usize;
        for level in 0..field.levels() {
            for c in 0..3 {
                count += 2 * field.plane(level, c).data.len()
                    - (field.plane(level, c).rows + field.plane(level, c).cols) * f_dim;
            }
        }
        let norm = 1.0 / count as f64;
        for level in 0..field.levels() {
            for c in 0..3 {
                let pi = PlaneField::plane_index(level, c);
                let plane = &field.planes[pi];
                for i in 0..plane.rows {
                    for j in 0..plane.cols {
                        let o = plane.node_offset(i, j);
                        for f in 0..f_dim {
                            if i + 1 < plane.rows {
                                let o2 = plane.node_offset(i + 1, j);
                                let d = plane.data[o2 + f] - plane.data[o + f];
                                total += d * d;
                                if let Some((fg, _)) = grads.as_mut() {
                                    let g = 2.0 * weights.tv_space * norm * d;
                                    fg.planes[pi][o2 + f] += g;
                                    fg.planes[pi][o + f] -= g;
                                }
                            }
                            if j + 1 < plane.cols {
                                let o2 = plane.node_offset(i, j + 1);
                                let d = plane.data[o2 + f] - plane.data[o + f];
                                total += d * d;
                                if let Some((fg, _)) = grads.as_mut() {
                                    let g = 2.0 * weights.tv_space * norm * d;
                                    fg.planes[pi][o2 + f] += g;
                                    fg.planes[pi][o + f] -= g;
                                }
                            }
                        }
                    }
                }
            }
        }
        losses.tv_space = weights.tv_space * total * norm;
    }

    // temporal smoothness: mean squared second difference along the time
    // axis (columns) of space-time planes
    if weights.smooth_time > 0.0 {
        let mut total = 0.0;
        let mut count = 0usize;
        for level in 0..field.levels() {
            for c in 3..PLANES_PER_LEVEL {
                let p = field.plane(level, c);
                if p.cols >= 3 {
                    count += p.rows * (p.cols - 2) * f_dim;
                }
            }
        }
        if count > 0 {
            let norm = 1.0 / count as f64;
            for level in 0..field.levels() {
                for c in 3..PLANES_PER_LEVEL {
                    let pi = PlaneField::plane_index(level, c);
                    let plane = &field.planes[pi];
                    for i in 0..plane.rows {
                        for j in 1..plane.cols.saturating_sub(1) {
                            let om = plane.node_offset(i, j - 1);
                            let o = plane.node_offset(i, j);
                            let op = plane.node_offset(i, j + 1);
                            for f in 0..f_dim {
                                let d = plane.data[op + f] - 2.0 * plane.data[o + f]
                                    + plane.data[om + f];
                                total += d * d;
                                if let Some((fg, _)) = grads.as_mut() {
                                    let g = 2.0 * weights.smooth_time * norm * d;
                                    fg.planes[pi][op + f] += g;
                                    fg.planes[pi][o + f] -= 2.0 * g;
                                    fg.planes[pi][om + f] += g;
                                }
                            }
                        }
                    }
                }
            }
            losses.smooth_time = weights.smooth_time * total * norm;
        }
    }

    // sparse transients: mean absolute deviation of space-time entries from 1
    if weights.l1_time > 0.0 {
        let mut total = 0.0;
        let mut count = 0usize;
        for level in 0..field.levels() {
            for c in 3..PLANES_PER_LEVEL {
                count += field.plane(level, c).data.len();
            }
        }
        let norm = 1.0 / count as f64;
        for level in 0..field.levels() {
            for c in 3..PLANES_PER_LEVEL {
                let pi = PlaneField::plane_index(level, c);
                for (idx, &v) in field.planes[pi].data.iter().enumerate() {
                    let d = v - 1.0;
                    total += d.abs();
                    if let Some((fg, _)) = grads.as_mut() {
                        fg.planes[pi][idx] += weights.l1_time * norm * d.signum();
                    }
                }
            }
        }
        losses.l1_time = weights.l1_time * total * norm;
    }

    // density L1: mean density over random scene samples
    if weights.density_l1 > 0.0 && !density_samples.is_empty() {
        let norm = 1.0 / density_samples.len() as f64;
        let mut total = 0.0;
        let mut dcache = vec![0.0; decoders.density.cache_len()];
        let mut work = vec![0.0; 2 * decoders.density.max_width()];
        let mut d_fused = vec![0.0; field.levels() * f_dim];
        let mut level_buf = vec![0.0; f_dim];
        let mut psi = vec![0.0; PLANES_PER_LEVEL * f_dim];
        let mut taps = vec![super::grid::PlaneTap::default(); PLANES_PER_LEVEL];
        let mut d_out = vec![0.0; decoders.density.out_dim()];
        let mut fused = vec![0.0; field.levels() * f_dim];
        for q in density_samples {
            fused.fill(0.0);
            for (l, &w) in level_weights.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                field.sample_level(q, l, &mut level_buf, None);
                for f in 0..f_dim {
                    fused[l * f_dim + f] = w * level_buf[f];
                }
            }
            decoders.density.forward(&fused, &mut dcache);
            let raw = dcache[decoders.density.out_offset()];
            total += softplus(raw);
            if let Some((fg, dg)) = grads.as_mut() {
                d_out.fill(0.0);
                d_out[0] = weights.density_l1 * norm * sigmoid(raw);
                decoders
                    .density
                    .backward(&d_out, &dcache, &mut d_fused, &mut dg.density, &mut work);
                let mut d_q = [0.0; 4];
                for (l, &w) in level_weights.iter().enumerate() {
                    if w == 0.0 {
                        continue;
                    }
                    field.sample_level(q, l, &mut level_buf, Some((&mut psi, &mut taps)));
                    for f in 0..f_dim {
                        level_buf[f] = w * d_fused[l * f_dim + f];
                    }
                    field.sample_level_backward(l, &level_buf, &psi, &taps, fg, &mut d_q);
                }
            }
        }
        losses.density_l1 = weights.density_l1 * total * norm;
    }

    losses
}
