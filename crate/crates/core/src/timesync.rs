//! Pairwise time-offset estimation via dynamic time warping over canonical
//! joint positions, and greedy merging of the pairwise table into globally
//! consistent per-camera offsets.
//!
//! Offsets follow the warping-time convention throughout the toolkit: the
//! pairwise offset of (a, b) is the mode of `t_b - t_a` along the optimal
//! warping path, i.e. how many frames later the shared content appears in
//! `b`. Global offsets are consistent with `offset[i][j] = dt[j] - dt[i]`.

use crate::error::{Error, Result};
use crate::skeleton::{resample_motion, MotionSequence, SkeletonModel};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Pairwise DTW results: symmetric cost matrix and antisymmetric integer
/// offset matrix, in frames of the common (upsampled) rate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlignmentMatrices {
    pub cost: Vec<Vec<f64>>,
    pub offset: Vec<Vec<i64>>,
}

impl AlignmentMatrices {
    pub fn len(&self) -> usize {
        self.cost.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cost.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.cost.len();
        if self.offset.len() != n || self.cost.iter().any(|r| r.len() != n) {
            return Err(Error::InputError("alignment matrices must be square".into()));
        }
        for i in 0..n {
            if self.cost[i][i] != 0.0 || self.offset[i][i] != 0 {
                return Err(Error::InputError("diagonal must be zero".into()));
            }
            for j in 0..n {
                if self.cost[i][j] != self.cost[j][i] || self.offset[i][j] != -self.offset[j][i] {
                    return Err(Error::InputError(format!(
                        "matrices must be (anti)symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Total alignment cost per camera (row sums); used for anchor selection.
    pub fn total_costs(&self) -> Vec<f64> {
        self.cost.iter().map(|row| row.iter().sum()).collect()
    }
}

/// Globally consistent per-camera time offsets; the anchor camera has offset
/// zero by construction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlobalOffsets {
    pub offsets: Vec<i64>,
    pub anchor: usize,
}

impl GlobalOffsets {
    /// Re-expresses the offsets relative to a different anchor camera.
    pub fn reanchored(&self, anchor: usize) -> GlobalOffsets {
        let base = self.offsets[anchor];
        GlobalOffsets {
            offsets: self.offsets.iter().map(|o| o - base).collect(),
            anchor,
        }
    }
}

/// DTW between two sequences already sharing a frame rate and with joint
/// caches populated. Returns the optimal path cost and the mode of the
/// per-pair warping times along one optimal path. `band` optionally applies
/// a Sakoe-Chiba window (widened so the corners stay reachable).
fn dtw_frames(a: &MotionSequence, b: &MotionSequence, band: Option<usize>) -> Result<(f64, i64)> {
    if a.is_empty() {
        return Err(Error::EmptySequence(a.camera_id.clone()));
    }
    if b.is_empty() {
        return Err(Error::EmptySequence(b.camera_id.clone()));
    }
    if a.humans != b.humans {
        return Err(Error::CorrespondenceMismatch {
            left: a.humans,
            right: b.humans,
        });
    }
    let n = a.len();
    let m = b.len();
    let band = band.map(|w| w.max(n.abs_diff(m)) as i64);
    let w = m + 1;
    let mut acc = vec![f64::INFINITY; (n + 1) * w];
    acc[0] = 0.0;
    for i in 1..=n {
        let ca = a.canonical(i - 1);
        for j in 1..=m {
            if let Some(band) = band {
                if (i as i64 - j as i64).abs() > band {
                    continue;
                }
            }
            let d = ca.distance(b.canonical(j - 1));
            let diag = acc[(i - 1) * w + (j - 1)];
            let up = acc[(i - 1) * w + j];
            let left = acc[i * w + (j - 1)];
            acc[i * w + j] = d + diag.min(up).min(left);
        }
    }
    let cost = acc[n * w + m];

    // Backtrack one optimal path; ties prefer the diagonal step, then (1,0),
    // then (0,1), which concentrates the warping-time histogram.
    let mut hist: BTreeMap<i64, usize> = BTreeMap::new();
    let (mut i, mut j) = (n, m);
    loop {
        *hist.entry(j as i64 - i as i64).or_insert(0) += 1;
        if i == 1 && j == 1 {
            break;
        }
        let diag = acc[(i - 1) * w + (j - 1)];
        let up = acc[(i - 1) * w + j];
        let left = acc[i * w + (j - 1)];
        let best = diag.min(up).min(left);
        if diag == best {
            i -= 1;
            j -= 1;
        } else if up == best {
            i -= 1;
        } else {
            j -= 1;
        }
    }

    // Mode of the warping time; ties break toward the smallest absolute
    // offset, then the smaller signed value.
    let mut best_key = 0i64;
    let mut best_count = 0usize;
    for (&k, &c) in &hist {
        let better = c > best_count
            || (c == best_count
                && (k.abs() < best_key.abs() || (k.abs() == best_key.abs() && k < best_key)));
        if better {
            best_key = k;
            best_count = c;
        }
    }
    Ok((cost, best_key))
}

fn prepare(seq: &MotionSequence, common_fps: f64, model: &SkeletonModel) -> Result<MotionSequence> {
    if seq.is_empty() {
        return Err(Error::EmptySequence(seq.camera_id.clone()));
    }
    // resample_motion is an exact copy at equal rates and also populates the
    // joint caches
    resample_motion(seq, common_fps, model)
}

/// Optimal DTW alignment of two sequences. Sequences with different frame
/// rates are first resampled to the higher rate; the offset is expressed in
/// frames of that common rate.
pub fn pairwise_dtw(
    a: &MotionSequence,
    b: &MotionSequence,
    model: &SkeletonModel,
) -> Result<(f64, i64)> {
    pairwise_dtw_windowed(a, b, model, None)
}

/// [`pairwise_dtw`] with an optional Sakoe-Chiba band, for speed; no band is
/// the default since offsets can exceed any typical band width.
pub fn pairwise_dtw_windowed(
    a: &MotionSequence,
    b: &MotionSequence,
    model: &SkeletonModel,
    window: Option<usize>,
) -> Result<(f64, i64)> {
    let common = a.fps.max(b.fps);
    let pa = prepare(a, common, model)?;
    let pb = prepare(b, common, model)?;
    dtw_frames(&pa, &pb, window)
}

/// Fills the pairwise cost/offset matrices for all camera pairs. Pair
/// evaluations are independent; the result does not depend on evaluation
/// order.
pub fn build_matrices(
    seqs: &[MotionSequence],
    model: &SkeletonModel,
) -> Result<AlignmentMatrices> {
    build_matrices_windowed(seqs, model, None)
}

/// [`build_matrices`] with an optional Sakoe-Chiba band.
pub fn build_matrices_windowed(
    seqs: &[MotionSequence],
    model: &SkeletonModel,
    window: Option<usize>,
) -> Result<AlignmentMatrices> {
    let n = seqs.len();
    if n < 2 {
        return Err(Error::InputError(format!(
            "need at least 2 sequences, got {n}"
        )));
    }
    let common = seqs.iter().map(|s| s.fps).fold(f64::MIN, f64::max);
    let prepared: Vec<MotionSequence> = seqs
        .iter()
        .map(|s| prepare(s, common, model))
        .collect::<Result<_>>()?;

    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    let results: Vec<(usize, usize, f64, i64)> = pairs
        .par_iter()
        .map(|&(i, j)| {
            dtw_frames(&prepared[i], &prepared[j], window)
                .map(|(c, o)| (i, j, c, o))
                .map_err(|e| Error::PairFailed {
                    a: i,
                    b: j,
                    source: Box::new(e),
                })
        })
        .collect::<Result<_>>()?;

    let mut cost = vec![vec![0.0; n]; n];
    let mut offset = vec![vec![0i64; n]; n];
    for (i, j, c, o) in results {
        cost[i][j] = c;
        cost[j][i] = c;
        offset[i][j] = o;
        offset[j][i] = -o;
    }
    Ok(AlignmentMatrices { cost, offset })
}

/// Greedy global time alignment: index pairs are visited in increasing cost
/// order; the cheapest pair anchors a global group which absorbs cameras and
/// locally aligned groups, shifting group offsets so every merged pair
/// constraint `dt[j] = dt[i] + offset[i][j]` holds.
pub fn global_align(mats: &AlignmentMatrices) -> Result<GlobalOffsets> {
    mats.validate()?;
    let n = mats.len();
    if n < 2 {
        return Err(Error::InputError("need at least 2 cameras".into()));
    }

    let mut pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    // increasing cost; lexicographic on (i, j) for deterministic ties
    pairs.sort_by(|&(ai, aj), &(bi, bj)| {
        mats.cost[ai][aj]
            .total_cmp(&mats.cost[bi][bj])
            .then(ai.cmp(&bi))
            .then(aj.cmp(&bj))
    });

    const NONE: usize = usize::MAX;
    const GLOBAL: usize = usize::MAX - 1;
    let mut dt = vec![0i64; n];
    // group[c]: NONE (unassigned), GLOBAL, or index of a local group
    let mut group = vec![NONE; n];
    let mut locals: Vec<Vec<usize>> = Vec::new();

    let (ai, aj) = pairs[0];
    dt[ai] = 0;
    dt[aj] = mats.offset[ai][aj];
    group[ai] = GLOBAL;
    group[aj] = GLOBAL;
    let anchor = ai;

    for &(i, j) in &pairs[1..] {
        let (gi, gj) = (group[i], group[j]);
        match (gi, gj) {
            (GLOBAL, GLOBAL) => continue,
            (GLOBAL, g) if g != NONE => {
                // shift the local group so the pair constraint holds, then
                // absorb it into the global group
                let shift = dt[i] + mats.offset[i][j] - dt[j];
                for &m in &locals[g] {
                    dt[m] += shift;
                    group[m] = GLOBAL;
                }
                locals[g].clear();
            }
            (g, GLOBAL) if g != NONE => {
                let shift = dt[j] - mats.offset[i][j] - dt[i];
                for &m in &locals[g] {
                    dt[m] += shift;
                    group[m] = GLOBAL;
                }
                locals[g].clear();
            }
            (GLOBAL, NONE) => {
                dt[j] = dt[i] + mats.offset[i][j];
                group[j] = GLOBAL;
            }
            (NONE, GLOBAL) => {
                dt[i] = dt[j] - mats.offset[i][j];
                group[i] = GLOBAL;
            }
            (NONE, NONE) => {
                dt[i] = 0;
                dt[j] = mats.offset[i][j];
                let g = locals.len();
                group[i] = g;
                group[j] = g;
                locals.push(vec![i, j]);
            }
            (g, NONE) => {
                dt[j] = dt[i] + mats.offset[i][j];
                group[j] = g;
                locals[g].push(j);
            }
            (NONE, g) => {
                dt[i] = dt[j] - mats.offset[i][j];
                group[i] = g;
                locals[g].push(i);
            }
            (ga, gb) if ga == gb => continue,
            (ga, gb) => {
                // merge local group gb into ga after shifting it
                let shift = dt[i] + mats.offset[i][j] - dt[j];
                let members = std::mem::take(&mut locals[gb]);
                for &m in &members {
                    dt[m] += shift;
                    group[m] = ga;
                }
                locals[ga].extend(members);
            }
        }
    }

    debug_assert!(group.iter().all(|&g| g == GLOBAL));
    Ok(GlobalOffsets {
        offsets: dt,
        anchor,
    })
}
