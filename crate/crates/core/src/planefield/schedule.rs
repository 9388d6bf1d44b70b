//! Coarse-to-fine level weights, curriculum gating and regularizer decay.

use serde::{Deserialize, Serialize};

/// Coarse-to-fine weight of resolution level `l` (1-based) at progress
/// `alpha` in `[0, L]`: zero until the level starts ramping, a half-cosine
/// ramp over one alpha unit, then one.
pub fn coarse_weight(alpha: f64, l: usize) -> f64 {
    let x = alpha - (l as f64 - 1.0);
    if x < 0.0 {
        0.0
    } else if x < 1.0 {
        (1.0 - (x * std::f64::consts::PI).cos()) / 2.0
    } else {
        1.0
    }
}

/// All schedule state for one training run: total step budget, the
/// coarse-to-fine window, the curriculum unfreeze points and the regularizer
/// decay window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSchedule {
    pub total_steps: usize,
    /// Step at which the normalized coarse-to-fine progress reaches 1.
    pub coarse_to_fine_end: usize,
    /// Steps with only the field learning; pose deltas unfreeze here.
    pub s0: usize,
    /// Additional steps before time offsets unfreeze (at `s0 + s1`).
    pub s1: usize,
    pub levels: usize,
    pub reg_decay_start: usize,
    pub reg_decay_end: usize,
    /// Disables the coarse-to-fine ramp (all level weights 1 from step 0).
    pub coarse_to_fine_enabled: bool,
}

impl TrainSchedule {
    /// Normalized training step, clamped to [0, 1] past the schedule end.
    pub fn eta(&self, step: usize) -> f64 {
        if self.coarse_to_fine_end == 0 {
            return 1.0;
        }
        (step as f64 / self.coarse_to_fine_end as f64).clamp(0.0, 1.0)
    }

    /// Progress along the level axis: `alpha = L (e^eta - 1) / (e - 1)`.
    pub fn alpha(&self, step: usize) -> f64 {
        if !self.coarse_to_fine_enabled {
            return self.levels as f64;
        }
        let eta = self.eta(step);
        self.levels as f64 * (eta.exp() - 1.0) / (std::f64::consts::E - 1.0)
    }

    pub fn level_weights(&self, step: usize) -> Vec<f64> {
        let alpha = self.alpha(step);
        (1..=self.levels).map(|l| coarse_weight(alpha, l)).collect()
    }

    pub fn poses_active(&self, step: usize) -> bool {
        step >= self.s0
    }

    pub fn offsets_active(&self, step: usize) -> bool {
        step >= self.s0 + self.s1
    }

    /// Cosine decay factor for regularizer weights: 1 before the window,
    /// easing down to 1/100 of the initial weight at the window end.
    pub fn reg_scale(&self, step: usize) -> f64 {
        const FLOOR: f64 = 0.01;
        if self.reg_decay_end <= self.reg_decay_start {
            return 1.0;
        }
        let t = ((step as f64 - self.reg_decay_start as f64)
            / (self.reg_decay_end - self.reg_decay_start) as f64)
            .clamp(0.0, 1.0);
        FLOOR + (1.0 - FLOOR) * (1.0 + (std::f64::consts::PI * t).cos()) / 2.0
    }
}
