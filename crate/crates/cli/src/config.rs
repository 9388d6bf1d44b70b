//! One pipeline configuration covering every stage, with named presets,
//! JSON config files and environment overrides (`MOTIONCAL_` prefix, `__`
//! separating nested keys).

use motioncal::planefield::RegWeights;
use motioncal::synth::{NoiseSpec, SceneSpec};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub dataset_dir: PathBuf,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Worker threads; 0 keeps the library default.
    pub threads: usize,
    pub simulate: SimulateConfig,
    pub sync: SyncConfig,
    pub pose: PoseConfig,
    pub refine: RefineConfig,
    pub eval: EvalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            dataset_dir: PathBuf::from("dataset"),
            output_dir: PathBuf::from("out"),
            seed: 1,
            threads: 0,
            simulate: SimulateConfig::default(),
            sync: SyncConfig::default(),
            pose: PoseConfig::default(),
            refine: RefineConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateConfig {
    pub scene: SceneSpec,
    /// Additionally writes the five robustness-protocol noise variants.
    pub table2_variants: bool,
    /// Noise applied to the generated motion files (one-off perturbation).
    pub noise: NoiseSpec,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            scene: SceneSpec::desk_preset(1),
            table2_variants: false,
            noise: NoiseSpec::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct SyncConfig {
    /// Optional Sakoe-Chiba band for DTW, frames; none by default.
    pub dtw_window: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PoseConfig {
    /// "min_cost" (deterministic default), "random" or "fixed".
    pub anchor_mode: String,
    pub anchor_index: usize,
    pub anchor_seed: u64,
}

impl Default for PoseConfig {
    fn default() -> Self {
        Self {
            anchor_mode: "min_cost".into(),
            anchor_index: 0,
            anchor_seed: 0,
        }
    }
}

/// Refinement knobs. The defaults reproduce the full-scale schedule
/// constants (300k steps, coarse-to-fine until 100k, poses unfreezing at 2k
/// and offsets at 20k, five grid levels up to 384 with a 240-wide time
/// axis); presets override them for desk-scale runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineConfig {
    pub total_steps: usize,
    pub coarse_to_fine_end: usize,
    pub s0: usize,
    pub s1: usize,
    pub spatial_res: Vec<usize>,
    pub time_res: usize,
    pub feature_dim: usize,
    pub hidden: usize,
    pub f_hat_dim: usize,
    pub n_freq: usize,
    pub batch_rays: usize,
    pub chunk_rays: usize,
    pub samples_per_ray: usize,
    pub lr_planes: f64,
    pub lr_decoders: f64,
    pub lr_pose: f64,
    pub lr_offset: f64,
    pub reg_weights: RegWeights,
    pub reg_decay_start: usize,
    pub reg_decay_end: usize,
    pub density_reg_samples: usize,
    pub lr_decay_start: usize,
    pub lr_decay_end: usize,
    pub lr_floor: f64,
    pub log_every: usize,
    pub snapshot_every: usize,
    /// Camera excluded from training (for held-out evaluation).
    pub heldout_camera: Option<usize>,
    /// Disables the coarse-to-fine ramp (ablation).
    pub coarse_to_fine: bool,
    /// Disables the curriculum (ablation: everything unfrozen at step 0).
    pub curriculum: bool,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            total_steps: 300_000,
            coarse_to_fine_end: 100_000,
            s0: 2_000,
            s1: 18_000,
            spatial_res: vec![24, 48, 96, 192, 384],
            time_res: 240,
            feature_dim: 16,
            hidden: 64,
            f_hat_dim: 16,
            n_freq: 4,
            batch_rays: 128,
            chunk_rays: 16,
            samples_per_ray: 12,
            lr_planes: 1e-2,
            lr_decoders: 1e-3,
            lr_pose: 3e-3,
            lr_offset: 1e-2,
            reg_weights: RegWeights::default(),
            reg_decay_start: 100_000,
            reg_decay_end: 150_000,
            density_reg_samples: 32,
            lr_decay_start: 150_000,
            lr_decay_end: 300_000,
            lr_floor: 0.1,
            log_every: 500,
            snapshot_every: 500,
            heldout_camera: None,
            coarse_to_fine: true,
            curriculum: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Frames per camera used for rendered-image metrics.
    pub metric_frames: usize,
    /// Cameras whose renders enter the image metrics.
    pub metric_cameras: usize,
    /// Test-time optimization iterations for a held-out camera.
    pub heldout_iters: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            metric_frames: 3,
            metric_cameras: 1,
            heldout_iters: 250,
        }
    }
}

impl PipelineConfig {
    /// Applies a named preset. "desk" is the CI-scale configuration: ten
    /// cameras, 120 frames, [8, 16] grids with a 16-wide time axis, 32x32
    /// images and a 20k-step refinement schedule.
    pub fn apply_preset(&mut self, name: &str) -> Result<(), String> {
        match name {
            "full" => Ok(()),
            "desk" => {
                self.simulate.scene = SceneSpec {
                    n_cameras: 10,
                    n_humans: 1,
                    frames: 120,
                    fps: 30.0,
                    mixed_fps: false,
                    max_offset: 10,
                    min_overlap: 100,
                    noise: NoiseSpec::default(),
                    sim3_randomize: true,
                    sim3_scale_range: (1.0, 1.0),
                    image_size: 32,
                    seed: self.seed,
                };
                self.refine = RefineConfig {
                    total_steps: 14_000,
                    coarse_to_fine_end: 5_000,
                    s0: 500,
                    s1: 1_500,
                    spatial_res: vec![8, 16],
                    time_res: 16,
                    reg_decay_start: 5_000,
                    reg_decay_end: 10_000,
                    lr_decay_start: 7_000,
                    lr_decay_end: 14_000,
                    batch_rays: 96,
                    chunk_rays: 12,
                    samples_per_ray: 16,
                    lr_pose: 3e-3,
                    ..RefineConfig::default()
                };
                Ok(())
            }
            "sync" => {
                // initialization-only scale: long videos, wide offsets, no
                // images
                self.simulate.scene = SceneSpec::sync_preset(self.seed);
                Ok(())
            }
            other => Err(format!("unknown preset '{other}' (try: desk, sync, full)")),
        }
    }

    /// Overrides config keys from `MOTIONCAL_`-prefixed environment
    /// variables; `__` separates nested keys, values parse as JSON when
    /// possible and as strings otherwise.
    pub fn apply_env_overrides(
        value: &mut serde_json::Value,
        vars: impl Iterator<Item = (String, String)>,
    ) {
        for (key, raw) in vars {
            let Some(path) = key.strip_prefix("MOTIONCAL_") else {
                continue;
            };
            let segments: Vec<String> = path.split("__").map(|s| s.to_lowercase()).collect();
            let mut node = Some(&mut *value);
            for seg in &segments[..segments.len() - 1] {
                node = node.and_then(|n| n.get_mut(seg));
            }
            let Some(node) = node else { continue };
            let leaf = &segments[segments.len() - 1];
            let parsed = serde_json::from_str(&raw)
                .unwrap_or_else(|_| serde_json::Value::String(raw.clone()));
            if let Some(obj) = node.as_object_mut() {
                obj.insert(leaf.clone(), parsed);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_carry_the_full_scale_schedule() {
        let c = PipelineConfig::default();
        assert_eq!(c.refine.s0, 2_000);
        assert_eq!(c.refine.s0 + c.refine.s1, 20_000);
        assert_eq!(c.refine.total_steps, 300_000);
        assert_eq!(c.refine.coarse_to_fine_end, 100_000);
        assert_eq!(c.refine.time_res, 240);
        assert_eq!(c.refine.spatial_res.last(), Some(&384));
    }

    #[test]
    fn env_overrides_reach_nested_keys() {
        let mut v = serde_json::to_value(PipelineConfig::default()).unwrap();
        PipelineConfig::apply_env_overrides(
            &mut v,
            vec![
                ("MOTIONCAL_REFINE__TOTAL_STEPS".to_string(), "123".to_string()),
                ("MOTIONCAL_SEED".to_string(), "77".to_string()),
                ("UNRELATED".to_string(), "x".to_string()),
            ]
            .into_iter(),
        );
        let c: PipelineConfig = serde_json::from_value(v).unwrap();
        assert_eq!(c.refine.total_steps, 123);
        assert_eq!(c.seed, 77);
    }

    #[test]
    fn desk_preset_matches_its_contract() {
        let mut c = PipelineConfig::default();
        c.apply_preset("desk").unwrap();
        assert_eq!(c.simulate.scene.n_cameras, 10);
        assert_eq!(c.simulate.scene.frames, 120);
        assert_eq!(c.simulate.scene.image_size, 32);
        assert_eq!(c.refine.spatial_res, vec![8, 16]);
        assert_eq!(c.refine.time_res, 16);
        assert_eq!(c.refine.total_steps, 14_000);
        assert!(c.apply_preset("bogus").is_err());
    }
}
