//! Smooth, non-repeating synthetic human motion defined on a continuous
//! world timeline. Sums of low-frequency sinusoids with random phases keep
//! the motion aperiodic over the generated window, which makes time offsets
//! identifiable for DTW.

use crate::skeleton::{HumanState, JOINT_COUNT, SHAPE_COUNT};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const HARMONICS: usize = 3;

#[derive(Debug, Clone)]
struct Sinusoid {
    amplitude: f64,
    frequency: f64, // Hz
    phase: f64,
}

impl Sinusoid {
    fn eval(&self, tau: f64) -> f64 {
        self.amplitude * (std::f64::consts::TAU * self.frequency * tau + self.phase).sin()
    }
}

#[derive(Debug, Clone)]
struct Channel {
    terms: [Sinusoid; HARMONICS],
}

impl Channel {
    fn sample<R: Rng>(rng: &mut R, amp: f64, f_lo: f64, f_hi: f64) -> Self {
        let term = |rng: &mut R, scale: f64| Sinusoid {
            amplitude: amp * scale * (0.5 + rng.random::<f64>()),
            frequency: f_lo + rng.random::<f64>() * (f_hi - f_lo),
            phase: rng.random::<f64>() * std::f64::consts::TAU,
        };
        Channel {
            terms: [term(rng, 1.0), term(rng, 0.5), term(rng, 0.25)],
        }
    }

    fn eval(&self, tau: f64) -> f64 {
        self.terms.iter().map(|s| s.eval(tau)).sum()
    }
}

/// One tracked person: sinusoidal joint-angle trajectories, a wandering root
/// and fixed shape coefficients.
#[derive(Debug, Clone)]
struct HumanMotion {
    pose: Vec<[Channel; 3]>, // 22 joints
    root_orientation: [Channel; 3],
    root_position: [Channel; 3],
    root_center: Vector3<f64>,
    shape: Vec<f64>,
}

/// Continuous-time world motion of K humans; evaluable at any real time.
#[derive(Debug, Clone)]
pub struct MotionModel {
    humans: Vec<HumanMotion>,
}

impl MotionModel {
    pub fn sample(seed: u64, n_humans: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let humans = (0..n_humans)
            .map(|k| {
                let pose = (0..JOINT_COUNT)
                    .map(|_| {
                        [
                            Channel::sample(&mut rng, 0.35, 0.15, 0.6),
                            Channel::sample(&mut rng, 0.35, 0.15, 0.6),
                            Channel::sample(&mut rng, 0.35, 0.15, 0.6),
                        ]
                    })
                    .collect();
                let root_orientation = [
                    Channel::sample(&mut rng, 0.15, 0.05, 0.2),
                    Channel::sample(&mut rng, 0.15, 0.05, 0.2),
                    Channel::sample(&mut rng, 0.5, 0.05, 0.25),
                ];
                let root_position = [
                    Channel::sample(&mut rng, 0.4, 0.05, 0.2),
                    Channel::sample(&mut rng, 0.4, 0.05, 0.2),
                    Channel::sample(&mut rng, 0.05, 0.05, 0.2),
                ];
                // spread multiple humans around the scene center
                let angle = std::f64::consts::TAU * k as f64 / n_humans.max(1) as f64;
                let spread = if n_humans > 1 { 0.9 } else { 0.0 };
                let mut shape = vec![0.0; SHAPE_COUNT];
                shape[0] = rng.random::<f64>() * 0.6 - 0.3;
                shape[1] = rng.random::<f64>() * 0.6 - 0.3;
                HumanMotion {
                    pose,
                    root_orientation,
                    root_position,
                    root_center: Vector3::new(
                        spread * angle.cos(),
                        spread * angle.sin(),
                        1.0,
                    ),
                    shape,
                }
            })
            .collect();
        Self { humans }
    }

    pub fn n_humans(&self) -> usize {
        self.humans.len()
    }

    /// World-frame state of human `k` at time `tau` (seconds).
    pub fn state_at(&self, k: usize, tau: f64) -> HumanState {
        let h = &self.humans[k];
        HumanState {
            root_orientation: Vector3::new(
                h.root_orientation[0].eval(tau),
                h.root_orientation[1].eval(tau),
                h.root_orientation[2].eval(tau),
            ),
            body_pose: h
                .pose
                .iter()
                .map(|c| Vector3::new(c[0].eval(tau), c[1].eval(tau), c[2].eval(tau)))
                .collect(),
            shape: h.shape.clone(),
            root_position: h.root_center
                + Vector3::new(
                    h.root_position[0].eval(tau),
                    h.root_position[1].eval(tau),
                    h.root_position[2].eval(tau),
                ),
        }
    }

    /// All humans at one instant.
    pub fn states_at(&self, tau: f64) -> Vec<HumanState> {
        (0..self.humans.len()).map(|k| self.state_at(k, tau)).collect()
    }
}
