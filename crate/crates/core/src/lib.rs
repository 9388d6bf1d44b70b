//! Spatio-temporal calibration of unsynchronized, unposed multi-camera video
//! rigs from per-camera 3D human motion tracks.
//!
//! The pipeline has two stages:
//!
//! 1. **Initialization** — per-camera motion sequences are aligned in time by
//!    dynamic time warping over canonical joint positions ([`timesync`]), and
//!    in space by Procrustes analysis over global joint positions
//!    ([`posealign`]), producing integer time offsets and SIM(3)-consistent
//!    camera poses.
//! 2. **Refinement** — a factorized 4D radiance field ([`planefield`]) is
//!    fitted to the input videos while camera pose deltas and continuous time
//!    offsets are optimized jointly under a coarse-to-fine schedule
//!    ([`refine`]).
//!
//! [`synth`] generates fully ground-truthed synthetic datasets and [`evalkit`]
//! measures calibration/reconstruction quality against them.

pub mod error;
pub mod evalkit;
pub mod geom;
pub mod gradcheck;
pub mod io;
pub mod planefield;
pub mod posealign;
pub mod refine;
pub mod skeleton;
pub mod synth;
pub mod timesync;

pub use error::{Error, Result};
