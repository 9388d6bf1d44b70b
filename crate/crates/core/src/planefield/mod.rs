//! Factorized 4D radiance field: six multiresolution feature planes fused by
//! Hadamard products and weighted concatenation, tiny decoders for density
//! and view-dependent color, differentiable volume rendering, photometric
//! loss and the coarse-to-fine training schedule. Every learnable quantity
//! has an analytic gradient.

mod decoder;
mod grid;
mod render;
mod regularizer;
mod schedule;

pub use decoder::{DecoderGrads, Decoders, Dense, Mlp, MlpGrads};
pub use grid::{Aabb, FieldGrads, PlaneField, PLANES_PER_LEVEL, PLANE_AXES};
pub use render::{
    camera_ray, composite, photometric_loss, render_ray, render_ray_backward, render_ray_grad,
    RayGradients, RayRender, RenderConfig, RenderScratch,
};
pub use regularizer::{regularizer_losses, RegLosses, RegWeights};
pub use schedule::{coarse_weight, TrainSchedule};
