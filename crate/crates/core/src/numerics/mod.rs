//! Dense linear algebra, activations, reverse-mode gradients, Adam, and the
//! seeded random stream used throughout the crate.

mod adam;
mod matrix;
mod rng;
pub mod special;
mod tape;

pub use adam::{AdamConfig, AdamState};
pub use matrix::{
    activation, canonical_sum, clamped_exp, relu, sigmoid, Activation, Axis, Matrix, EXP_CLAMP,
};
pub use rng::Rng;
pub use special::{inv_norm_cdf, norm_cdf};
pub use tape::{bce_row, Fault, Gradients, Segments, Tape, Var, ATTENTION_EPS, BCE_CLAMP};

pub(crate) use tape::{seg_mean_values, seg_normalize_values, seg_weighted_sum_values};
