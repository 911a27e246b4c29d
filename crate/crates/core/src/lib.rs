//! Generalization-loss landscapes of label smoothing under label noise.
//!
//! * [`stochastic`]: probabilities, losses in nats, column-stochastic
//!   transition and smoothing matrices.
//! * [`theory`]: closed-form α/β/γ losses, optimal smoothing parameters and
//!   matrices, mean-field reductions, landscapes.
//! * [`scan`]: deterministic global 1-D minimization.
//! * [`losses`]: per-example losses on logits (smoothed, forward-corrected,
//!   logit-smoothed) and the Jensen chain between them.
//! * [`sim`]: seeded Monte Carlo runs with memorizing learners.
//! * [`io`]: CSV and JSON formats.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod io;
pub mod losses;
pub mod scan;
pub mod seed;
pub mod sim;
pub mod stochastic;
pub mod theory;

pub use error::{Error, Result};
pub use stochastic::{
    binary_entropy, effective_clean_rate, smooth_label, uniform_smoothing, uniform_transition,
    validate_column_stochastic, LossValue, Prob, SmoothingMatrix, SoftLabel, TransitionMatrix,
};
pub use theory::{Assumption, LandscapeGrid, OptimalPoint};
