//! Risk-constrained reinforcement learning with error states.

// Validation writes `!(x > 0.0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod approx;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod gridworld;
pub mod learner;
pub mod mdp;
pub mod oracle;
pub mod tank;

pub use error::{Error, Result};
