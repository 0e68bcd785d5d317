//! Oscillatory sampled-data feedback for driftless control-affine systems.
//!
//! The controller steers `ẋ = Σ u_i f_i(x)` along the gradient flow of a
//! navigation function by exciting first- and second-order Lie brackets
//! with integer-frequency sinusoids, re-sampling the state once per epoch
//! of length ε.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod control;
pub mod error;
pub mod expr;
pub mod potential;
pub mod scenarios;
pub mod sim;
pub mod svg;
pub mod system;

pub use error::{Error, Result};
