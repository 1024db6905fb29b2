//! Achievable-rate bounds for pulse-based ultra-wideband links under
//! multi-user interference.
//!
//! The model is a discrete vector channel: every node transmits on-off keyed
//! pulses through an `M`-tap Gaussian channel that stays constant for a
//! packet, and the receiver sees the superposition plus white noise.

// NaN-rejecting checks are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![cfg_attr(test, allow(clippy::field_reassign_with_default))]

pub mod bounds;
pub mod error;
pub mod exact;
pub mod gaussian;
pub mod mc;
pub mod model;

pub use bounds::{
    distance_distribution, error_probability_bound, estimate_pd, estimate_theta, lower_bound,
    lower_bound_with, upper_bound, upper_bound_with, BoundEstimate, BoundKind, H1Choice,
    LowerBoundOptions, Scenario,
};
pub use error::{Error, Result};
pub use mc::StreamContext;
pub use model::{H1Mode, LowerMethod, Preset, ScenarioConfig};
