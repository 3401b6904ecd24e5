//! Noise-robust live/spoof classification with two learned uncertainties.
//!
//! A label-quality variance `sigma_L` absorbs noisy semantic labels during
//! stage-1 training, and a data-quality variance `sigma_D^2` learned in stage 2
//! damps confidence on degraded inputs at inference time.

// `!(v > 0.0)` is how positivity checks reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod experiment;
pub mod generalized;
pub mod inference;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod training;

pub use error::{DpmError, Result};
