//! Tactile-visual state estimation for suction-held object insertion.

// `!(a > b)` is used on purpose to reject NaN along with the failed test
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classifier;
pub mod config;
pub mod error;
pub mod factor;
pub mod geometry;
pub mod metrics;
pub mod pipeline;
pub mod report;
pub mod simulator;

pub use error::{Error, Result};
