//! Identification and adaptive control for average-cost MDPs with unknown
//! transition kernels.

// `!(x > 0.0)` also rejects NaN, which is the point of those checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adaptive;
pub mod bayes_id;
pub mod error;
pub mod metrics;
pub mod models;
pub mod planner;
pub mod quantize;
pub mod record;

pub use error::{Error, Result};
pub mod harness;
