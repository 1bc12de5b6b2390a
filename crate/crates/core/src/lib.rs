// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod contention;
pub mod error;
pub mod performance;
pub mod quad;
pub mod registry;
pub mod scenario;
pub mod simulator;
pub mod traffic_model;
pub mod validation;

pub use error::{Error, Result};
