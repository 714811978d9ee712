//! Secret-key-rate analysis for No-Switching continuous-variable QKD with a
//! biased (asymmetric) heterodyne receiver.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod calibration;
pub mod cli;
pub mod error;
pub mod estimation;
pub mod finite_size;
pub mod gaussian;
pub mod protocol;

pub use error::{Error, Result};
