//! Trace-driven lab for live video over LEO satellite uplinks.
//!
//! Probabilistic bandwidth and loss prediction, a CRF to bitrate mixture model,
//! a distribution-convolution scheduler for CRF, frame rate and FEC, a
//! packet-level simulator, reference controllers and an experiment harness.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod crf_model;
pub mod distributions;
pub mod error;
pub mod harness;
pub mod predictor;
pub mod scheduler;
pub mod simnet;
pub mod traces;

pub use distributions::{Grid, Pmf};
pub use error::{Error, Result};
