//! OptiVote: federated signSGD whose one-bit votes are aggregated over a
//! simulated non-coherent free-space-optical channel by PPM slot-pair
//! majority voting with CSI-free power control, together with closed-form
//! bounds and Monte Carlo checks of those bounds.

// Domain checks are written as `!(x > 0.0)` on purpose so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod cli;
pub mod config;
pub mod error;
pub mod learner;
pub mod montecarlo;
pub mod orchestrator;
pub mod phy;
pub mod power;
mod quad;
pub mod rng;
pub mod theory;

pub use error::{Error, Result};
