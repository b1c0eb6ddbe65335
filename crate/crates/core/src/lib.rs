//! Multistage joint time/frequency/space/power resource programming for
//! multiuser MISO-OFDM downlink.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`] holds scenario and result types plus unit conversions.
//! * [`channel`] draws seeded Rayleigh channel tensors.
//! * [`metrics`] evaluates SINR, rates, completion times and the sparsity
//!   surrogate in closed form.
//! * [`conic`] is a small conic-program IR (zero, nonnegative, second-order
//!   and exponential cones) solved by a Clarabel adapter by default, with an
//!   embedded barrier method as an alternative backend.
//! * [`fdrp`] compiles the initializer and the per-iteration subproblem into
//!   conic programs and runs the successive convex approximation loop.
//! * [`baselines`] implements uniform and greedy scheduling.
//! * [`oracle`] enumerates orthogonal allocations on micro instances.
//! * [`exec`] maps independent work items in parallel (rayon, feature
//!   `parallel`) or sequentially, preserving order either way.
//! * [`campaign`] loads experiment configs, runs seeded Monte Carlo trials
//!   and writes plot-ready tables.

pub mod baselines;
pub mod campaign;
pub mod channel;
pub mod conic;
mod error;
pub mod exec;
pub mod fdrp;
pub mod metrics;
pub mod model;
pub mod oracle;

pub use error::{Error, Result};
