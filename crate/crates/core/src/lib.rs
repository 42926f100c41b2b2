//! Simulation and exact analysis of scheduling policies for multiclass
//! malleable parallelizable jobs on k servers.
//!
//! - [`workload`]: job classes, scaling regimes, and config resolution.
//! - [`policy`]: LPF / SERPT / THRESH / fixed-priority allocation and the
//!   single-fast-server comparison systems.
//! - [`ctmc`]: exponential-race simulation of the class-count chain.
//! - [`event`]: per-job simulation with hyperexponential sizes and direct
//!   response-time measurement.
//! - [`exact`]: truncated-chain stationary solver, preemptive-priority
//!   closed forms, and analytic bounds.

pub mod ctmc;
pub mod error;
pub mod event;
pub mod exact;
pub mod policy;
pub mod sim;
pub mod workload;

pub use error::{Error, Result};
