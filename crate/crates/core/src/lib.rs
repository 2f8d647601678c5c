//! Edge-assisted congestion control for delay-tolerant mobile traffic.
//!
//! - [`analytic`]: closed-form fluid-limit dissemination model and an RK4
//!   cross-check.
//! - [`meetsim`]: stochastic meeting-process simulator.
//! - [`cce`]: congestion control engine and load-profile scenarios.
//! - [`harness`]: configuration, canned experiments, validation and CSV
//!   output.

pub mod analytic;
pub mod cce;
pub mod harness;
pub mod meetsim;
pub mod stats;
