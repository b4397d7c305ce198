//! Nonlinear interference noise (NLIN) workbench for coherent WDM links.
//!
//! The crate propagates multi-channel dual-polarization signals through
//! amplified fiber links with a symmetric split-step solver, recovers the
//! channel under test (CUT) with a receiver chain built to isolate cross- and
//! multi-channel interference, splits the residual noise into phase and
//! circular parts, and compares the result against GN/EGN model integrals and
//! the pulse-collision picture.
//!
//! All quantities are SI internally (W, Hz, s, m). Conversions from the units
//! used in configuration files live in [`units`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod collision;
pub mod dsp;
pub mod error;
pub mod fiber;
pub mod link;
pub mod metrics;
pub mod models;
pub mod roadm;
pub mod scenario;
pub mod signal;
pub mod units;
pub mod waveform;

pub use error::{Error, Result};
pub use signal::{Signal, Spectrum, C64};
