//! Causal models of human spatial interaction from 2-D trajectories.
//!
//! The crate is organised around the three stages of the analysis:
//!
//! 1. extraction of scenario time series from tracks ([`timeseries`],
//!    [`features`], [`vo`]),
//! 2. lagged causal discovery with PC1 preselection and MCI validation
//!    ([`discovery`]),
//! 3. Gaussian-process forecasting driven by the discovered parents and the
//!    causal-vs-full NMAE benchmark ([`gpr`]).
//!
//! [`simulator`] provides synthetic scenarios with known lag-1 ground truth,
//! and [`pipeline`] wires everything into a reproducible batch run.

pub mod discovery;
pub mod error;
pub mod features;
pub mod gpr;
pub mod pipeline;
pub mod simulator;
pub mod timeseries;
pub mod vo;

pub use error::{Error, Result};

/// Wrap an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let mut w = a % (2.0 * PI);
    if w <= -PI {
        w += 2.0 * PI;
    } else if w > PI {
        w -= 2.0 * PI;
    }
    w
}
