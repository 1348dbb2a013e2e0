//! Design and analysis of single-arm survival trials with the one-sample
//! log-rank test and its family of weighted variance estimators.
//!
//! The standardised statistic is
//!
//! ```text
//! Z = (N(t) - A0(t)) / sqrt(w * N(t) + (1 - w) * A0(t))
//! ```
//!
//! where `N(t)` counts observed events, `A0(t)` sums the reference cumulative
//! hazard over the observed times and `w` in `[0, 1]` is a pre-specified
//! weight. `w = 0` is the classical test, `w = 0.5` the mixed estimator and
//! the uncorrelated weights `w0`/`w1` make the variance estimate uncorrelated
//! with the numerator under the null resp. the planning alternative.
//!
//! Modules:
//!
//! * [`numerics`]: quadrature, bracketed root finding, the standard normal
//!   distribution and per-replicate random streams.
//! * [`models`]: event-time, accrual, dropout and combined censoring laws.
//! * [`design`]: moment integrals, weights, power and sample size.
//! * [`analysis`]: the test on subject-level data, including the
//!   Kaplan-Meier based random weight.
//! * [`simulate`]: Monte Carlo operating characteristics with common random
//!   numbers across weight policies.
//! * [`presets`]: the published planning scenarios.
//!
//! The crate is `no_std` and only needs `alloc`; file formats, the command
//! line and thread-level parallelism live in `oslr-cli`.

#![no_std]
#![forbid(unsafe_code)]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod design;
mod error;
pub mod models;
pub mod numerics;
pub mod presets;
pub mod simulate;

pub use crate::error::{Error, ErrorKind, Result};
