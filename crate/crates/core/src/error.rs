use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorKind {
    Validation,
    Numerical,
    Infeasible,
    Indeterminate,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    Domain(String),
    /// Subject-level data violating a record or dataset invariant.
    InvalidData(String),
    /// Adaptive quadrature ran out of subdivisions.
    Quadrature {
        estimate: f64,
        error_estimate: f64,
        subdivisions: usize,
    },
    /// The root finder was given an interval without a sign change.
    NoBracket { lo: f64, hi: f64, g_lo: f64, g_hi: f64 },
    /// The root finder hit its iteration limit.
    RootNotConverged { estimate: f64, bracket_width: f64 },
    /// A quantity that must be strictly positive (event probability,
    /// variance under the alternative) vanished.
    DegenerateDesign(String),
    /// The alternative cannot be distinguished from the null, or no
    /// accrual length satisfies the design equation.
    Infeasible(String),
    /// The required sample size exceeds the configured cap.
    SampleSizeCap { required: f64, cap: u64 },
    /// A weight policy that cannot be used in this context.
    Policy(String),
    /// The variance estimate `w N + (1 - w) A0` is zero.
    Indeterminate { events: u64, expected: f64, weight: f64 },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Domain(_) | Error::InvalidData(_) | Error::Policy(_) => ErrorKind::Validation,
            Error::Quadrature { .. } | Error::NoBracket { .. } | Error::RootNotConverged { .. } => {
                ErrorKind::Numerical
            }
            Error::DegenerateDesign(_) | Error::Infeasible(_) | Error::SampleSizeCap { .. } => {
                ErrorKind::Infeasible
            }
            Error::Indeterminate { .. } => ErrorKind::Indeterminate,
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::InvalidData(msg) => write!(f, "invalid data: {msg}"),
            Error::Quadrature {
                estimate,
                error_estimate,
                subdivisions,
            } => write!(
                f,
                "quadrature did not converge after {subdivisions} subdivisions \
                 (partial estimate {estimate:e}, error estimate {error_estimate:e})"
            ),
            Error::NoBracket { lo, hi, g_lo, g_hi } => write!(
                f,
                "no sign change on [{lo}, {hi}]: g(lo) = {g_lo:e}, g(hi) = {g_hi:e}"
            ),
            Error::RootNotConverged {
                estimate,
                bracket_width,
            } => write!(
                f,
                "root finder did not converge (estimate {estimate}, bracket width {bracket_width:e})"
            ),
            Error::DegenerateDesign(msg) => write!(f, "degenerate design: {msg}"),
            Error::Infeasible(msg) => write!(f, "infeasible design: {msg}"),
            Error::SampleSizeCap { required, cap } => write!(
                f,
                "required sample size {required:.1} exceeds the cap of {cap}"
            ),
            Error::Policy(msg) => write!(f, "weight policy error: {msg}"),
            Error::Indeterminate {
                events,
                expected,
                weight,
            } => write!(
                f,
                "indeterminate test: zero variance estimate (N = {events}, A0 = {expected}, w = {weight})"
            ),
        }
    }
}

impl core::error::Error for Error {}
