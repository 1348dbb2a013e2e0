//! Planning: moment integrals, uncorrelated weights, power and sample size.
//!
//! For a fixed analysis date `t`, with `S_U` the survival function of the
//! combined censoring time, the per-subject moments under the alternative
//! are
//!
//! ```text
//! v1  = int_0^t S_U f1            E[N_i]
//! v0  = int_0^t S_U S1 l0         E[A0_i]
//! v01 = int_0^t S_U f1 L0         E[N_i A0_i]
//! v00 = int_0^t S_U S1 L0 l0      E[A0_i^2] / 2
//! ```
//!
//! from which `omega = v1 - v0`, the variance `sigma^2` of the compensated
//! counting process and the limit `w v1 + (1 - w) v0` of the weighted
//! variance estimator follow. The sample size for a two-sided level `alpha`
//! test with power `1 - beta` is
//!
//! ```text
//! n = (sigma_w z_{1-alpha/2} + sigma z_{1-beta})^2 / omega^2
//! ```
//!
//! rounded up.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::cell::Cell;
use core::fmt;
use core::str::FromStr;

use crate::models::{AccrualModel, CensoringModel, DropoutModel, SurvivalModel};
use crate::numerics::{
    find_root, integrate, normal_cdf, normal_quantile, QuadratureSettings, RootSettings,
};
use crate::{Error, Result};

/// How the weight `w` of the variance estimator is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(
    feature = "serde",
    serde(tag = "kind", content = "weight", rename_all = "snake_case")
)]
pub enum WeightPolicy {
    /// `w = 0`, the classical test.
    Compensator,
    /// `w = 1`.
    Counting,
    /// `w = 0.5`.
    Wu,
    Fixed(f64),
    /// `w0`, uncorrelated under the null given the planning assumptions.
    UncorrelatedNull,
    /// `w1`, uncorrelated under the planning alternative.
    UncorrelatedAlt,
    /// `min(w0, 0.5)`.
    Combined,
    /// Estimated from the trial data at analysis time.
    RandomKm,
}

impl WeightPolicy {
    /// The four estimators compared in the published tables.
    pub const STANDARD: [WeightPolicy; 4] = [
        WeightPolicy::Compensator,
        WeightPolicy::Counting,
        WeightPolicy::Wu,
        WeightPolicy::UncorrelatedNull,
    ];

    pub fn validate(&self) -> Result<()> {
        match self {
            WeightPolicy::Fixed(w) if !(0.0..=1.0).contains(w) => Err(Error::Policy(format!(
                "fixed weight must lie in [0, 1], got {w}"
            ))),
            _ => Ok(()),
        }
    }

    /// The weight when it does not depend on any model.
    pub fn constant_weight(&self) -> Option<f64> {
        match self {
            WeightPolicy::Compensator => Some(0.0),
            WeightPolicy::Counting => Some(1.0),
            WeightPolicy::Wu => Some(0.5),
            WeightPolicy::Fixed(w) => Some(*w),
            _ => None,
        }
    }
}

impl fmt::Display for WeightPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightPolicy::Compensator => f.write_str("compensator"),
            WeightPolicy::Counting => f.write_str("counting"),
            WeightPolicy::Wu => f.write_str("wu"),
            WeightPolicy::Fixed(w) => write!(f, "fixed:{w}"),
            WeightPolicy::UncorrelatedNull => f.write_str("uncorrelated_null"),
            WeightPolicy::UncorrelatedAlt => f.write_str("uncorrelated_alt"),
            WeightPolicy::Combined => f.write_str("combined"),
            WeightPolicy::RandomKm => f.write_str("random_km"),
        }
    }
}

impl FromStr for WeightPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let policy = match s {
            "compensator" | "original" => WeightPolicy::Compensator,
            "counting" | "counting_process" => WeightPolicy::Counting,
            "wu" => WeightPolicy::Wu,
            "uncorrelated" | "uncorrelated_null" => WeightPolicy::UncorrelatedNull,
            "uncorrelated_alt" => WeightPolicy::UncorrelatedAlt,
            "combined" => WeightPolicy::Combined,
            "random_km" => WeightPolicy::RandomKm,
            _ => match s.strip_prefix("fixed:") {
                Some(w) => WeightPolicy::Fixed(w.trim().parse().map_err(|_| {
                    Error::Policy(format!("cannot parse fixed weight in '{s}'"))
                })?),
                None => return Err(Error::Policy(format!("unknown weight policy '{s}'"))),
            },
        };
        policy.validate()?;
        Ok(policy)
    }
}

/// The planning alternative, either a hazard ratio relative to the null or
/// a separate model.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Alternative {
    /// `L_1 = L_0 / ratio`; ratios above one mean the new treatment is better.
    HazardRatio(f64),
    Model(SurvivalModel),
}

impl Alternative {
    pub fn resolve(&self, null: &SurvivalModel) -> Result<SurvivalModel> {
        match self {
            Alternative::HazardRatio(r) => null.with_hazard_ratio(*r),
            Alternative::Model(m) => {
                m.validate()?;
                Ok(m.clone())
            }
        }
    }
}

/// Per-subject moments of `N_i(t)` and `A0_i(t)` under the alternative.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MomentSet {
    pub v1: f64,
    pub v0: f64,
    pub v01: f64,
    pub v00: f64,
    /// `v1 - v0`.
    pub omega: f64,
    /// `v1 - v1^2 + 2 v00 - v0^2 - 2 v01 + 2 v0 v1`.
    pub sigma2: f64,
}

impl MomentSet {
    fn from_integrals(v1: f64, v0: f64, v01: f64, v00: f64) -> Self {
        Self {
            v1,
            v0,
            v01,
            v00,
            omega: v1 - v0,
            sigma2: v1 - v1 * v1 + 2.0 * v00 - v0 * v0 - 2.0 * v01 + 2.0 * v0 * v1,
        }
    }

    /// Limit of the weighted variance estimator, `w v1 + (1 - w) v0`.
    pub fn sigma_bar_sq(&self, w: f64) -> f64 {
        w * self.v1 + (1.0 - w) * self.v0
    }

    /// `Cov(N_i - A0_i, A0_i)` under the alternative.
    pub fn cov_martingale_compensator(&self) -> f64 {
        self.v01 - self.v0 * self.v1 - 2.0 * self.v00 + self.v0 * self.v0
    }
}

fn breakpoints(censoring: &CensoringModel, models: &[&SurvivalModel]) -> Vec<f64> {
    let mut b = censoring.breakpoints();
    for m in models {
        b.extend_from_slice(m.breakpoints());
    }
    b
}

/// The four moment integrals and derived quantities.
pub fn moments(
    null: &SurvivalModel,
    alternative: &SurvivalModel,
    censoring: &CensoringModel,
    quadrature: &QuadratureSettings,
) -> Result<MomentSet> {
    null.validate()?;
    alternative.validate()?;
    censoring.validate()?;
    let t = censoring.analysis_time;
    let bp = breakpoints(censoring, &[null, alternative]);
    let su = |s: f64| censoring.survival(s);

    let v1 = integrate(|s| su(s) * alternative.density(s), 0.0, t, &bp, quadrature)?;
    let v0 = integrate(
        |s| su(s) * alternative.survival(s) * null.hazard(s),
        0.0,
        t,
        &bp,
        quadrature,
    )?;
    let v01 = integrate(
        |s| su(s) * alternative.density(s) * null.cumulative_hazard(s),
        0.0,
        t,
        &bp,
        quadrature,
    )?;
    let v00 = integrate(
        |s| {
            let g = su(s) * alternative.survival(s);
            if g == 0.0 {
                0.0
            } else {
                g * null.cumulative_hazard(s) * null.hazard(s)
            }
        },
        0.0,
        t,
        &bp,
        quadrature,
    )?;
    Ok(MomentSet::from_integrals(v1, v0, v01, v00))
}

/// Probability of an observed event by the analysis date, `int S_U f`.
pub fn expected_event_rate(
    model: &SurvivalModel,
    censoring: &CensoringModel,
    quadrature: &QuadratureSettings,
) -> Result<f64> {
    model.validate()?;
    censoring.validate()?;
    let bp = breakpoints(censoring, &[model]);
    integrate(
        |s| censoring.survival(s) * model.density(s),
        0.0,
        censoring.analysis_time,
        &bp,
        quadrature,
    )
}

/// `w0(t) = int S_U f0 L0 / int S_U f0`.
pub fn weight_uncorrelated_null(
    null: &SurvivalModel,
    censoring: &CensoringModel,
    quadrature: &QuadratureSettings,
) -> Result<f64> {
    let den = expected_event_rate(null, censoring, quadrature)?;
    if !(den > 0.0) {
        return Err(Error::DegenerateDesign(
            "no events are expected by the analysis date under the null".into(),
        ));
    }
    let bp = breakpoints(censoring, &[null]);
    let num = integrate(
        |s| {
            let g = censoring.survival(s) * null.density(s);
            if g == 0.0 {
                0.0
            } else {
                g * null.cumulative_hazard(s)
            }
        },
        0.0,
        censoring.analysis_time,
        &bp,
        quadrature,
    )?;
    Ok(num / den)
}

/// `w1` from precomputed moments.
pub fn weight_uncorrelated_alt_from_moments(m: &MomentSet) -> Result<f64> {
    if !(m.sigma2 > 0.0) {
        return Err(Error::DegenerateDesign(format!(
            "variance of the compensated counting process is {} under the alternative",
            m.sigma2
        )));
    }
    let num = 2.0 * m.v00 - m.v0 * m.v0 - m.v01 + m.v0 * m.v1;
    Ok(num / m.sigma2)
}

/// `w1 = (2 v00 - v0^2 - v01 + v0 v1) / sigma^2`.
pub fn weight_uncorrelated_alt(
    null: &SurvivalModel,
    alternative: &SurvivalModel,
    censoring: &CensoringModel,
    quadrature: &QuadratureSettings,
) -> Result<f64> {
    weight_uncorrelated_alt_from_moments(&moments(null, alternative, censoring, quadrature)?)
}

/// Design-time weight for a policy. `RandomKm` is only defined on data.
pub fn resolve_weight(
    policy: &WeightPolicy,
    null: &SurvivalModel,
    alternative: &SurvivalModel,
    censoring: &CensoringModel,
    quadrature: &QuadratureSettings,
) -> Result<f64> {
    policy.validate()?;
    if let Some(w) = policy.constant_weight() {
        return Ok(w);
    }
    // The derived weights lie in [0, 1] analytically; clamping only removes
    // quadrature round-off at the ends.
    let w = match policy {
        WeightPolicy::UncorrelatedNull => weight_uncorrelated_null(null, censoring, quadrature),
        WeightPolicy::UncorrelatedAlt => {
            weight_uncorrelated_alt(null, alternative, censoring, quadrature)
        }
        WeightPolicy::Combined => {
            Ok(weight_uncorrelated_null(null, censoring, quadrature)?.min(0.5))
        }
        WeightPolicy::RandomKm => Err(Error::Policy(
            "random_km weights are computed from trial data and cannot be used for planning"
                .into(),
        )),
        _ => unreachable!("constant policies handled above"),
    }?;
    Ok(w.clamp(0.0, 1.0))
}

fn check_levels(alpha: f64, beta: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) || !(beta > 0.0 && beta < 1.0) {
        return Err(Error::Domain(format!(
            "alpha and beta must lie in (0, 1), got alpha = {alpha}, beta = {beta}"
        )));
    }
    Ok(())
}

/// Unrounded sample size for a two-sided level `alpha` test with power
/// `1 - beta`. Infinite when `omega` vanishes.
pub fn required_sample_size(m: &MomentSet, w: f64, alpha: f64, beta: f64) -> Result<f64> {
    check_levels(alpha, beta)?;
    let za = normal_quantile(1.0 - alpha / 2.0)?;
    let zb = normal_quantile(1.0 - beta)?;
    let sb = libm::sqrt(m.sigma_bar_sq(w).max(0.0));
    let s = libm::sqrt(m.sigma2.max(0.0));
    let root = sb * za + s * zb;
    Ok(root * root / (m.omega * m.omega))
}

/// Asymptotic power of the two-sided test with `n` subjects,
/// `Phi((sqrt(n) |omega| - sigma_w z_{1-alpha/2}) / sigma)`.
pub fn power_from_moments(m: &MomentSet, w: f64, alpha: f64, n: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::Domain("power needs n >= 1".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let za = normal_quantile(1.0 - alpha / 2.0)?;
    let shift = libm::sqrt(n as f64) * m.omega.abs() - libm::sqrt(m.sigma_bar_sq(w).max(0.0)) * za;
    let s = libm::sqrt(m.sigma2.max(0.0));
    Ok(if s > 0.0 {
        normal_cdf(shift / s)
    } else if shift > 0.0 {
        1.0
    } else {
        0.0
    })
}

/// Shape of the accrual distribution; its length comes from the design.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "family", rename_all = "snake_case"))]
pub enum AccrualShape {
    #[default]
    Uniform,
    Power { exponent: f64 },
}

impl AccrualShape {
    pub fn with_length(&self, length: f64) -> Result<AccrualModel> {
        match self {
            AccrualShape::Uniform => AccrualModel::uniform(length),
            AccrualShape::Power { exponent } => AccrualModel::power(length, *exponent),
        }
    }
}

/// What drives the accrual: a fixed period length, or a recruitment rate
/// `r = n / a` that turns the sample-size formula into an equation in `a`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum AccrualPlan {
    Length(f64),
    Rate(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignSpec {
    pub null_model: SurvivalModel,
    pub alternative: Alternative,
    pub accrual_shape: AccrualShape,
    pub accrual: AccrualPlan,
    pub follow_up: f64,
    pub dropout: DropoutModel,
    /// Two-sided level.
    pub alpha: f64,
    pub beta: f64,
    pub weight_policy: WeightPolicy,
    pub max_sample_size: u64,
    /// Upper end of the accrual-length bracket for rate-driven designs.
    pub max_accrual_length: f64,
    pub quadrature: QuadratureSettings,
    pub root: RootSettings,
}

impl DesignSpec {
    /// Uniform accrual of fixed length, no dropout, default numerics.
    pub fn new(
        null_model: SurvivalModel,
        alternative: Alternative,
        accrual_length: f64,
        follow_up: f64,
        alpha: f64,
        beta: f64,
        weight_policy: WeightPolicy,
    ) -> Self {
        Self {
            null_model,
            alternative,
            accrual_shape: AccrualShape::Uniform,
            accrual: AccrualPlan::Length(accrual_length),
            follow_up,
            dropout: DropoutModel::None,
            alpha,
            beta,
            weight_policy,
            max_sample_size: 10_000_000,
            max_accrual_length: 100.0,
            quadrature: QuadratureSettings::default(),
            root: RootSettings::default(),
        }
    }

    pub fn with_policy(&self, weight_policy: WeightPolicy) -> Self {
        Self {
            weight_policy,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.null_model.validate()?;
        check_levels(self.alpha, self.beta)?;
        self.weight_policy.validate()?;
        self.dropout.validate()?;
        if !(self.follow_up >= 0.0) || !self.follow_up.is_finite() {
            return Err(Error::Domain(format!(
                "follow-up must be finite and >= 0, got {}",
                self.follow_up
            )));
        }
        match self.accrual {
            AccrualPlan::Length(a) | AccrualPlan::Rate(a) if !(a > 0.0 && a.is_finite()) => {
                Err(Error::Domain(format!(
                    "accrual length/rate must be finite and > 0, got {a}"
                )))
            }
            _ => Ok(()),
        }
    }

    /// Planning censoring model for accrual length `a`.
    pub fn censoring_for(&self, accrual_length: f64) -> Result<CensoringModel> {
        CensoringModel::new(
            self.accrual_shape.with_length(accrual_length)?,
            self.dropout,
            accrual_length + self.follow_up,
        )
    }
}

/// Advisory reading of the expected event rate: up to 70% the
/// uncorrelated weight kept the level best, above it the `w = 0.5`
/// estimator did. Never applied automatically.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PolicyAdvice {
    pub event_rate_null: f64,
    pub threshold: f64,
    pub suggested: WeightPolicy,
}

impl PolicyAdvice {
    pub const THRESHOLD: f64 = 0.7;

    pub fn for_event_rate(event_rate_null: f64) -> Self {
        Self {
            event_rate_null,
            threshold: Self::THRESHOLD,
            suggested: if event_rate_null <= Self::THRESHOLD {
                WeightPolicy::UncorrelatedNull
            } else {
                WeightPolicy::Wu
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DesignResult {
    pub n: u64,
    /// Unrounded value of the sample-size formula.
    pub n_formula: f64,
    pub weight_policy: WeightPolicy,
    pub weight: f64,
    pub accrual_length: f64,
    /// Set for rate-driven designs.
    pub accrual_rate: Option<f64>,
    pub follow_up: f64,
    pub analysis_time: f64,
    pub moments: MomentSet,
    pub sigma_bar_sq: f64,
    pub expected_event_rate_null: f64,
    pub expected_event_rate_alt: f64,
    /// Asymptotic power at `n`.
    pub power: f64,
    pub advice: PolicyAdvice,
}

struct Evaluation {
    censoring: CensoringModel,
    moments: MomentSet,
    weight: f64,
    n_formula: f64,
}

fn evaluate(spec: &DesignSpec, alternative: &SurvivalModel, a: f64) -> Result<Evaluation> {
    let censoring = spec.censoring_for(a)?;
    let m = moments(&spec.null_model, alternative, &censoring, &spec.quadrature)?;
    let weight = match spec.weight_policy {
        WeightPolicy::UncorrelatedAlt => weight_uncorrelated_alt_from_moments(&m)?.clamp(0.0, 1.0),
        ref p => resolve_weight(p, &spec.null_model, alternative, &censoring, &spec.quadrature)?,
    };
    // Anything below the quadrature noise floor counts as no effect.
    let noise = 10.0 * (spec.quadrature.abs_tol + spec.quadrature.rel_tol * m.v1.abs());
    let n_formula = if m.omega.abs() <= noise {
        f64::INFINITY
    } else {
        required_sample_size(&m, weight, spec.alpha, spec.beta)?
    };
    Ok(Evaluation {
        censoring,
        moments: m,
        weight,
        n_formula,
    })
}

fn finish(
    spec: &DesignSpec,
    eval: Evaluation,
    n: u64,
    accrual_rate: Option<f64>,
) -> Result<DesignResult> {
    let event_rate_null =
        expected_event_rate(&spec.null_model, &eval.censoring, &spec.quadrature)?;
    let power = power_from_moments(&eval.moments, eval.weight, spec.alpha, n)?;
    Ok(DesignResult {
        n,
        n_formula: eval.n_formula,
        weight_policy: spec.weight_policy,
        weight: eval.weight,
        accrual_length: eval.censoring.accrual.length(),
        accrual_rate,
        follow_up: spec.follow_up,
        analysis_time: eval.censoring.analysis_time,
        sigma_bar_sq: eval.moments.sigma_bar_sq(eval.weight),
        expected_event_rate_null: event_rate_null,
        expected_event_rate_alt: eval.moments.v1,
        moments: eval.moments,
        power,
        advice: PolicyAdvice::for_event_rate(event_rate_null),
    })
}

fn ceil_n(spec: &DesignSpec, n_formula: f64) -> Result<u64> {
    if !n_formula.is_finite() {
        return Err(Error::Infeasible(
            "the alternative yields the same expected number of events as the null \
             (omega = 0); no sample size achieves the requested power"
                .into(),
        ));
    }
    if n_formula > spec.max_sample_size as f64 {
        return Err(Error::SampleSizeCap {
            required: n_formula,
            cap: spec.max_sample_size,
        });
    }
    Ok((libm::ceil(n_formula) as u64).max(1))
}

/// Closed-form sample size for a design with fixed accrual length.
pub fn sample_size(spec: &DesignSpec) -> Result<DesignResult> {
    spec.validate()?;
    let a = match spec.accrual {
        AccrualPlan::Length(a) => a,
        AccrualPlan::Rate(_) => {
            return Err(Error::Domain(
                "rate-driven designs are solved with solve_accrual_length".into(),
            ))
        }
    };
    let alternative = spec.alternative.resolve(&spec.null_model)?;
    let eval = evaluate(spec, &alternative, a)?;
    let n = ceil_n(spec, eval.n_formula)?;
    finish(spec, eval, n, None)
}

/// Rate-driven design: finds the accrual length `a` with
/// `r a = n_formula(a)` (re-evaluating every moment at `t = a + f`) and
/// returns `n = ceil(r a)`.
pub fn solve_accrual_length(spec: &DesignSpec) -> Result<DesignResult> {
    spec.validate()?;
    let rate = match spec.accrual {
        AccrualPlan::Rate(r) => r,
        AccrualPlan::Length(_) => {
            return Err(Error::Domain(
                "solve_accrual_length needs an accrual rate".into(),
            ))
        }
    };
    let alternative = spec.alternative.resolve(&spec.null_model)?;
    let failure: Cell<Option<Error>> = Cell::new(None);
    let g = |a: f64| match evaluate(spec, &alternative, a) {
        Ok(e) => e.n_formula - rate * a,
        Err(err) => {
            failure.set(Some(err));
            f64::NAN
        }
    };
    let a_min = f64::EPSILON;
    let a_max = spec.max_accrual_length;
    let hi_value = g(a_max);
    if let Some(err) = failure.take() {
        return Err(err);
    }
    if hi_value > 0.0 {
        let needed = hi_value + rate * a_max;
        return Err(Error::Infeasible(format!(
            "accrual rate {rate} is too slow: even after an accrual period of {a_max} \
             the design needs {needed:.1} subjects but only {:.1} are recruited",
            rate * a_max
        )));
    }
    let root = find_root(g, a_min, a_max, &spec.root);
    if let Some(err) = failure.take() {
        return Err(err);
    }
    let a = root?;
    let eval = evaluate(spec, &alternative, a)?;
    ceil_n(spec, eval.n_formula)?;
    let n = (libm::ceil(rate * a - 1e-9) as u64).max(1);
    finish(spec, eval, n, Some(rate))
}

/// Dispatches on the accrual plan.
pub fn plan(spec: &DesignSpec) -> Result<DesignResult> {
    match spec.accrual {
        AccrualPlan::Length(_) => sample_size(spec),
        AccrualPlan::Rate(_) => solve_accrual_length(spec),
    }
}

/// Asymptotic power of the design with `n` subjects. For rate-driven
/// designs the accrual period is `n / r`.
pub fn power(spec: &DesignSpec, n: u64) -> Result<f64> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::Domain("power needs n >= 1".into()));
    }
    let a = match spec.accrual {
        AccrualPlan::Length(a) => a,
        AccrualPlan::Rate(r) => n as f64 / r,
    };
    let alternative = spec.alternative.resolve(&spec.null_model)?;
    let eval = evaluate(spec, &alternative, a)?;
    power_from_moments(&eval.moments, eval.weight, spec.alpha, n)
}

/// Exponential hazard rate under which the expected event rate by the
/// analysis date equals `target`.
pub fn hazard_for_event_rate(
    target: f64,
    censoring: &CensoringModel,
    quadrature: &QuadratureSettings,
    root: &RootSettings,
) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::Domain(format!(
            "target event rate must lie in (0, 1), got {target}"
        )));
    }
    let failure: Cell<Option<Error>> = Cell::new(None);
    let g = |log_rate: f64| {
        let model = SurvivalModel::Exponential {
            rate: libm::exp(log_rate),
        };
        match expected_event_rate(&model, censoring, quadrature) {
            Ok(v) => v - target,
            Err(e) => {
                failure.set(Some(e));
                f64::NAN
            }
        }
    };
    let settings = RootSettings {
        abs_tol: root.abs_tol.min(1e-12),
        ..*root
    };
    // Far beyond 20 / t the density is a spike at zero that the quadrature
    // cannot see; every target below 1 is reached well before that.
    let hi = libm::log(20.0 / censoring.analysis_time);
    let found = find_root(g, -30.0, hi, &settings);
    if let Some(e) = failure.take() {
        return Err(e);
    }
    Ok(libm::exp(found?))
}

/// Summary line for diagnostics.
pub fn describe(result: &DesignResult) -> String {
    format!(
        "n = {} (formula {:.3}), policy {}, w = {:.4}, a = {:.4}, t = {:.4}, \
         event rate H0 {:.4} / H1 {:.4}, power {:.4}",
        result.n,
        result.n_formula,
        result.weight_policy,
        result.weight,
        result.accrual_length,
        result.analysis_time,
        result.expected_event_rate_null,
        result.expected_event_rate_alt,
        result.power
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q() -> QuadratureSettings {
        QuadratureSettings::default()
    }

    fn table_censoring() -> CensoringModel {
        CensoringModel::uniform_accrual(3.0, 1.0, DropoutModel::None).unwrap()
    }

    #[test]
    fn null_alternative_has_zero_drift() {
        let m0 = SurvivalModel::weibull(1.0, 1.0).unwrap();
        let m = moments(&m0, &m0, &table_censoring(), &q()).unwrap();
        assert!(m.omega.abs() < 1e-9);
        assert!((m.v1 - 0.7896).abs() < 5e-5);
        let m0 = SurvivalModel::weibull(0.1, 1.0).unwrap();
        let m = moments(&m0, &m0, &table_censoring(), &q()).unwrap();
        assert!((m.v1 - 0.5298).abs() < 5e-5, "{}", m.v1);
        // Computed with an independent adaptive quadrature.
        let m0 = SurvivalModel::weibull(0.5, 2.0).unwrap();
        let m = moments(&m0, &m0, &table_censoring(), &q()).unwrap();
        assert!((m.v1 - 0.528906968724).abs() < 1e-9, "{}", m.v1);
    }

    #[test]
    fn event_rate_without_censoring_is_the_cdf() {
        // Entry at time zero for everyone: S_U = 1 on [0, t).
        let c = CensoringModel::new(AccrualModel::power(1.0, 1e-300).unwrap(), DropoutModel::None, 3.0)
            .unwrap();
        let m = SurvivalModel::exponential(0.4).unwrap();
        let v = expected_event_rate(&m, &c, &q()).unwrap();
        assert!((v - m.cdf(3.0)).abs() < 1e-9, "{v}");
    }

    #[test]
    fn misspecification_baseline() {
        let null = SurvivalModel::exponential(core::f64::consts::LN_2).unwrap();
        let d = DropoutModel::from_yearly_fraction(0.1).unwrap();
        let c = CensoringModel::uniform_accrual(1.0, 1.0, d).unwrap();
        let w = weight_uncorrelated_null(&null, &c, &q()).unwrap();
        assert!((w - 0.4215).abs() < 5e-5, "{w}");
    }

    #[test]
    fn combined_takes_the_minimum() {
        let high = SurvivalModel::weibull(1.0, 1.0).unwrap();
        let c = table_censoring();
        let w0 = weight_uncorrelated_null(&high, &c, &q()).unwrap();
        assert!((w0 - 0.6280).abs() < 5e-5);
        let w = resolve_weight(&WeightPolicy::Combined, &high, &high, &c, &q()).unwrap();
        assert_eq!(w, 0.5);
        let pbc = SurvivalModel::weibull(1.22, 9.0).unwrap();
        let c = CensoringModel::uniform_accrual(5.0, 3.0, DropoutModel::None).unwrap();
        let w = resolve_weight(&WeightPolicy::Combined, &pbc, &pbc, &c, &q()).unwrap();
        assert!((w - 0.1923).abs() < 5e-5);
        assert_eq!(resolve_weight(&WeightPolicy::Wu, &pbc, &pbc, &c, &q()).unwrap(), 0.5);
        assert!(matches!(
            resolve_weight(&WeightPolicy::RandomKm, &pbc, &pbc, &c, &q()),
            Err(Error::Policy(_))
        ));
    }

    #[test]
    fn uncorrelated_alt_equals_null_weight_when_hypotheses_coincide() {
        let m0 = SurvivalModel::weibull(1.22, 9.0).unwrap();
        let c = CensoringModel::uniform_accrual(5.0, 3.0, DropoutModel::None).unwrap();
        let w0 = weight_uncorrelated_null(&m0, &c, &q()).unwrap();
        let w1 = weight_uncorrelated_alt(&m0, &m0, &c, &q()).unwrap();
        assert!((w0 - w1).abs() < 1e-8, "{w0} vs {w1}");
    }

    fn pbc(policy: WeightPolicy) -> DesignSpec {
        DesignSpec::new(
            SurvivalModel::weibull(1.22, 9.0).unwrap(),
            Alternative::HazardRatio(1.75),
            5.0,
            3.0,
            0.05,
            0.2,
            policy,
        )
    }

    #[test]
    fn pbc_sample_sizes() {
        let expected = [113, 76, 95, 106];
        for (p, n) in WeightPolicy::STANDARD.iter().zip(expected) {
            let r = sample_size(&pbc(*p)).unwrap();
            assert_eq!(r.n, n, "{p}");
            assert!(r.power >= 0.8);
        }
    }

    #[test]
    fn null_effect_is_infeasible() {
        let mut spec = pbc(WeightPolicy::Wu);
        spec.alternative = Alternative::HazardRatio(1.0);
        assert!(matches!(sample_size(&spec), Err(Error::Infeasible(_))));
    }

    #[test]
    fn tiny_effect_hits_the_cap() {
        let mut spec = pbc(WeightPolicy::Wu);
        spec.alternative = Alternative::HazardRatio(1.0001);
        spec.max_sample_size = 1000;
        assert!(matches!(sample_size(&spec), Err(Error::SampleSizeCap { .. })));
    }

    #[test]
    fn power_ceiling_consistency() {
        for p in WeightPolicy::STANDARD {
            let spec = pbc(p);
            let r = sample_size(&spec).unwrap();
            assert!(power(&spec, r.n).unwrap() >= 0.8);
            assert!(power(&spec, r.n - 1).unwrap() < 0.8);
        }
        assert!(power(&pbc(WeightPolicy::Wu), 0).is_err());
    }

    #[test]
    fn power_with_one_subject_and_tiny_effect_is_near_half_alpha() {
        let mut spec = pbc(WeightPolicy::Compensator);
        spec.alternative = Alternative::HazardRatio(1.000001);
        let p = power(&spec, 1).unwrap();
        assert!((p - 0.025).abs() < 1e-3, "{p}");
    }

    #[test]
    fn rate_driven_design_recovers_fixed_length() {
        let base = pbc(WeightPolicy::UncorrelatedNull);
        let mut spec = base.clone();
        spec.accrual = AccrualPlan::Rate(106.0 / 5.0);
        let r = solve_accrual_length(&spec).unwrap();
        assert_eq!(r.n, 106);
        assert!((r.accrual_length - 5.0).abs() < 0.05, "{}", r.accrual_length);
        // Residual of the defining equation.
        let eval = sample_size(&DesignSpec {
            accrual: AccrualPlan::Length(r.accrual_length),
            ..base
        })
        .unwrap();
        assert!((eval.n_formula - 21.2 * r.accrual_length).abs() < 1e-6);
    }

    #[test]
    fn too_slow_accrual_is_infeasible() {
        let mut spec = pbc(WeightPolicy::Wu);
        spec.accrual = AccrualPlan::Rate(0.5);
        spec.max_accrual_length = 10.0;
        assert!(matches!(solve_accrual_length(&spec), Err(Error::Infeasible(_))));
    }

    #[test]
    fn policy_parsing() {
        assert_eq!("wu".parse::<WeightPolicy>().unwrap(), WeightPolicy::Wu);
        assert_eq!(
            "fixed:0.1923".parse::<WeightPolicy>().unwrap(),
            WeightPolicy::Fixed(0.1923)
        );
        assert_eq!(
            "uncorrelated".parse::<WeightPolicy>().unwrap(),
            WeightPolicy::UncorrelatedNull
        );
        assert!("fixed:1.5".parse::<WeightPolicy>().is_err());
        assert!("bogus".parse::<WeightPolicy>().is_err());
        for p in [WeightPolicy::Combined, WeightPolicy::Fixed(0.25), WeightPolicy::RandomKm] {
            assert_eq!(alloc::string::ToString::to_string(&p).parse::<WeightPolicy>().unwrap(), p);
        }
    }

    #[test]
    fn figure_scenario_rates_hit_their_targets() {
        let d = DropoutModel::from_yearly_fraction(0.1).unwrap();
        let c = CensoringModel::uniform_accrual(1.0, 1.0, d).unwrap();
        for target in [0.2, 0.4, 0.6, 0.8] {
            let rate = hazard_for_event_rate(target, &c, &q(), &RootSettings::default()).unwrap();
            let m = SurvivalModel::exponential(rate).unwrap();
            let v = expected_event_rate(&m, &c, &q()).unwrap();
            assert!((v - target).abs() < 1e-9);
        }
    }
}
