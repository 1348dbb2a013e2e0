//! Event-time, accrual and dropout laws and the combined censoring survival
//! function `S_U(s) = S_C(s) * F_Y((t - s)+)`.
//!
//! Every survival model is defined through its cumulative hazard `L(s)`;
//! survival, distribution function and density follow from
//! `S = exp(-L)`, `F = 1 - S` and `f = l * S`.

use alloc::vec::Vec;
use core::f64::consts::LN_2;

use crate::numerics::RngStream;
use crate::{Error, Result};

/// Parametric law of the time from entry to event.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "family", rename_all = "snake_case"))]
pub enum SurvivalModel {
    /// Constant hazard `rate`.
    Exponential { rate: f64 },
    /// `L(s) = ln 2 * (s / median)^shape`.
    Weibull { shape: f64, median: f64 },
    /// Hazard `rates[k]` on `[breaks[k-1], breaks[k])`, with `breaks`
    /// strictly increasing and one fewer than `rates`.
    PiecewiseExponential { breaks: Vec<f64>, rates: Vec<f64> },
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(alloc::format!(
            "{name} must be finite and > 0, got {v}"
        )))
    }
}

impl SurvivalModel {
    pub fn exponential(rate: f64) -> Result<Self> {
        let m = SurvivalModel::Exponential { rate };
        m.validate()?;
        Ok(m)
    }

    /// Exponential law with the given median.
    pub fn exponential_median(median: f64) -> Result<Self> {
        positive("median", median)?;
        Self::exponential(LN_2 / median)
    }

    pub fn weibull(shape: f64, median: f64) -> Result<Self> {
        let m = SurvivalModel::Weibull { shape, median };
        m.validate()?;
        Ok(m)
    }

    pub fn piecewise_exponential(breaks: Vec<f64>, rates: Vec<f64>) -> Result<Self> {
        let m = SurvivalModel::PiecewiseExponential { breaks, rates };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SurvivalModel::Exponential { rate } => positive("rate", *rate),
            SurvivalModel::Weibull { shape, median } => {
                positive("shape", *shape)?;
                positive("median", *median)
            }
            SurvivalModel::PiecewiseExponential { breaks, rates } => {
                if rates.len() != breaks.len() + 1 {
                    return Err(Error::Domain(alloc::format!(
                        "piecewise exponential needs one more rate than breaks ({} vs {})",
                        rates.len(),
                        breaks.len()
                    )));
                }
                for r in rates {
                    positive("piecewise rate", *r)?;
                }
                let mut prev = 0.0;
                for b in breaks {
                    if !(*b > prev) || !b.is_finite() {
                        return Err(Error::Domain(
                            "piecewise breaks must be finite, positive and strictly increasing".into(),
                        ));
                    }
                    prev = *b;
                }
                Ok(())
            }
        }
    }

    /// Cumulative hazard `L(s)`; zero for `s <= 0`.
    pub fn cumulative_hazard(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        match self {
            SurvivalModel::Exponential { rate } => rate * s,
            SurvivalModel::Weibull { shape, median } => LN_2 * libm::pow(s / median, *shape),
            SurvivalModel::PiecewiseExponential { breaks, rates } => {
                let mut acc = 0.0;
                let mut start = 0.0;
                for (k, rate) in rates.iter().enumerate() {
                    let end = breaks.get(k).copied().unwrap_or(f64::INFINITY);
                    if s <= end {
                        return acc + rate * (s - start);
                    }
                    acc += rate * (end - start);
                    start = end;
                }
                acc
            }
        }
    }

    /// Hazard `l(s)`. For a Weibull law with shape below one this is
    /// infinite at zero.
    pub fn hazard(&self, s: f64) -> f64 {
        let s = s.max(0.0);
        match self {
            SurvivalModel::Exponential { rate } => *rate,
            SurvivalModel::Weibull { shape, median } => {
                LN_2 * shape / median * libm::pow(s / median, shape - 1.0)
            }
            SurvivalModel::PiecewiseExponential { breaks, rates } => {
                let k = breaks.partition_point(|b| *b <= s);
                rates[k]
            }
        }
    }

    pub fn survival(&self, s: f64) -> f64 {
        libm::exp(-self.cumulative_hazard(s))
    }

    pub fn cdf(&self, s: f64) -> f64 {
        -libm::expm1(-self.cumulative_hazard(s))
    }

    pub fn density(&self, s: f64) -> f64 {
        let l = self.hazard(s);
        if l == 0.0 {
            0.0
        } else {
            l * self.survival(s)
        }
    }

    /// Inverse of the cumulative hazard, `L^{-1}(h)` for `h >= 0`.
    pub fn inverse_cumulative_hazard(&self, h: f64) -> f64 {
        if h <= 0.0 {
            return 0.0;
        }
        match self {
            SurvivalModel::Exponential { rate } => h / rate,
            SurvivalModel::Weibull { shape, median } => median * libm::pow(h / LN_2, 1.0 / shape),
            SurvivalModel::PiecewiseExponential { breaks, rates } => {
                let mut acc = 0.0;
                let mut start = 0.0;
                for (k, rate) in rates.iter().enumerate() {
                    let end = breaks.get(k).copied().unwrap_or(f64::INFINITY);
                    let piece = rate * (end - start);
                    if h <= acc + piece {
                        return start + (h - acc) / rate;
                    }
                    acc += piece;
                    start = end;
                }
                f64::INFINITY
            }
        }
    }

    /// `F^{-1}(p)` for `0 <= p < 1`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Domain(alloc::format!(
                "survival quantile needs 0 <= p < 1, got {p}"
            )));
        }
        Ok(self.inverse_cumulative_hazard(-libm::log1p(-p)))
    }

    pub fn median(&self) -> f64 {
        self.inverse_cumulative_hazard(LN_2)
    }

    /// Points where the hazard is not smooth.
    pub fn breakpoints(&self) -> &[f64] {
        match self {
            SurvivalModel::PiecewiseExponential { breaks, .. } => breaks,
            _ => &[],
        }
    }

    /// The proportional-hazards alternative with `L_1 = L_0 / ratio`.
    ///
    /// For a Weibull law the shape is kept and the median becomes
    /// `median * ratio^(1/shape)`.
    pub fn with_hazard_ratio(&self, ratio: f64) -> Result<Self> {
        positive("hazard ratio", ratio)?;
        Ok(match self {
            SurvivalModel::Exponential { rate } => SurvivalModel::Exponential { rate: rate / ratio },
            SurvivalModel::Weibull { shape, median } => SurvivalModel::Weibull {
                shape: *shape,
                median: median * libm::pow(ratio, 1.0 / shape),
            },
            SurvivalModel::PiecewiseExponential { breaks, rates } => {
                SurvivalModel::PiecewiseExponential {
                    breaks: breaks.clone(),
                    rates: rates.iter().map(|r| r / ratio).collect(),
                }
            }
        })
    }

    /// Returns `r` when `other` has cumulative hazard `L_self / r`, i.e. when
    /// the two laws are proportional hazards of one another.
    pub fn hazard_ratio_to(&self, other: &SurvivalModel) -> Option<f64> {
        fn close(a: f64, b: f64) -> bool {
            (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
        }
        match (self, other) {
            (SurvivalModel::Exponential { rate: r0 }, SurvivalModel::Exponential { rate: r1 }) => {
                Some(r0 / r1)
            }
            (
                SurvivalModel::Weibull { shape: k0, median: m0 },
                SurvivalModel::Weibull { shape: k1, median: m1 },
            ) if close(*k0, *k1) => Some(libm::pow(m1 / m0, *k0)),
            (
                SurvivalModel::PiecewiseExponential { breaks: b0, rates: r0 },
                SurvivalModel::PiecewiseExponential { breaks: b1, rates: r1 },
            ) if b0 == b1 => {
                let ratio = r0[0] / r1[0];
                r0.iter()
                    .zip(r1)
                    .all(|(x, y)| close(x / y, ratio))
                    .then_some(ratio)
            }
            _ => None,
        }
    }
}

/// Inverse-transform draw of an event time: `T = L^{-1}(E)` with `E` a
/// standard exponential, equivalently `S(T) = U`.
pub fn sample_event_time(model: &SurvivalModel, rng: &mut RngStream) -> f64 {
    model.inverse_cumulative_hazard(rng.exponential())
}

/// Law of the calendar entry time `Y` on `[0, length]`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "family", rename_all = "snake_case"))]
pub enum AccrualModel {
    Uniform { length: f64 },
    /// `F_Y(s) = (s / length)^exponent`.
    Power { length: f64, exponent: f64 },
}

impl AccrualModel {
    pub fn uniform(length: f64) -> Result<Self> {
        let m = AccrualModel::Uniform { length };
        m.validate()?;
        Ok(m)
    }

    pub fn power(length: f64, exponent: f64) -> Result<Self> {
        let m = AccrualModel::Power { length, exponent };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            AccrualModel::Uniform { length } => positive("accrual length", *length),
            AccrualModel::Power { length, exponent } => {
                positive("accrual length", *length)?;
                positive("accrual exponent", *exponent)
            }
        }
    }

    pub fn length(&self) -> f64 {
        match self {
            AccrualModel::Uniform { length } | AccrualModel::Power { length, .. } => *length,
        }
    }

    fn exponent(&self) -> f64 {
        match self {
            AccrualModel::Uniform { .. } => 1.0,
            AccrualModel::Power { exponent, .. } => *exponent,
        }
    }

    /// Same shape, different length.
    pub fn with_length(&self, length: f64) -> Self {
        match self {
            AccrualModel::Uniform { .. } => AccrualModel::Uniform { length },
            AccrualModel::Power { exponent, .. } => AccrualModel::Power {
                length,
                exponent: *exponent,
            },
        }
    }

    pub fn cdf(&self, s: f64) -> f64 {
        let x = (s / self.length()).clamp(0.0, 1.0);
        match self {
            AccrualModel::Uniform { .. } => x,
            AccrualModel::Power { exponent, .. } => libm::pow(x, *exponent),
        }
    }

    pub fn density(&self, s: f64) -> f64 {
        let a = self.length();
        if !(0.0..=a).contains(&s) {
            return 0.0;
        }
        let theta = self.exponent();
        theta / a * libm::pow(s / a, theta - 1.0)
    }

    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match self {
            AccrualModel::Uniform { length } => length * u,
            AccrualModel::Power { length, exponent } => length * libm::pow(u, 1.0 / exponent),
        }
    }

    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        self.quantile(rng.uniform())
    }
}

/// Law of the random dropout time `C`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "family", rename_all = "snake_case"))]
pub enum DropoutModel {
    /// `C = +inf`.
    #[default]
    None,
    /// Constant hazard per time unit.
    Exponential { hazard: f64 },
}

impl DropoutModel {
    /// A constant hazard under which the fraction `p` of subjects drops out
    /// per time unit, i.e. hazard `-ln(1 - p)`.
    pub fn from_yearly_fraction(p: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Domain(alloc::format!(
                "yearly dropout fraction must lie in [0, 1), got {p}"
            )));
        }
        if p == 0.0 {
            return Ok(DropoutModel::None);
        }
        Ok(DropoutModel::Exponential {
            hazard: -libm::log1p(-p),
        })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DropoutModel::None => Ok(()),
            DropoutModel::Exponential { hazard } => {
                if *hazard >= 0.0 && hazard.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Domain(alloc::format!(
                        "dropout hazard must be finite and >= 0, got {hazard}"
                    )))
                }
            }
        }
    }

    pub fn cumulative_hazard(&self, s: f64) -> f64 {
        match self {
            DropoutModel::None => 0.0,
            DropoutModel::Exponential { hazard } => hazard * s.max(0.0),
        }
    }

    pub fn survival(&self, s: f64) -> f64 {
        libm::exp(-self.cumulative_hazard(s))
    }

    /// Dropout time, `+inf` when there is no dropout.
    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        match self {
            DropoutModel::Exponential { hazard } if *hazard > 0.0 => rng.exponential() / hazard,
            _ => f64::INFINITY,
        }
    }
}

/// Accrual, dropout and the calendar date of the analysis together: the
/// law of `U = C ^ (t - Y)+`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CensoringModel {
    pub accrual: AccrualModel,
    #[cfg_attr(feature = "serde", serde(default))]
    pub dropout: DropoutModel,
    pub analysis_time: f64,
}

impl CensoringModel {
    pub fn new(accrual: AccrualModel, dropout: DropoutModel, analysis_time: f64) -> Result<Self> {
        let c = Self {
            accrual,
            dropout,
            analysis_time,
        };
        c.validate()?;
        Ok(c)
    }

    /// Accrual of length `accrual` followed by `follow_up`, analysed at
    /// `t = accrual + follow_up`.
    pub fn uniform_accrual(accrual: f64, follow_up: f64, dropout: DropoutModel) -> Result<Self> {
        if !(follow_up >= 0.0) {
            return Err(Error::Domain(alloc::format!(
                "follow-up must be >= 0, got {follow_up}"
            )));
        }
        Self::new(AccrualModel::uniform(accrual)?, dropout, accrual + follow_up)
    }

    pub fn validate(&self) -> Result<()> {
        self.accrual.validate()?;
        self.dropout.validate()?;
        positive("analysis time", self.analysis_time)
    }

    /// `S_U(s) = S_C(s) * F_Y((t - s)+)`.
    pub fn survival(&self, s: f64) -> f64 {
        let admin = (self.analysis_time - s).max(0.0);
        let fy = self.accrual.cdf(admin);
        if fy == 0.0 {
            return 0.0;
        }
        self.dropout.survival(s) * fy
    }

    /// Kinks of `S_U` on `[0, t]`: the end of full follow-up `t - a` (when
    /// positive) and `t`.
    pub fn breakpoints(&self) -> Vec<f64> {
        let t = self.analysis_time;
        let kink = t - self.accrual.length();
        let mut v = Vec::with_capacity(2);
        if kink > 0.0 {
            v.push(kink);
        }
        v.push(t);
        v
    }

    /// Administrative censoring time of a subject entering at `entry`.
    pub fn administrative_time(&self, entry: f64) -> f64 {
        (self.analysis_time - entry).max(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn models() -> Vec<SurvivalModel> {
        vec![
            SurvivalModel::exponential(0.7).unwrap(),
            SurvivalModel::weibull(0.1, 1.0).unwrap(),
            SurvivalModel::weibull(1.22, 9.0).unwrap(),
            SurvivalModel::weibull(5.0, 4.0).unwrap(),
            SurvivalModel::piecewise_exponential(vec![1.0, 2.5], vec![0.3, 0.9, 0.5]).unwrap(),
        ]
    }

    #[test]
    fn basic_identities() {
        for m in models() {
            let mut prev = 0.0;
            for i in 1..400 {
                let s = i as f64 * 0.02;
                let l = m.cumulative_hazard(s);
                assert!(l >= prev);
                prev = l;
                assert!((m.survival(s) - libm::exp(-l)).abs() < 1e-12);
                assert!((m.density(s) - m.hazard(s) * m.survival(s)).abs() < 1e-12);
                assert!((m.cdf(s) + m.survival(s) - 1.0).abs() < 1e-12);
                let p = m.cdf(s);
                if p > 1e-12 && p < 1.0 - 1e-9 {
                    let back = m.quantile(p).unwrap();
                    assert!((back - s).abs() < 1e-8 * s.max(1.0), "{m:?} at {s}: {back}");
                }
            }
            assert_eq!(m.cumulative_hazard(0.0), 0.0);
        }
    }

    #[test]
    fn hazard_ratio_alternatives() {
        let w = SurvivalModel::weibull(1.0, 1.0).unwrap();
        assert_eq!(
            w.with_hazard_ratio(2.0).unwrap(),
            SurvivalModel::Weibull { shape: 1.0, median: 2.0 }
        );
        let w2 = SurvivalModel::weibull(2.0, 1.0).unwrap().with_hazard_ratio(4.0).unwrap();
        match w2 {
            SurvivalModel::Weibull { median, .. } => assert!((median - 2.0).abs() < 1e-15),
            _ => unreachable!(),
        }
        for m in models() {
            assert_eq!(m.with_hazard_ratio(1.0).unwrap(), m);
            let alt = m.with_hazard_ratio(1.75).unwrap();
            for s in [0.3, 1.7, 6.0] {
                let ratio = m.cumulative_hazard(s) / alt.cumulative_hazard(s);
                assert!((ratio - 1.75).abs() < 1e-12);
            }
            assert!((m.hazard_ratio_to(&alt).unwrap() - 1.75).abs() < 1e-12);
        }
        assert!(w.with_hazard_ratio(0.0).is_err());
        assert!(w.with_hazard_ratio(-1.0).is_err());
    }

    #[test]
    fn invalid_parameters() {
        assert!(SurvivalModel::weibull(0.0, 1.0).is_err());
        assert!(SurvivalModel::exponential(-1.0).is_err());
        assert!(SurvivalModel::piecewise_exponential(vec![1.0], vec![1.0]).is_err());
        assert!(SurvivalModel::piecewise_exponential(vec![2.0, 1.0], vec![1.0; 3]).is_err());
        assert!(AccrualModel::power(1.0, 0.0).is_err());
        assert!(DropoutModel::from_yearly_fraction(1.0).is_err());
    }

    #[test]
    fn combined_censoring_examples() {
        let c = CensoringModel::uniform_accrual(1.0, 3.0, DropoutModel::None).unwrap();
        assert_eq!(c.survival(2.0), 1.0);
        assert!((c.survival(3.5) - 0.5).abs() < 1e-15);
        assert_eq!(c.survival(4.0), 0.0);
        assert_eq!(c.survival(5.0), 0.0);
        assert_eq!(c.breakpoints(), vec![3.0, 4.0]);

        let d = DropoutModel::from_yearly_fraction(0.1).unwrap();
        let c = CensoringModel::uniform_accrual(1.0, 1.0, d).unwrap();
        // 0.9^1.5 * 0.5
        assert!((c.survival(1.5) - 0.426_907_484_122_731_2).abs() < 1e-14);
    }

    #[test]
    fn censoring_survival_is_monotone() {
        let d = DropoutModel::from_yearly_fraction(0.3).unwrap();
        for accrual in [AccrualModel::uniform(1.5).unwrap(), AccrualModel::power(1.0, 0.5).unwrap()] {
            let c = CensoringModel::new(accrual, d, 2.5).unwrap();
            let mut prev = 1.0;
            for i in 0..=300 {
                let s = i as f64 * 0.01;
                let v = c.survival(s);
                assert!((0.0..=1.0).contains(&v) && v <= prev + 1e-15);
                prev = v;
            }
        }
        let c = CensoringModel::uniform_accrual(1.0, 3.0, d).unwrap();
        for s in [0.0, 1.0, 2.9] {
            assert!((c.survival(s) - d.survival(s)).abs() < 1e-15);
        }
    }

    #[test]
    fn sampling_medians_and_infinite_dropout() {
        let e = SurvivalModel::exponential(0.4).unwrap();
        assert!((e.inverse_cumulative_hazard(-libm::log(0.5)) - LN_2 / 0.4).abs() < 1e-14);
        let w = SurvivalModel::weibull(1.22, 9.0).unwrap();
        assert!((w.quantile(0.5).unwrap() - 9.0).abs() < 1e-12);
        assert!((w.median() - 9.0).abs() < 1e-12);
        let mut rng = RngStream::new(3, 0);
        for _ in 0..10 {
            assert_eq!(DropoutModel::None.sample(&mut rng), f64::INFINITY);
        }
    }

    #[test]
    fn power_accrual() {
        let a = AccrualModel::power(2.0, 2.0).unwrap();
        assert_eq!(a.cdf(0.0), 0.0);
        assert_eq!(a.cdf(2.0), 1.0);
        assert!((a.cdf(1.0) - 0.25).abs() < 1e-15);
        assert!((a.quantile(0.25) - 1.0).abs() < 1e-15);
    }
}
