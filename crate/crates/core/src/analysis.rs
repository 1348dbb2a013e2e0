//! The one-sample log-rank test on subject-level data.
//!
//! With `N` the observed number of events and `A0` the summed null
//! cumulative hazard over each subject's time on study, the statistic is
//! `z = (N - A0) / sqrt(w N + (1 - w) A0)`. Small values of `z` favour the
//! new treatment (fewer events than expected).

use alloc::format;
use alloc::vec::Vec;

use crate::design::{resolve_weight, WeightPolicy};
use crate::models::{CensoringModel, SurvivalModel};
use crate::numerics::{normal_cdf, normal_quantile, normal_sf, QuadratureSettings};
use crate::{Error, Result};

/// One subject as observed at the analysis date.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SubjectRecord {
    /// Calendar entry time `y`.
    pub entry_time: f64,
    /// `x = min(T, C, t - y)`.
    pub time_on_study: f64,
    pub event: bool,
    /// Lost to follow-up before the event and before the analysis date.
    /// Only informative; the random weight does not need it.
    #[cfg_attr(feature = "serde", serde(default))]
    pub dropout: Option<bool>,
}

impl SubjectRecord {
    pub fn new(entry_time: f64, time_on_study: f64, event: bool) -> Self {
        Self {
            entry_time,
            time_on_study,
            event,
            dropout: None,
        }
    }

    fn check(&self, analysis_time: f64) -> core::result::Result<(), alloc::string::String> {
        let y = self.entry_time;
        let x = self.time_on_study;
        if !(y >= 0.0) || !y.is_finite() {
            return Err(format!("entry time must be finite and >= 0, got {y}"));
        }
        if !(x >= 0.0) || !x.is_finite() {
            return Err(format!("time on study must be finite and >= 0, got {x}"));
        }
        if self.event && self.dropout == Some(true) {
            return Err("a record cannot be both an event and a dropout".into());
        }
        if y > analysis_time {
            return Err(format!(
                "entry time {y} lies after the analysis time {analysis_time}"
            ));
        }
        let window = analysis_time - y;
        if x > window + 1e-9 * analysis_time.max(1.0) {
            return Err(format!(
                "time on study {x} exceeds the available follow-up {window}"
            ));
        }
        Ok(())
    }
}

/// Validated, immutable collection of records at one analysis date.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct TrialDataset {
    subjects: Vec<SubjectRecord>,
    analysis_time: f64,
}

impl TrialDataset {
    pub fn new(subjects: Vec<SubjectRecord>, analysis_time: f64) -> Result<Self> {
        if !(analysis_time > 0.0) || !analysis_time.is_finite() {
            return Err(Error::InvalidData(format!(
                "analysis time must be finite and > 0, got {analysis_time}"
            )));
        }
        if subjects.is_empty() {
            return Err(Error::InvalidData("dataset has no subjects".into()));
        }
        for (i, s) in subjects.iter().enumerate() {
            s.check(analysis_time)
                .map_err(|m| Error::InvalidData(format!("subject {}: {m}", i + 1)))?;
        }
        Ok(Self {
            subjects,
            analysis_time,
        })
    }

    pub fn subjects(&self) -> &[SubjectRecord] {
        &self.subjects
    }

    pub fn analysis_time(&self) -> f64 {
        self.analysis_time
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn into_subjects(self) -> Vec<SubjectRecord> {
        self.subjects
    }
}

/// Observed events `N` and expected events `A0` under the null.
pub fn counting_and_compensator(data: &TrialDataset, null: &SurvivalModel) -> (u64, f64) {
    data.subjects
        .iter()
        .fold((0u64, 0.0f64), |(n, a), s| {
            (n + s.event as u64, a + null.cumulative_hazard(s.time_on_study))
        })
}

/// `(N - A0) / sqrt(w N + (1 - w) A0)`.
pub fn statistic(events: u64, expected: f64, weight: f64) -> Result<f64> {
    let n = events as f64;
    let variance = weight * n + (1.0 - weight) * expected;
    if !(variance > 0.0) {
        return Err(Error::Indeterminate {
            events,
            expected,
            weight,
        });
    }
    Ok((n - expected) / libm::sqrt(variance))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TestOutcome {
    pub n: u64,
    pub events: u64,
    pub expected: f64,
    pub weight: f64,
    pub statistic: f64,
    pub p_two_sided: f64,
    /// `P(Z <= z)`, evidence for fewer events than expected.
    pub p_left: f64,
    pub p_right: f64,
    pub alpha: f64,
    pub reject_two_sided: bool,
    /// Rejects when `z <= -z_{1-alpha/2}`.
    pub reject_left: bool,
    pub reject_right: bool,
    /// The random weight fell back to a planning value.
    pub weight_fallback: bool,
}

impl TestOutcome {
    /// Test decision from the summary counts. The one-sided tests each run
    /// at level `alpha / 2`, so the two-sided test rejects exactly when one
    /// of them does.
    pub fn from_counts(n: u64, events: u64, expected: f64, weight: f64, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Domain(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        if !(0.0..=1.0).contains(&weight) {
            return Err(Error::Policy(format!("weight must lie in [0, 1], got {weight}")));
        }
        let z = statistic(events, expected, weight)?;
        let c = normal_quantile(1.0 - alpha / 2.0)?;
        let p_left = normal_cdf(z);
        let p_right = normal_sf(z);
        Ok(Self {
            n,
            events,
            expected,
            weight,
            statistic: z,
            p_two_sided: (2.0 * normal_sf(z.abs())).min(1.0),
            p_left,
            p_right,
            alpha,
            reject_two_sided: z.abs() >= c,
            reject_left: z <= -c,
            reject_right: z >= c,
            weight_fallback: false,
        })
    }
}

/// Planning assumptions that data-independent policies need at analysis
/// time.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanningContext {
    pub censoring: CensoringModel,
    /// Only needed for `uncorrelated_alt`.
    pub alternative: Option<SurvivalModel>,
    pub quadrature: QuadratureSettings,
}

impl PlanningContext {
    pub fn new(censoring: CensoringModel) -> Self {
        Self {
            censoring,
            alternative: None,
            quadrature: QuadratureSettings::default(),
        }
    }

    fn weight(&self, policy: &WeightPolicy, null: &SurvivalModel) -> Result<f64> {
        let alt = match (policy, &self.alternative) {
            (_, Some(a)) => a,
            (WeightPolicy::UncorrelatedAlt, None) => {
                return Err(Error::Policy(
                    "uncorrelated_alt needs the planning alternative".into(),
                ))
            }
            (_, None) => null,
        };
        resolve_weight(policy, null, alt, &self.censoring, &self.quadrature)
    }
}

/// Runs the test with a pre-specified weight policy.
///
/// `context` is required for the model-derived policies. For `random_km`
/// it supplies the fallback weight (the planning `w0`); without it the
/// fallback is 0.5.
pub fn run_test(
    data: &TrialDataset,
    null: &SurvivalModel,
    policy: &WeightPolicy,
    alpha: f64,
    context: Option<&PlanningContext>,
) -> Result<TestOutcome> {
    null.validate()?;
    policy.validate()?;
    let (weight, fallback) = match policy {
        WeightPolicy::RandomKm => {
            let planned = match context {
                Some(c) => Some(c.weight(&WeightPolicy::UncorrelatedNull, null)?),
                None => None,
            };
            let rw = random_weight_km(data, null, planned);
            (rw.weight, rw.fallback)
        }
        p => match p.constant_weight() {
            Some(w) => (w, false),
            None => {
                let c = context.ok_or_else(|| {
                    Error::Policy(format!(
                        "policy {p} needs the planning censoring assumptions"
                    ))
                })?;
                (c.weight(p, null)?, false)
            }
        },
    };
    let (events, expected) = counting_and_compensator(data, null);
    let mut out = TestOutcome::from_counts(data.len() as u64, events, expected, weight, alpha)?;
    out.weight_fallback = fallback;
    Ok(out)
}

/// Data-driven weight and how it was obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RandomWeight {
    pub weight: f64,
    /// No usable censoring information; `weight` is the fallback.
    pub fallback: bool,
    /// Number of distinct jump points of the estimated distribution of U.
    pub jumps: usize,
}

/// `W = 1 - sum dF_U(u) S0(u) L0(u) / sum dF_U(u) F0(u)`.
///
/// `F_U` is the Kaplan-Meier estimate of the distribution of the combined
/// censoring time `U = min(C, t - Y)`, treating every record without an
/// event as an observation of `U` and every event as censoring it. At tied
/// times the `U`-observations leave the risk set first.
pub fn random_weight_km(
    data: &TrialDataset,
    null: &SurvivalModel,
    fallback: Option<f64>,
) -> RandomWeight {
    let mut obs: Vec<(f64, bool)> = data
        .subjects
        .iter()
        .map(|s| (s.time_on_study, s.event))
        .collect();
    km_weight(&mut obs, null, fallback)
}

/// Kaplan-Meier random weight from `(time on study, event)` pairs; sorts
/// `obs` in place.
pub(crate) fn km_weight(
    obs: &mut [(f64, bool)],
    null: &SurvivalModel,
    fallback: Option<f64>,
) -> RandomWeight {
    let fallback_weight = fallback.unwrap_or(0.5).clamp(0.0, 1.0);
    // Ascending time; at equal times U-observations (no event) first.
    obs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut at_risk = obs.len() as f64;
    let mut surv = 1.0;
    let mut num = 0.0;
    let mut den = 0.0;
    let mut jumps = 0;
    let mut i = 0;
    while i < obs.len() {
        let u = obs[i].0;
        let mut d = 0usize;
        let mut removed = 0usize;
        while i < obs.len() && obs[i].0 == u {
            d += !obs[i].1 as usize;
            removed += 1;
            i += 1;
        }
        if d > 0 {
            let jump = surv * d as f64 / at_risk;
            surv -= jump;
            jumps += 1;
            let s0 = null.survival(u);
            if s0 > 0.0 {
                num += jump * s0 * null.cumulative_hazard(u);
            }
            den += jump * null.cdf(u);
        }
        at_risk -= removed as f64;
    }
    if !(den > 0.0) {
        return RandomWeight {
            weight: fallback_weight,
            fallback: true,
            jumps,
        };
    }
    RandomWeight {
        weight: (1.0 - num / den).clamp(0.0, 1.0),
        fallback: false,
        jumps,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConsistencyRow {
    pub n: usize,
    pub weight: f64,
    /// `(W N + (1 - W) A0) / n`.
    pub estimate: f64,
    pub gap: f64,
    /// Standard error of the per-subject mean, holding `W` fixed.
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConsistencyReport {
    pub limit: f64,
    pub rows: Vec<ConsistencyRow>,
    /// Gap at the largest `n` is below the gap at the smallest.
    pub shrinking: bool,
    pub within_3se_at_largest: bool,
}

/// Checks that the weighted variance estimate with a (possibly random)
/// weight approaches `limit`, the expected event rate, as `n` grows.
pub fn consistency_check_random_weight<W>(
    datasets: &[TrialDataset],
    null: &SurvivalModel,
    limit: f64,
    mut weight: W,
) -> Result<ConsistencyReport>
where
    W: FnMut(&TrialDataset) -> Result<f64>,
{
    let mut rows = Vec::with_capacity(datasets.len());
    for data in datasets {
        let w = weight(data)?;
        let n = data.len();
        let contributions = data.subjects().iter().map(|s| {
            w * (s.event as u8 as f64) + (1.0 - w) * null.cumulative_hazard(s.time_on_study)
        });
        let (sum, sum_sq) = contributions.fold((0.0, 0.0), |(a, b), c| (a + c, b + c * c));
        let mean = sum / n as f64;
        let var = if n > 1 {
            ((sum_sq - n as f64 * mean * mean) / (n as f64 - 1.0)).max(0.0)
        } else {
            0.0
        };
        rows.push(ConsistencyRow {
            n,
            weight: w,
            estimate: mean,
            gap: (mean - limit).abs(),
            se: libm::sqrt(var / n as f64),
        });
    }
    rows.sort_by_key(|r| r.n);
    let (shrinking, within) = match (rows.first(), rows.last()) {
        (Some(first), Some(last)) => (last.gap <= first.gap, last.gap <= 3.0 * last.se),
        _ => (false, false),
    };
    Ok(ConsistencyReport {
        limit,
        rows,
        shrinking,
        within_3se_at_largest: within,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::DropoutModel;
    use alloc::vec;

    fn exp_median(m: f64) -> SurvivalModel {
        SurvivalModel::exponential_median(m).unwrap()
    }

    #[test]
    fn event_at_the_median() {
        let d = TrialDataset::new(vec![SubjectRecord::new(0.0, 2.0, true)], 3.0).unwrap();
        let (n, a) = counting_and_compensator(&d, &exp_median(2.0));
        assert_eq!(n, 1);
        assert!((a - core::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn empty_follow_up() {
        let d = TrialDataset::new(
            vec![SubjectRecord::new(1.0, 0.0, false), SubjectRecord::new(1.0, 0.0, false)],
            1.0,
        )
        .unwrap();
        assert_eq!(counting_and_compensator(&d, &exp_median(1.0)), (0, 0.0));
        let out = run_test(&d, &exp_median(1.0), &WeightPolicy::Wu, 0.05, None);
        assert!(matches!(out, Err(Error::Indeterminate { .. })));
    }

    #[test]
    fn record_validation() {
        let bad = [
            SubjectRecord::new(-1.0, 0.5, false),
            SubjectRecord::new(0.5, 1.0, false),
            SubjectRecord::new(2.0, 0.0, false),
            SubjectRecord {
                dropout: Some(true),
                ..SubjectRecord::new(0.0, 0.5, true)
            },
            SubjectRecord::new(0.0, f64::NAN, false),
        ];
        for r in bad {
            assert!(TrialDataset::new(vec![r], 1.0).is_err(), "{r:?}");
        }
        assert!(TrialDataset::new(vec![], 1.0).is_err());
    }

    #[test]
    fn perfect_agreement() {
        for w in [0.0, 0.3, 1.0] {
            let o = TestOutcome::from_counts(50, 10, 10.0, w, 0.05).unwrap();
            assert_eq!(o.statistic, 0.0);
            assert_eq!(o.p_two_sided, 1.0);
            assert!(!o.reject_two_sided);
        }
    }

    #[test]
    fn compensator_is_the_classical_statistic() {
        let o = TestOutcome::from_counts(100, 8, 20.0, 0.0, 0.05).unwrap();
        assert_eq!(o.statistic, (8.0 - 20.0) / libm::sqrt(20.0));
        assert!(o.reject_left && o.reject_two_sided && !o.reject_right);
    }

    #[test]
    fn pbc_style_statistic() {
        let o = TestOutcome::from_counts(106, 30, 41.7, 0.1923, 0.05).unwrap();
        let expect = (30.0 - 41.7) / libm::sqrt(0.8077 * 41.7 + 0.1923 * 30.0);
        assert!((o.statistic - expect).abs() < 1e-14);
    }

    #[test]
    fn counting_weight_without_events_is_indeterminate() {
        assert!(matches!(
            TestOutcome::from_counts(10, 0, 3.0, 1.0, 0.05),
            Err(Error::Indeterminate { .. })
        ));
        assert!(TestOutcome::from_counts(10, 0, 3.0, 0.9, 0.05).is_ok());
    }

    #[test]
    fn model_policies_need_context() {
        let d = TrialDataset::new(vec![SubjectRecord::new(0.0, 1.0, true)], 2.0).unwrap();
        let null = exp_median(1.0);
        assert!(matches!(
            run_test(&d, &null, &WeightPolicy::UncorrelatedNull, 0.05, None),
            Err(Error::Policy(_))
        ));
        let c = CensoringModel::uniform_accrual(1.0, 1.0, DropoutModel::None).unwrap();
        let ctx = PlanningContext::new(c);
        let o = run_test(&d, &null, &WeightPolicy::UncorrelatedNull, 0.05, Some(&ctx)).unwrap();
        assert!((o.weight - 0.4359).abs() < 5e-5);
    }

    #[test]
    fn all_administratively_censored() {
        let t = 2.0;
        let ys = [0.1, 0.4, 0.9, 1.3];
        let subjects: Vec<_> = ys
            .iter()
            .map(|&y| SubjectRecord::new(y, t - y, false))
            .collect();
        let d = TrialDataset::new(subjects, t).unwrap();
        let null = exp_median(1.5);
        let rw = random_weight_km(&d, &null, None);
        assert!(!rw.fallback);
        assert_eq!(rw.jumps, 4);
        let (num, den) = ys.iter().fold((0.0, 0.0), |(a, b), &y| {
            let u = t - y;
            (a + null.survival(u) * null.cumulative_hazard(u), b + null.cdf(u))
        });
        assert!((rw.weight - (1.0 - num / den)).abs() < 1e-14);
    }

    #[test]
    fn single_jump_oracle() {
        let d = TrialDataset::new(
            vec![
                SubjectRecord::new(0.0, 0.3, true),
                SubjectRecord {
                    dropout: Some(true),
                    ..SubjectRecord::new(0.0, 0.5, false)
                },
            ],
            1.0,
        )
        .unwrap();
        let null = exp_median(1.0);
        let rw = random_weight_km(&d, &null, None);
        let u = 0.5;
        let expect = 1.0 - null.survival(u) * null.cumulative_hazard(u) / null.cdf(u);
        assert!((rw.weight - expect).abs() < 1e-14);
        assert_eq!(rw.jumps, 1);
    }

    #[test]
    fn saturated_data_falls_back() {
        let d = TrialDataset::new(
            vec![SubjectRecord::new(0.0, 0.3, true), SubjectRecord::new(0.0, 0.4, true)],
            1.0,
        )
        .unwrap();
        let null = exp_median(1.0);
        let rw = random_weight_km(&d, &null, None);
        assert!(rw.fallback);
        assert_eq!(rw.weight, 0.5);
        assert_eq!(random_weight_km(&d, &null, Some(0.2)).weight, 0.2);
        let o = run_test(&d, &null, &WeightPolicy::RandomKm, 0.05, None).unwrap();
        assert!(o.weight_fallback);
    }

    #[test]
    fn tie_processes_censoring_observation_first() {
        // Event and U-observation at the same time: the U jump uses the
        // full risk set of two.
        let d = TrialDataset::new(
            vec![
                SubjectRecord::new(0.0, 0.5, true),
                SubjectRecord::new(0.5, 0.5, false),
            ],
            1.0,
        )
        .unwrap();
        let null = exp_median(1.0);
        let rw = random_weight_km(&d, &null, None);
        assert_eq!(rw.jumps, 1);
        let u = 0.5;
        let expect = 1.0 - null.survival(u) * null.cumulative_hazard(u) / null.cdf(u);
        assert!((rw.weight - expect).abs() < 1e-14);
    }
}
