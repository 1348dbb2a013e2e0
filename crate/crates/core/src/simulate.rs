//! Monte Carlo engine for the empirical level and power of the test.
//!
//! Every replicate draws one dataset of the largest sample size in the
//! experiment from its own random stream `(master_seed, stream_base + i)`;
//! an arm with `n` subjects analyses the first `n` records. All arms of a
//! replicate therefore see the same data (common random numbers), and the
//! result is independent of how replicates are spread over workers.
//! Tallies are integer counts, so merging is exact in any order.

use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};
use core::ops::Range;

use crate::analysis::{km_weight, statistic, PlanningContext, SubjectRecord, TrialDataset};
use crate::design::{resolve_weight, sample_size, AccrualPlan, DesignSpec, WeightPolicy};
use crate::models::{CensoringModel, SurvivalModel};
use crate::numerics::{normal_quantile, RngStream};
use crate::presets::TableCell;
use crate::{Error, Result};

/// Replicates handed to one job invocation.
pub const CHUNK: u64 = 256;

/// Integer-valued results that combine associatively and commutatively.
pub trait Merge {
    fn merge(&mut self, other: Self);
}

/// Distributes replicate ranges over workers.
pub trait Runner {
    fn map_reduce<T, F>(&self, replications: u64, job: F) -> T
    where
        T: Merge + Send,
        F: Fn(Range<u64>) -> T + Sync;
}

/// Runs every chunk on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Runner for Sequential {
    fn map_reduce<T, F>(&self, replications: u64, job: F) -> T
    where
        T: Merge + Send,
        F: Fn(Range<u64>) -> T + Sync,
    {
        let mut acc = job(0..CHUNK.min(replications));
        let mut start = CHUNK;
        while start < replications {
            acc.merge(job(start..(start + CHUNK).min(replications)));
            start += CHUNK;
        }
        acc
    }
}

/// How an arm obtains its weight.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum WeightRule {
    Fixed(f64),
    /// Kaplan-Meier random weight, with the weight used when the data carry
    /// no censoring information (0.5 if unset).
    KaplanMeier { fallback: Option<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Arm {
    pub label: String,
    pub policy: Option<WeightPolicy>,
    pub n: u64,
    pub rule: WeightRule,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ArmTally {
    pub replications: u64,
    pub reject_two_sided: u64,
    pub reject_left: u64,
    pub reject_right: u64,
    pub indeterminate: u64,
    pub weight_fallbacks: u64,
    /// Sum of the weights used, in units of 2^-32.
    pub weight_sum_fixed: u64,
}

const WEIGHT_SCALE: f64 = 4_294_967_296.0;

impl ArmTally {
    fn add(&mut self, other: &ArmTally) {
        self.replications += other.replications;
        self.reject_two_sided += other.reject_two_sided;
        self.reject_left += other.reject_left;
        self.reject_right += other.reject_right;
        self.indeterminate += other.indeterminate;
        self.weight_fallbacks += other.weight_fallbacks;
        self.weight_sum_fixed += other.weight_sum_fixed;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tally {
    pub arms: Vec<ArmTally>,
}

impl Merge for Tally {
    fn merge(&mut self, other: Self) {
        for (a, b) in self.arms.iter_mut().zip(&other.arms) {
            a.add(b);
        }
    }
}

/// Data-generating law, test reference and a list of arms.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub truth: SurvivalModel,
    pub null_model: SurvivalModel,
    pub censoring: CensoringModel,
    pub arms: Vec<Arm>,
    /// Two-sided level; each one-sided test runs at `alpha / 2`.
    pub alpha: f64,
    pub master_seed: u64,
    pub stream_base: u64,
}

/// Per-subject draw of `(Y, T, C)` turned into what the test needs.
struct Generator<'a> {
    truth: &'a SurvivalModel,
    null: &'a SurvivalModel,
    censoring: &'a CensoringModel,
    /// `r` with `L_truth = L_null / r`, when it exists.
    ratio: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Draw {
    entry: f64,
    x: f64,
    event: bool,
    dropout: bool,
    a0: f64,
}

impl<'a> Generator<'a> {
    fn new(truth: &'a SurvivalModel, null: &'a SurvivalModel, censoring: &'a CensoringModel) -> Self {
        Self {
            truth,
            null,
            censoring,
            ratio: null.hazard_ratio_to(truth),
        }
    }

    /// Draws entry, event-time exponential and dropout in that order. With
    /// proportional hazards the event indicator and `A0` come straight from
    /// the exponential `E`: the event happens iff `r E <= L0(U)`, and then
    /// `A0 = r E`. `x` is only materialised when `times` is set.
    #[inline]
    fn draw(&self, rng: &mut RngStream, times: bool) -> Draw {
        let entry = self.censoring.accrual.sample(rng);
        let e = rng.exponential();
        let c = self.censoring.dropout.sample(rng);
        let admin = self.censoring.administrative_time(entry);
        let u = c.min(admin);
        match self.ratio {
            Some(r) => {
                let h = self.null.cumulative_hazard(u);
                let re = r * e;
                if re <= h {
                    let x = if times {
                        self.null.inverse_cumulative_hazard(re).min(u)
                    } else {
                        0.0
                    };
                    Draw { entry, x, event: true, dropout: false, a0: re }
                } else {
                    Draw { entry, x: u, event: false, dropout: c < admin, a0: h }
                }
            }
            None => {
                let t = self.truth.inverse_cumulative_hazard(e);
                if t <= u {
                    Draw { entry, x: t, event: true, dropout: false, a0: self.null.cumulative_hazard(t) }
                } else {
                    Draw { entry, x: u, event: false, dropout: c < admin, a0: self.null.cumulative_hazard(u) }
                }
            }
        }
    }
}

/// Draws `n` subject records at the analysis date of `censoring`, using
/// the same stream layout as the simulation engine.
pub fn simulate_dataset(
    truth: &SurvivalModel,
    censoring: &CensoringModel,
    n: usize,
    rng: &mut RngStream,
) -> Result<TrialDataset> {
    truth.validate()?;
    censoring.validate()?;
    let gen = Generator::new(truth, truth, censoring);
    let subjects = (0..n)
        .map(|_| {
            let d = gen.draw(rng, true);
            SubjectRecord {
                entry_time: d.entry,
                time_on_study: d.x,
                event: d.event,
                dropout: Some(d.dropout),
            }
        })
        .collect();
    TrialDataset::new(subjects, censoring.analysis_time)
}

impl Experiment {
    pub fn validate(&self) -> Result<()> {
        self.truth.validate()?;
        self.null_model.validate()?;
        self.censoring.validate()?;
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Domain(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.arms.is_empty() {
            return Err(Error::Domain("experiment has no arms".into()));
        }
        for arm in &self.arms {
            if arm.n == 0 {
                return Err(Error::Domain(format!("arm '{}' has n = 0", arm.label)));
            }
            if let WeightRule::Fixed(w) = arm.rule {
                if !(0.0..=1.0).contains(&w) {
                    return Err(Error::Policy(format!(
                        "arm '{}' has weight {w} outside [0, 1]",
                        arm.label
                    )));
                }
            }
        }
        Ok(())
    }

    fn empty_tally(&self) -> Tally {
        Tally {
            arms: vec![ArmTally::default(); self.arms.len()],
        }
    }

    /// Runs replicates `range` and returns their tally.
    pub fn run_range(&self, range: Range<u64>) -> Result<Tally> {
        let critical = normal_quantile(1.0 - self.alpha / 2.0)?;
        let gen = Generator::new(&self.truth, &self.null_model, &self.censoring);
        let mut order: Vec<usize> = (0..self.arms.len()).collect();
        order.sort_by_key(|&i| self.arms[i].n);
        let max_n = self.arms[order[order.len() - 1]].n;
        let times = self
            .arms
            .iter()
            .any(|a| matches!(a.rule, WeightRule::KaplanMeier { .. }));

        let mut tally = self.empty_tally();
        let mut pairs: Vec<(f64, bool)> = Vec::new();
        let mut scratch: Vec<(f64, bool)> = Vec::new();
        for index in range {
            let mut rng = RngStream::new(self.master_seed, self.stream_base.wrapping_add(index));
            pairs.clear();
            let mut events = 0u64;
            let mut a0 = 0.0;
            let mut drawn = 0u64;
            for &arm_index in &order {
                let arm = &self.arms[arm_index];
                while drawn < arm.n {
                    let d = gen.draw(&mut rng, times);
                    events += d.event as u64;
                    a0 += d.a0;
                    if times {
                        pairs.push((d.x, d.event));
                    }
                    drawn += 1;
                }
                let t = &mut tally.arms[arm_index];
                t.replications += 1;
                let weight = match arm.rule {
                    WeightRule::Fixed(w) => w,
                    WeightRule::KaplanMeier { fallback } => {
                        scratch.clear();
                        scratch.extend_from_slice(&pairs);
                        let rw = km_weight(&mut scratch, &self.null_model, fallback);
                        t.weight_fallbacks += rw.fallback as u64;
                        rw.weight
                    }
                };
                t.weight_sum_fixed += libm::round(weight * WEIGHT_SCALE) as u64;
                match statistic(events, a0, weight) {
                    Ok(z) => {
                        let left = z <= -critical;
                        let right = z >= critical;
                        t.reject_left += left as u64;
                        t.reject_right += right as u64;
                        t.reject_two_sided += (left || right) as u64;
                    }
                    Err(_) => t.indeterminate += 1,
                }
            }
            debug_assert_eq!(drawn, max_n);
        }
        Ok(tally)
    }

    pub fn run<R: Runner>(&self, replications: u64, runner: &R) -> Result<SimulationReport> {
        self.validate()?;
        if replications == 0 {
            return Err(Error::Domain("replications must be >= 1".into()));
        }
        // Surface configuration errors once rather than per chunk.
        normal_quantile(1.0 - self.alpha / 2.0)?;
        let tally = runner.map_reduce(replications, |range| {
            self.run_range(range).expect("validated experiment")
        });
        Ok(self.report(&tally, replications))
    }

    fn report(&self, tally: &Tally, replications: u64) -> SimulationReport {
        let truth_is_null = self.null_model.hazard_ratio_to(&self.truth) == Some(1.0)
            || self.truth == self.null_model;
        let arms = self
            .arms
            .iter()
            .zip(&tally.arms)
            .map(|(arm, t)| {
                let r = t.replications;
                let two = Rate::from_count(t.reject_two_sided, r);
                ArmReport {
                    label: arm.label.clone(),
                    policy: arm.policy,
                    n: arm.n,
                    rule: arm.rule,
                    replications: r,
                    indeterminate: t.indeterminate,
                    weight_fallbacks: t.weight_fallbacks,
                    mean_weight: t.weight_sum_fixed as f64 / WEIGHT_SCALE / r as f64,
                    rejection_two_sided: two,
                    rejection_left: Rate::from_count(t.reject_left, r),
                    rejection_right: Rate::from_count(t.reject_right, r),
                    power: (!truth_is_null).then_some(two),
                    tally: *t,
                }
            })
            .collect();
        SimulationReport {
            master_seed: self.master_seed,
            stream_base: self.stream_base,
            replications,
            alpha: self.alpha,
            truth_is_null,
            se_degenerate: replications < 2,
            arms,
        }
    }
}

/// Empirical proportion with its binomial standard error
/// `sqrt(p (1 - p) / R)`; the error is absent for a single replicate.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Rate {
    pub estimate: f64,
    pub se: Option<f64>,
}

impl Rate {
    pub fn from_count(count: u64, replications: u64) -> Self {
        let p = count as f64 / replications as f64;
        Self {
            estimate: p,
            se: (replications >= 2).then(|| libm::sqrt(p * (1.0 - p) / replications as f64)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ArmReport {
    pub label: String,
    pub policy: Option<WeightPolicy>,
    pub n: u64,
    pub rule: WeightRule,
    pub replications: u64,
    pub indeterminate: u64,
    pub weight_fallbacks: u64,
    pub mean_weight: f64,
    /// Empirical level (or power) of the two-sided test. Indeterminate
    /// replicates count as non-rejections.
    pub rejection_two_sided: Rate,
    /// Left-sided test at `alpha / 2`: fewer events than expected.
    pub rejection_left: Rate,
    pub rejection_right: Rate,
    /// Two-sided rejection rate when the truth is not the null.
    pub power: Option<Rate>,
    pub tally: ArmTally,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SimulationReport {
    pub master_seed: u64,
    pub stream_base: u64,
    pub replications: u64,
    pub alpha: f64,
    pub truth_is_null: bool,
    /// Fewer than two replicates: standard errors are not available.
    pub se_degenerate: bool,
    pub arms: Vec<ArmReport>,
}

/// One scenario with a single sample size and several policies.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub truth: SurvivalModel,
    pub null_model: SurvivalModel,
    pub censoring: CensoringModel,
    pub n: u64,
    pub policies: Vec<WeightPolicy>,
    pub replications: u64,
    pub master_seed: u64,
    pub alpha: f64,
    /// Planning assumptions for the model-derived weights; defaults to the
    /// true censoring with the truth as alternative. For `random_km` it
    /// provides the fallback weight.
    pub planning: Option<PlanningContext>,
}

/// Resolves a policy into an arm rule for the given planning assumptions.
pub fn weight_rule(
    policy: &WeightPolicy,
    null: &SurvivalModel,
    planning: &PlanningContext,
    km_fallback: Option<f64>,
) -> Result<WeightRule> {
    Ok(match policy {
        WeightPolicy::RandomKm => WeightRule::KaplanMeier {
            fallback: km_fallback,
        },
        p => {
            let alt = planning.alternative.as_ref().unwrap_or(null);
            WeightRule::Fixed(resolve_weight(p, null, alt, &planning.censoring, &planning.quadrature)?)
        }
    })
}

pub fn run_scenario<R: Runner>(spec: &ScenarioSpec, runner: &R) -> Result<SimulationReport> {
    let planning = match &spec.planning {
        Some(p) => p.clone(),
        None => PlanningContext {
            alternative: Some(spec.truth.clone()),
            ..PlanningContext::new(spec.censoring)
        },
    };
    let km_fallback = match &spec.planning {
        Some(p) => Some(resolve_weight(
            &WeightPolicy::UncorrelatedNull,
            &spec.null_model,
            &spec.null_model,
            &p.censoring,
            &p.quadrature,
        )?),
        None => None,
    };
    let arms = spec
        .policies
        .iter()
        .map(|p| {
            Ok(Arm {
                label: format!("{p}"),
                policy: Some(*p),
                n: spec.n,
                rule: weight_rule(p, &spec.null_model, &planning, km_fallback)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Experiment {
        truth: spec.truth.clone(),
        null_model: spec.null_model.clone(),
        censoring: spec.censoring,
        arms,
        alpha: spec.alpha,
        master_seed: spec.master_seed,
        stream_base: 0,
    }
    .run(spec.replications, runner)
}

/// Grid of fixed weights against nested sample sizes on shared data.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub label: String,
    pub truth: SurvivalModel,
    pub null_model: SurvivalModel,
    pub censoring: CensoringModel,
    pub weights: Vec<f64>,
    pub sample_sizes: Vec<u64>,
    pub replications: u64,
    pub master_seed: u64,
    pub stream_base: u64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepCell {
    pub n: u64,
    pub weight: f64,
    pub rejection_left: Rate,
    pub rejection_two_sided: Rate,
    pub indeterminate: u64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepReport {
    pub label: String,
    pub master_seed: u64,
    pub replications: u64,
    pub cells: Vec<SweepCell>,
}

impl SweepReport {
    pub fn cell(&self, n: u64, weight: f64) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.n == n && c.weight == weight)
    }
}

pub fn weight_sweep<R: Runner>(spec: &SweepSpec, runner: &R) -> Result<SweepReport> {
    if spec.weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
        return Err(Error::Policy("sweep weights must lie in [0, 1]".into()));
    }
    let mut arms = Vec::with_capacity(spec.weights.len() * spec.sample_sizes.len());
    for &n in &spec.sample_sizes {
        for &w in &spec.weights {
            arms.push(Arm {
                label: format!("n={n} w={w}"),
                policy: None,
                n,
                rule: WeightRule::Fixed(w),
            });
        }
    }
    let report = Experiment {
        truth: spec.truth.clone(),
        null_model: spec.null_model.clone(),
        censoring: spec.censoring,
        arms,
        alpha: spec.alpha,
        master_seed: spec.master_seed,
        stream_base: spec.stream_base,
    }
    .run(spec.replications, runner)?;
    let cells = report
        .arms
        .iter()
        .map(|a| SweepCell {
            n: a.n,
            weight: match a.rule {
                WeightRule::Fixed(w) => w,
                WeightRule::KaplanMeier { .. } => unreachable!("sweep arms are fixed"),
            },
            rejection_left: a.rejection_left,
            rejection_two_sided: a.rejection_two_sided,
            indeterminate: a.indeterminate,
        })
        .collect();
    Ok(SweepReport {
        label: spec.label.clone(),
        master_seed: spec.master_seed,
        replications: spec.replications,
        cells,
    })
}

/// Planned sample size and simulated operating characteristics of one
/// weight policy.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OperatingRow {
    pub policy: WeightPolicy,
    pub n: u64,
    pub weight: f64,
    pub event_rate_null: f64,
    pub alpha_two_sided: Rate,
    /// Left-sided rejection rate under the null at `alpha / 2`.
    pub alpha_left: Rate,
    pub alpha_right: Rate,
    pub indeterminate: u64,
    /// Two-sided rejection rate under the planning alternative.
    pub power: Option<Rate>,
    /// Smallest `|alpha_left - alpha / 2|` among the compared policies.
    pub best: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TableOptions {
    pub replications: u64,
    pub master_seed: u64,
    pub with_power: bool,
}

/// Plans each spec, then simulates level (and optionally power) with every
/// policy analysing a prefix of the same replicate data. The specs must
/// share null model, alternative, level and a fixed accrual length. The
/// null run uses streams from `stream_base`, the alternative run from
/// `stream_base + 2^32`.
pub fn operating_characteristics<R: Runner>(
    specs: &[DesignSpec],
    options: &TableOptions,
    stream_base: u64,
    runner: &R,
) -> Result<Vec<OperatingRow>> {
    let first = specs
        .first()
        .ok_or_else(|| Error::Domain("no designs to simulate".into()))?;
    for s in specs {
        let same = s.null_model == first.null_model
            && s.alternative == first.alternative
            && s.alpha == first.alpha
            && s.accrual == first.accrual
            && s.accrual_shape == first.accrual_shape
            && s.follow_up == first.follow_up
            && s.dropout == first.dropout;
        if !same {
            return Err(Error::Domain(
                "designs compared in one simulation must differ only in the weight policy".into(),
            ));
        }
        if matches!(s.accrual, AccrualPlan::Rate(_)) {
            return Err(Error::Domain(
                "operating characteristics need a fixed accrual length".into(),
            ));
        }
    }
    let designs = specs.iter().map(sample_size).collect::<Result<Vec<_>>>()?;
    let null = first.null_model.clone();
    let censoring = first.censoring_for(designs[0].accrual_length)?;
    let arms: Vec<Arm> = specs
        .iter()
        .zip(&designs)
        .map(|(s, d)| Arm {
            label: format!("{}", s.weight_policy),
            policy: Some(s.weight_policy),
            n: d.n,
            rule: WeightRule::Fixed(d.weight),
        })
        .collect();
    let mut experiment = Experiment {
        truth: null.clone(),
        null_model: null.clone(),
        censoring,
        arms,
        alpha: first.alpha,
        master_seed: options.master_seed,
        stream_base,
    };
    let level = experiment.run(options.replications, runner)?;
    let power = if options.with_power {
        experiment.truth = first.alternative.resolve(&null)?;
        experiment.stream_base = stream_base.wrapping_add(1 << 32);
        Some(experiment.run(options.replications, runner)?)
    } else {
        None
    };
    let target = first.alpha / 2.0;
    let best = level
        .arms
        .iter()
        .enumerate()
        .min_by(|a, b| {
            let da = (a.1.rejection_left.estimate - target).abs();
            let db = (b.1.rejection_left.estimate - target).abs();
            da.total_cmp(&db)
        })
        .map(|(i, _)| i);
    Ok(specs
        .iter()
        .zip(&designs)
        .enumerate()
        .map(|(i, (s, d))| {
            let arm = &level.arms[i];
            OperatingRow {
                policy: s.weight_policy,
                n: d.n,
                weight: d.weight,
                event_rate_null: d.expected_event_rate_null,
                alpha_two_sided: arm.rejection_two_sided,
                alpha_left: arm.rejection_left,
                alpha_right: arm.rejection_right,
                indeterminate: arm.indeterminate,
                power: power.as_ref().map(|r| r.arms[i].rejection_two_sided),
                best: best == Some(i),
            }
        })
        .collect())
}

/// One (cell, policy) row of a table-shaped report.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TableRow {
    pub cell: TableCell,
    pub row: OperatingRow,
}

/// Runs [`operating_characteristics`] on every cell; cell `k` uses streams
/// from `2k * 2^32`.
pub fn scenario_table<R: Runner>(
    cells: &[TableCell],
    policies: &[WeightPolicy],
    options: &TableOptions,
    runner: &R,
) -> Result<Vec<TableRow>> {
    let mut rows = Vec::with_capacity(cells.len() * policies.len());
    for (k, cell) in cells.iter().enumerate() {
        let specs = policies
            .iter()
            .map(|p| cell.design(*p))
            .collect::<Result<Vec<_>>>()?;
        let base = (2 * k as u64) << 32;
        for row in operating_characteristics(&specs, options, base, runner)? {
            rows.push(TableRow { cell: *cell, row });
        }
    }
    Ok(rows)
}
