//! Published scenario grids: the Weibull table grid, the primary biliary
//! cirrhosis planning example, the accrual/dropout misspecification study
//! and the four exponential weight-sweep scenarios.

use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};

use crate::design::{
    expected_event_rate, hazard_for_event_rate, weight_uncorrelated_null, Alternative, DesignSpec,
    WeightPolicy,
};
use crate::models::{AccrualModel, CensoringModel, DropoutModel, SurvivalModel};
use crate::numerics::{QuadratureSettings, RootSettings};
use crate::Result;

pub const TABLE_SHAPES: [f64; 6] = [0.1, 0.25, 0.5, 1.0, 2.0, 5.0];
pub const TABLE_MEDIANS: [f64; 3] = [1.0, 2.0, 4.0];
pub const TABLE_EFFECTS: [f64; 3] = [1.2, 1.5, 2.0];
pub const TABLE_ACCRUAL: f64 = 3.0;
pub const TABLE_FOLLOW_UP: f64 = 1.0;

/// One Weibull scenario of the table grid.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TableCell {
    pub shape: f64,
    pub median: f64,
    pub effect: f64,
}

impl TableCell {
    pub fn null_model(&self) -> Result<SurvivalModel> {
        SurvivalModel::weibull(self.shape, self.median)
    }

    pub fn design(&self, policy: WeightPolicy) -> Result<DesignSpec> {
        Ok(DesignSpec::new(
            self.null_model()?,
            Alternative::HazardRatio(self.effect),
            TABLE_ACCRUAL,
            TABLE_FOLLOW_UP,
            0.05,
            0.2,
            policy,
        ))
    }
}

/// Uniform accrual over three years, one year of follow-up, no dropout.
pub fn table_censoring() -> CensoringModel {
    CensoringModel::uniform_accrual(TABLE_ACCRUAL, TABLE_FOLLOW_UP, DropoutModel::None)
        .expect("valid constants")
}

/// All 54 cells, ordered by effect, then shape, then median.
pub fn table_cells() -> Vec<TableCell> {
    let mut cells = Vec::with_capacity(54);
    for &effect in &TABLE_EFFECTS {
        for &shape in &TABLE_SHAPES {
            for &median in &TABLE_MEDIANS {
                cells.push(TableCell {
                    shape,
                    median,
                    effect,
                });
            }
        }
    }
    cells
}

/// PBC planning: Weibull shape 1.22, median 9 years, five years of accrual
/// and three of follow-up, hazard ratio 1.75.
pub fn pbc_design(policy: WeightPolicy) -> DesignSpec {
    DesignSpec::new(
        SurvivalModel::weibull(1.22, 9.0).expect("valid constants"),
        Alternative::HazardRatio(1.75),
        5.0,
        3.0,
        0.05,
        0.2,
        policy,
    )
}

/// A named planning assumption for the accrual/dropout sensitivity study.
#[derive(Debug, Clone, PartialEq)]
pub struct Misspecification {
    pub label: String,
    pub censoring: CensoringModel,
}

/// Exponential null with median one year, analysed at `t = 2`.
pub fn misspecification_null() -> SurvivalModel {
    SurvivalModel::exponential_median(1.0).expect("valid constants")
}

/// Baseline (uniform accrual over one year, 10% yearly dropout) followed by
/// six perturbations. The analysis date stays at two years throughout.
pub fn misspecifications() -> Result<Vec<Misspecification>> {
    let ten = DropoutModel::from_yearly_fraction(0.1)?;
    let t = 2.0;
    let mk = |label: &str, accrual: AccrualModel, dropout: DropoutModel| -> Result<_> {
        Ok(Misspecification {
            label: label.into(),
            censoring: CensoringModel::new(accrual, dropout, t)?,
        })
    };
    Ok(vec![
        mk("baseline", AccrualModel::uniform(1.0)?, ten)?,
        mk("no dropout", AccrualModel::uniform(1.0)?, DropoutModel::None)?,
        mk(
            "30% dropout",
            AccrualModel::uniform(1.0)?,
            DropoutModel::from_yearly_fraction(0.3)?,
        )?,
        mk("early accrual", AccrualModel::power(1.0, 0.5)?, ten)?,
        mk("late accrual", AccrualModel::power(1.0, 2.0)?, ten)?,
        mk("accrual 0.5", AccrualModel::uniform(0.5)?, ten)?,
        mk("accrual 1.5", AccrualModel::uniform(1.5)?, ten)?,
    ])
}

pub const SWEEP_EVENT_RATES: [f64; 4] = [0.2, 0.4, 0.6, 0.8];
pub const SWEEP_SAMPLE_SIZES: [u64; 7] = [25, 50, 100, 250, 500, 1000, 5000];

/// Weights 0, 0.01, ..., 1.
pub fn sweep_weight_grid() -> Vec<f64> {
    (0..=100).map(|k| k as f64 / 100.0).collect()
}

/// One exponential scenario of the weight sweep.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepScenario {
    pub label: String,
    pub target_event_rate: f64,
    pub model: SurvivalModel,
    pub censoring: CensoringModel,
    /// Uncorrelated weight under the true accrual and dropout.
    pub weight_uncorrelated: f64,
    /// Range of the uncorrelated weight when the yearly dropout is assumed
    /// anywhere in [0, 20%] and the accrual period anywhere in [0.5, 1.5].
    pub weight_band: (f64, f64),
}

/// Uniform accrual over one year, one year of follow-up, 10% yearly
/// dropout.
pub fn sweep_censoring() -> CensoringModel {
    CensoringModel::uniform_accrual(
        1.0,
        1.0,
        DropoutModel::from_yearly_fraction(0.1).expect("valid constant"),
    )
    .expect("valid constants")
}

pub fn sweep_scenarios() -> Result<Vec<SweepScenario>> {
    let q = QuadratureSettings::default();
    let censoring = sweep_censoring();
    SWEEP_EVENT_RATES
        .iter()
        .map(|&target| {
            let rate = hazard_for_event_rate(target, &censoring, &q, &RootSettings::default())?;
            let model = SurvivalModel::exponential(rate)?;
            Ok(SweepScenario {
                label: format!("event rate {:.0}%", 100.0 * target),
                target_event_rate: target,
                weight_uncorrelated: weight_uncorrelated_null(&model, &censoring, &q)?,
                weight_band: misspecification_band(&model)?,
                model,
                censoring,
            })
        })
        .collect()
}

/// Extremes of the uncorrelated weight over a 5 x 5 grid of yearly dropout
/// in [0, 0.2] and accrual length in [0.5, 1.5], with `t = 2`.
pub fn misspecification_band(model: &SurvivalModel) -> Result<(f64, f64)> {
    let q = QuadratureSettings::default();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..5 {
        let dropout = DropoutModel::from_yearly_fraction(0.05 * i as f64)?;
        for j in 0..5 {
            let a = 0.5 + 0.25 * j as f64;
            let c = CensoringModel::new(AccrualModel::uniform(a)?, dropout, 2.0)?;
            let w = weight_uncorrelated_null(model, &c, &q)?;
            lo = lo.min(w);
            hi = hi.max(w);
        }
    }
    Ok((lo, hi))
}

/// Expected event rate and uncorrelated weight for one table cell's null.
pub fn table_event_rate_and_weight(shape: f64, median: f64) -> Result<(f64, f64)> {
    let q = QuadratureSettings::default();
    let m = SurvivalModel::weibull(shape, median)?;
    let c = table_censoring();
    Ok((
        expected_event_rate(&m, &c, &q)?,
        weight_uncorrelated_null(&m, &c, &q)?,
    ))
}
