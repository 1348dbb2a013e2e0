//! Flat TOML run configuration shared by all subcommands.

use std::path::Path;

use oslr_core::design::{AccrualPlan, AccrualShape, Alternative, DesignSpec, WeightPolicy};
use oslr_core::models::{AccrualModel, CensoringModel, DropoutModel, SurvivalModel};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const DEFAULT_REPLICATIONS: u64 = 100_000;

/// Every key is optional at parse time; each subcommand checks which keys
/// it needs and rejects the ones it would ignore.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub null_family: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shape: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub median: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub hazard_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accrual_length: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accrual_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accrual_exponent: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub follow_up: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dropout_yearly: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub analysis_time: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub power: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight_policy: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_sample_size: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_accrual_length: Option<f64>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth_hazard_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight_policies: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replications: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub with_power: Option<bool>,
}

const NULL_KEYS: &[&str] = &["null_family", "shape", "median", "rate"];
const CENSORING_KEYS: &[&str] = &["accrual_length", "accrual_exponent", "follow_up", "dropout_yearly"];

pub(crate) const DESIGN_KEYS: &[&[&str]] = &[
    NULL_KEYS,
    CENSORING_KEYS,
    &[
        "hazard_ratio",
        "accrual_rate",
        "alpha",
        "power",
        "weight_policy",
        "max_sample_size",
        "max_accrual_length",
    ],
];

pub(crate) const ANALYZE_KEYS: &[&[&str]] = &[
    NULL_KEYS,
    CENSORING_KEYS,
    &["analysis_time", "alpha", "weight_policy", "hazard_ratio"],
];

pub(crate) const SIMULATE_KEYS: &[&[&str]] = &[
    NULL_KEYS,
    CENSORING_KEYS,
    &[
        "hazard_ratio",
        "alpha",
        "power",
        "preset",
        "n",
        "truth_hazard_ratio",
        "weight_policies",
        "replications",
        "seed",
        "with_power",
        "max_sample_size",
    ],
];

pub(crate) const PRESET_KEYS: &[&[&str]] = &[&[
    "preset",
    "replications",
    "seed",
    "with_power",
    "weight_policies",
]];

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| usage(format!("config: {}", e.message())))
    }

    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text)
            .map_err(|e| usage(format!("config {}: {}", path.display(), e.message())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config serialises")
    }

    fn keys(&self) -> Vec<String> {
        match toml::Table::try_from(self) {
            Ok(t) => t.keys().cloned().collect(),
            Err(_) => Vec::new(),
        }
    }

    /// Usage error naming the first key outside `allowed`.
    pub(crate) fn restrict(&self, command: &str, allowed: &[&[&str]]) -> Result<(), CliError> {
        for key in self.keys() {
            if !allowed.iter().any(|group| group.contains(&key.as_str())) {
                return Err(usage(format!("key '{key}' is not used by '{command}'")));
            }
        }
        Ok(())
    }

    pub(crate) fn null_model(&self) -> Result<SurvivalModel, CliError> {
        let family = self
            .null_family
            .as_deref()
            .ok_or_else(|| usage("missing key 'null_family' (exponential or weibull)"))?;
        Ok(match family {
            "weibull" => {
                if self.rate.is_some() {
                    return Err(usage("key 'rate' only applies to null_family = \"exponential\""));
                }
                let shape = require(self.shape, "shape")?;
                let median = require(self.median, "median")?;
                SurvivalModel::weibull(shape, median)?
            }
            "exponential" => {
                if self.shape.is_some() {
                    return Err(usage("key 'shape' only applies to null_family = \"weibull\""));
                }
                match (self.median, self.rate) {
                    (Some(m), None) => SurvivalModel::exponential_median(m)?,
                    (None, Some(r)) => SurvivalModel::exponential(r)?,
                    _ => return Err(usage("exponential null needs exactly one of 'median' and 'rate'")),
                }
            }
            other => {
                return Err(usage(format!(
                    "null_family must be 'exponential' or 'weibull', got '{other}'"
                )))
            }
        })
    }

    pub(crate) fn dropout(&self) -> Result<DropoutModel, CliError> {
        Ok(DropoutModel::from_yearly_fraction(self.dropout_yearly.unwrap_or(0.0))?)
    }

    pub(crate) fn accrual_shape(&self) -> AccrualShape {
        match self.accrual_exponent {
            Some(exponent) => AccrualShape::Power { exponent },
            None => AccrualShape::Uniform,
        }
    }

    /// Censoring model from `accrual_length` and `follow_up`, if both are
    /// present.
    pub(crate) fn censoring(&self) -> Result<Option<CensoringModel>, CliError> {
        match (self.accrual_length, self.follow_up) {
            (Some(a), Some(f)) => {
                let accrual: AccrualModel = self.accrual_shape().with_length(a)?;
                Ok(Some(CensoringModel::new(accrual, self.dropout()?, a + f)?))
            }
            (None, None) => {
                if self.accrual_exponent.is_some() || self.dropout_yearly.is_some() {
                    return Err(usage(
                        "accrual_exponent/dropout_yearly need accrual_length and follow_up",
                    ));
                }
                Ok(None)
            }
            _ => Err(usage("accrual_length and follow_up must be given together")),
        }
    }

    pub(crate) fn policy(&self) -> Result<WeightPolicy, CliError> {
        let text = self
            .weight_policy
            .as_deref()
            .ok_or_else(|| usage("missing key 'weight_policy'; the weight must be fixed in advance"))?;
        Ok(text.parse()?)
    }

    pub(crate) fn policies(&self) -> Result<Option<Vec<WeightPolicy>>, CliError> {
        match &self.weight_policies {
            None => Ok(None),
            Some(v) if v.is_empty() => Err(usage("weight_policies must not be empty")),
            Some(v) => Ok(Some(
                v.iter().map(|s| s.parse()).collect::<Result<Vec<_>, _>>()?,
            )),
        }
    }

    pub(crate) fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(0.05)
    }

    pub(crate) fn beta(&self) -> Result<f64, CliError> {
        let p = self.power.unwrap_or(0.8);
        if !(p > 0.0 && p < 1.0) {
            return Err(usage(format!("power must lie in (0, 1), got {p}")));
        }
        Ok(1.0 - p)
    }

    /// Design specification from the design keys; `policy` overrides
    /// `weight_policy`.
    pub(crate) fn design_spec(&self, policy: Option<WeightPolicy>) -> Result<DesignSpec, CliError> {
        let null = self.null_model()?;
        let ratio = require(self.hazard_ratio, "hazard_ratio")?;
        let accrual = match (self.accrual_length, self.accrual_rate) {
            (Some(a), None) => AccrualPlan::Length(a),
            (None, Some(r)) => AccrualPlan::Rate(r),
            _ => return Err(usage("give exactly one of 'accrual_length' and 'accrual_rate'")),
        };
        let follow_up = require(self.follow_up, "follow_up")?;
        let policy = match policy {
            Some(p) => p,
            None => self.policy()?,
        };
        let mut spec = DesignSpec::new(
            null,
            Alternative::HazardRatio(ratio),
            1.0,
            follow_up,
            self.alpha(),
            self.beta()?,
            policy,
        );
        spec.accrual = accrual;
        spec.accrual_shape = self.accrual_shape();
        spec.dropout = self.dropout()?;
        if let Some(cap) = self.max_sample_size {
            spec.max_sample_size = cap;
        }
        if let Some(a_max) = self.max_accrual_length {
            spec.max_accrual_length = a_max;
        }
        spec.validate()?;
        Ok(spec)
    }
}

pub(crate) fn require<T>(v: Option<T>, key: &str) -> Result<T, CliError> {
    v.ok_or_else(|| usage(format!("missing key '{key}'")))
}
