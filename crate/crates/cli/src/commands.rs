use std::fmt::Write as _;

use oslr_core::analysis::{run_test, PlanningContext, SubjectRecord, TestOutcome, TrialDataset};
use oslr_core::design::{plan, DesignResult, WeightPolicy};
use oslr_core::presets::{
    pbc_design, sweep_scenarios, sweep_weight_grid, table_cells, SWEEP_SAMPLE_SIZES,
};
use oslr_core::simulate::{
    operating_characteristics, run_scenario, scenario_table, weight_sweep, OperatingRow, Rate,
    Runner, ScenarioSpec, SimulationReport, SweepSpec, TableOptions, TableRow, WeightRule,
};

use crate::config::{
    require, RunConfig, ANALYZE_KEYS, DEFAULT_REPLICATIONS, DESIGN_KEYS, PRESET_KEYS,
    SIMULATE_KEYS,
};
use crate::report::{Payload, ReportEnvelope, SweepResult};
use crate::CliError;

/// Result of one subcommand: the structured report, a plain-text summary
/// for the terminal and, for simulations, long-format CSV rows.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: ReportEnvelope,
    pub summary: String,
    pub csv: Option<String>,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn design(config: &RunConfig) -> Result<Outcome, CliError> {
    config.restrict("design", DESIGN_KEYS)?;
    let spec = config.design_spec(None)?;
    let result = plan(&spec)?;
    let mut echo = config.clone();
    echo.alpha = Some(spec.alpha);
    echo.power = Some(1.0 - spec.beta);
    let mut warnings = Vec::new();
    if result.advice.suggested != spec.weight_policy {
        warnings.push(advice_note(&result));
    }
    let summary = design_summary(&result);
    Ok(Outcome {
        report: ReportEnvelope::new("design", echo, Payload::Design(result), warnings),
        summary,
        csv: None,
    })
}

fn advice_note(r: &DesignResult) -> String {
    format!(
        "expected event rate under the null is {:.1}%; at {} the {} weight kept the level \
         most accurately in simulations",
        100.0 * r.expected_event_rate_null,
        if r.expected_event_rate_null <= r.advice.threshold {
            format!("or below {:.0}%", 100.0 * r.advice.threshold)
        } else {
            format!("above {:.0}%", 100.0 * r.advice.threshold)
        },
        r.advice.suggested
    )
}

fn design_summary(r: &DesignResult) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "sample size        {}", r.n);
    let _ = writeln!(s, "formula value      {:.4}", r.n_formula);
    let _ = writeln!(s, "weight policy      {}", r.weight_policy);
    let _ = writeln!(s, "weight             {:.4}", r.weight);
    let _ = writeln!(s, "accrual length     {:.4}", r.accrual_length);
    if let Some(rate) = r.accrual_rate {
        let _ = writeln!(s, "accrual rate       {rate}");
    }
    let _ = writeln!(s, "analysis time      {:.4}", r.analysis_time);
    let _ = writeln!(s, "event rate H0/H1   {:.4} / {:.4}", r.expected_event_rate_null, r.expected_event_rate_alt);
    let _ = writeln!(s, "power at n         {:.4}", r.power);
    let _ = writeln!(s, "suggested policy   {}", r.advice.suggested);
    s
}

pub fn analyze(config: &RunConfig, subjects: Vec<SubjectRecord>) -> Result<Outcome, CliError> {
    config.restrict("analyze", ANALYZE_KEYS)?;
    let null = config.null_model()?;
    let policy = config.policy()?;
    let t = require(config.analysis_time, "analysis_time")?;
    let context = match config.censoring()? {
        Some(c) => {
            if (c.analysis_time - t).abs() > 1e-9 * t.max(1.0) {
                return Err(usage(format!(
                    "accrual_length + follow_up = {} differs from analysis_time = {t}",
                    c.analysis_time
                )));
            }
            let alternative = match config.hazard_ratio {
                Some(r) => Some(null.with_hazard_ratio(r)?),
                None => None,
            };
            Some(PlanningContext {
                alternative,
                ..PlanningContext::new(c)
            })
        }
        None => {
            if config.hazard_ratio.is_some() {
                return Err(usage("hazard_ratio needs the planning accrual_length and follow_up"));
            }
            None
        }
    };
    let data = TrialDataset::new(subjects, t)?;
    let outcome = run_test(&data, &null, &policy, config.alpha(), context.as_ref())?;
    let mut echo = config.clone();
    echo.alpha = Some(outcome.alpha);
    let mut warnings = Vec::new();
    if outcome.weight_fallback {
        warnings.push(format!(
            "random_km: the data gave no usable Kaplan-Meier weight; fell back to w = {:.4}",
            outcome.weight
        ));
    }
    let summary = analysis_summary(&outcome, &policy);
    Ok(Outcome {
        report: ReportEnvelope::new("analyze", echo, Payload::Analysis(outcome), warnings),
        summary,
        csv: None,
    })
}

fn analysis_summary(o: &TestOutcome, policy: &WeightPolicy) -> String {
    let yn = |b: bool| if b { "reject" } else { "do not reject" };
    let mut s = String::new();
    let _ = writeln!(s, "subjects           {}", o.n);
    let _ = writeln!(s, "observed events N  {}", o.events);
    let _ = writeln!(s, "expected events A0 {:.4}", o.expected);
    let _ = writeln!(s, "weight ({policy})  {:.4}", o.weight);
    let _ = writeln!(s, "statistic Z        {:.4}", o.statistic);
    let _ = writeln!(s, "two-sided p        {:.4}  {} at alpha {}", o.p_two_sided, yn(o.reject_two_sided), o.alpha);
    let _ = writeln!(s, "left-sided p       {:.4}  {} at alpha/2", o.p_left, yn(o.reject_left));
    let _ = writeln!(s, "right-sided p      {:.4}  {} at alpha/2", o.p_right, yn(o.reject_right));
    s
}

/// `simulate`: a preset (`figure1`, `table2`, `pbc`), a fixed-`n`
/// scenario (key `n`) or, without `n`, planned designs compared by
/// simulation.
pub fn simulate<R: Runner>(config: &RunConfig, runner: &R) -> Result<Outcome, CliError> {
    config.restrict("simulate", SIMULATE_KEYS)?;
    let seed = config
        .seed
        .ok_or_else(|| usage("simulate needs a seed ('seed' in the config or --seed)"))?;
    let replications = config.replications.unwrap_or(DEFAULT_REPLICATIONS);
    if replications == 0 {
        return Err(usage("replications must be at least 1"));
    }
    let mut echo = config.clone();
    echo.seed = Some(seed);
    echo.replications = Some(replications);

    let (payload, warnings) = match config.preset.as_deref() {
        Some(name) => {
            config.restrict("simulate with a preset", PRESET_KEYS)?;
            preset(name, config, seed, replications, runner)?
        }
        None if config.n.is_some() => {
            if config.power.is_some() || config.with_power.is_some() || config.max_sample_size.is_some() {
                return Err(usage(
                    "keys 'power', 'with_power' and 'max_sample_size' apply to planned designs, not to a fixed 'n'",
                ));
            }
            echo.alpha = Some(config.alpha());
            fixed_scenario(config, seed, replications, runner)?
        }
        None => {
            if config.truth_hazard_ratio.is_some() {
                return Err(usage(
                    "key 'truth_hazard_ratio' needs 'n'; planned designs are simulated under the null and the planning alternative",
                ));
            }
            echo.alpha = Some(config.alpha());
            echo.power = Some(1.0 - config.beta()?);
            let policies = config.policies()?.unwrap_or_else(|| WeightPolicy::STANDARD.to_vec());
            let specs = policies
                .iter()
                .map(|p| config.design_spec(Some(*p)))
                .collect::<Result<Vec<_>, _>>()?;
            let options = TableOptions {
                replications,
                master_seed: seed,
                with_power: config.with_power.unwrap_or(true),
            };
            let rows = operating_characteristics(&specs, &options, 0, runner)?;
            let w = rate_warnings(replications, rows.iter().map(|r| r.indeterminate).sum());
            (Payload::Operating(rows), w)
        }
    };
    let summary = simulation_summary(&payload);
    let csv = Some(long_csv(&payload)?);
    Ok(Outcome {
        report: ReportEnvelope::new("simulate", echo, payload, warnings),
        summary,
        csv,
    })
}

fn rate_warnings(replications: u64, indeterminate: u64) -> Vec<String> {
    let mut w = Vec::new();
    if replications < 2 {
        w.push("fewer than two replications: standard errors are not available".into());
    }
    if indeterminate > 0 {
        w.push(format!(
            "{indeterminate} replicate analyses had a zero variance estimate and count as non-rejections"
        ));
    }
    w
}

fn preset<R: Runner>(
    name: &str,
    config: &RunConfig,
    seed: u64,
    replications: u64,
    runner: &R,
) -> Result<(Payload, Vec<String>), CliError> {
    match name {
        "figure1" => {
            if config.weight_policies.is_some() || config.with_power.is_some() {
                return Err(usage(
                    "the figure1 preset sweeps a fixed weight grid; remove 'weight_policies'/'with_power'",
                ));
            }
            let mut out = Vec::new();
            let mut indeterminate = 0;
            for (k, scenario) in sweep_scenarios()?.into_iter().enumerate() {
                let spec = SweepSpec {
                    label: scenario.label.clone(),
                    truth: scenario.model.clone(),
                    null_model: scenario.model.clone(),
                    censoring: scenario.censoring,
                    weights: sweep_weight_grid(),
                    sample_sizes: SWEEP_SAMPLE_SIZES.to_vec(),
                    replications,
                    master_seed: seed,
                    stream_base: (k as u64) << 32,
                    alpha: 0.05,
                };
                let report = weight_sweep(&spec, runner)?;
                indeterminate += report.cells.iter().map(|c| c.indeterminate).sum::<u64>();
                out.push(SweepResult { scenario, report });
            }
            Ok((Payload::Sweep(out), rate_warnings(replications, indeterminate)))
        }
        "table2" => {
            let policies = config.policies()?.unwrap_or_else(|| WeightPolicy::STANDARD.to_vec());
            let options = TableOptions {
                replications,
                master_seed: seed,
                with_power: config.with_power.unwrap_or(false),
            };
            let rows = scenario_table(&table_cells(), &policies, &options, runner)?;
            let ind = rows.iter().map(|r| r.row.indeterminate).sum();
            Ok((Payload::Table(rows), rate_warnings(replications, ind)))
        }
        "pbc" => {
            let policies = config.policies()?.unwrap_or_else(|| WeightPolicy::STANDARD.to_vec());
            let specs: Vec<_> = policies.iter().map(|p| pbc_design(*p)).collect();
            let options = TableOptions {
                replications,
                master_seed: seed,
                with_power: config.with_power.unwrap_or(true),
            };
            let rows = operating_characteristics(&specs, &options, 0, runner)?;
            let ind = rows.iter().map(|r| r.indeterminate).sum();
            Ok((Payload::Operating(rows), rate_warnings(replications, ind)))
        }
        other => Err(usage(format!(
            "unknown preset '{other}' (figure1, table2 or pbc)"
        ))),
    }
}

fn fixed_scenario<R: Runner>(
    config: &RunConfig,
    seed: u64,
    replications: u64,
    runner: &R,
) -> Result<(Payload, Vec<String>), CliError> {
    let null = config.null_model()?;
    let censoring = config
        .censoring()?
        .ok_or_else(|| usage("missing keys 'accrual_length' and 'follow_up'"))?;
    let truth = match config.truth_hazard_ratio {
        Some(r) if r != 1.0 => null.with_hazard_ratio(r)?,
        _ => null.clone(),
    };
    let alternative = match config.hazard_ratio {
        Some(r) => null.with_hazard_ratio(r)?,
        None => truth.clone(),
    };
    let spec = ScenarioSpec {
        truth,
        null_model: null,
        censoring,
        n: require(config.n, "n")?,
        policies: config.policies()?.unwrap_or_else(|| WeightPolicy::STANDARD.to_vec()),
        replications,
        master_seed: seed,
        alpha: config.alpha(),
        planning: Some(PlanningContext {
            alternative: Some(alternative),
            ..PlanningContext::new(censoring)
        }),
    };
    let report = run_scenario(&spec, runner)?;
    let mut warnings = rate_warnings(replications, report.arms.iter().map(|a| a.indeterminate).sum());
    for arm in &report.arms {
        if arm.weight_fallbacks > 0 {
            warnings.push(format!(
                "{}: {} of {} replicates used the fallback weight",
                arm.label, arm.weight_fallbacks, arm.replications
            ));
        }
    }
    Ok((Payload::Simulation(report), warnings))
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn rate_cols(r: &Rate) -> [String; 2] {
    [r.estimate.to_string(), opt(r.se)]
}

fn operating_cols(r: &OperatingRow) -> Vec<String> {
    let mut v = vec![
        r.policy.to_string(),
        r.n.to_string(),
        r.weight.to_string(),
        r.event_rate_null.to_string(),
    ];
    v.extend(rate_cols(&r.alpha_two_sided));
    v.extend(rate_cols(&r.alpha_left));
    v.extend(rate_cols(&r.alpha_right));
    v.push(r.indeterminate.to_string());
    match &r.power {
        Some(p) => v.extend(rate_cols(p)),
        None => v.extend([String::new(), String::new()]),
    }
    v.push(r.best.to_string());
    v
}

const OPERATING_HEADER: [&str; 14] = [
    "policy",
    "n",
    "weight",
    "event_rate_null",
    "alpha_two_sided",
    "se_two_sided",
    "alpha_left",
    "se_left",
    "alpha_right",
    "se_right",
    "indeterminate",
    "power",
    "se_power",
    "best",
];

/// One row per (scenario, arm) in long format.
pub fn long_csv(payload: &Payload) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let ser = |e: csv::Error| CliError::Serialise(e.to_string());
    match payload {
        Payload::Design(_) | Payload::Analysis(_) => {}
        Payload::Simulation(rep) => simulation_rows(&mut w, rep).map_err(ser)?,
        Payload::Sweep(results) => {
            w.write_record([
                "scenario",
                "target_event_rate",
                "n",
                "weight",
                "rejection_left",
                "se_left",
                "rejection_two_sided",
                "se_two_sided",
                "indeterminate",
            ])
            .map_err(ser)?;
            for r in results {
                for c in &r.report.cells {
                    let mut rec = vec![
                        r.scenario.label.clone(),
                        r.scenario.target_event_rate.to_string(),
                        c.n.to_string(),
                        c.weight.to_string(),
                    ];
                    rec.extend(rate_cols(&c.rejection_left));
                    rec.extend(rate_cols(&c.rejection_two_sided));
                    rec.push(c.indeterminate.to_string());
                    w.write_record(&rec).map_err(ser)?;
                }
            }
        }
        Payload::Table(rows) => {
            let mut header = vec!["shape", "median", "effect"];
            header.extend(OPERATING_HEADER);
            w.write_record(&header).map_err(ser)?;
            for TableRow { cell, row } in rows {
                let mut rec = vec![
                    cell.shape.to_string(),
                    cell.median.to_string(),
                    cell.effect.to_string(),
                ];
                rec.extend(operating_cols(row));
                w.write_record(&rec).map_err(ser)?;
            }
        }
        Payload::Operating(rows) => {
            w.write_record(OPERATING_HEADER).map_err(ser)?;
            for row in rows {
                w.write_record(operating_cols(row)).map_err(ser)?;
            }
        }
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::Serialise(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn simulation_rows(w: &mut csv::Writer<Vec<u8>>, rep: &SimulationReport) -> Result<(), csv::Error> {
    w.write_record([
        "label",
        "n",
        "fixed_weight",
        "replications",
        "rejection_two_sided",
        "se_two_sided",
        "rejection_left",
        "se_left",
        "rejection_right",
        "se_right",
        "indeterminate",
        "weight_fallbacks",
        "mean_weight",
    ])?;
    for a in &rep.arms {
        let mut rec = vec![
            a.label.clone(),
            a.n.to_string(),
            match a.rule {
                WeightRule::Fixed(x) => x.to_string(),
                WeightRule::KaplanMeier { .. } => String::new(),
            },
            a.replications.to_string(),
        ];
        rec.extend(rate_cols(&a.rejection_two_sided));
        rec.extend(rate_cols(&a.rejection_left));
        rec.extend(rate_cols(&a.rejection_right));
        rec.push(a.indeterminate.to_string());
        rec.push(a.weight_fallbacks.to_string());
        rec.push(a.mean_weight.to_string());
        w.write_record(&rec)?;
    }
    Ok(())
}

fn pct(r: &Rate) -> String {
    match r.se {
        Some(se) => format!("{:.4} ({:.4})", r.estimate, se),
        None => format!("{:.4}", r.estimate),
    }
}

fn simulation_summary(payload: &Payload) -> String {
    let mut s = String::new();
    match payload {
        Payload::Design(_) | Payload::Analysis(_) => {}
        Payload::Simulation(rep) => {
            let _ = writeln!(
                s,
                "{} replications, seed {}, truth {}",
                rep.replications,
                rep.master_seed,
                if rep.truth_is_null { "null" } else { "alternative" }
            );
            let _ = writeln!(s, "{:<20} {:>6} {:>18} {:>18} {:>18}", "arm", "n", "two-sided", "left", "right");
            for a in &rep.arms {
                let _ = writeln!(
                    s,
                    "{:<20} {:>6} {:>18} {:>18} {:>18}",
                    a.label,
                    a.n,
                    pct(&a.rejection_two_sided),
                    pct(&a.rejection_left),
                    pct(&a.rejection_right)
                );
            }
        }
        Payload::Sweep(results) => {
            for r in results {
                let (lo, hi) = r.scenario.weight_band;
                let _ = writeln!(
                    s,
                    "{}: w0 = {:.4}, band [{lo:.4}, {hi:.4}], {} cells",
                    r.scenario.label,
                    r.scenario.weight_uncorrelated,
                    r.report.cells.len()
                );
            }
        }
        Payload::Table(rows) => {
            let _ = writeln!(s, "{:>5} {:>4} {:>4} {:<18} {:>6} {:>18} {:>18}", "shape", "m0", "hr", "policy", "n", "alpha", "alpha_left");
            for TableRow { cell, row } in rows {
                let _ = writeln!(
                    s,
                    "{:>5} {:>4} {:>4} {:<18} {:>6} {:>18} {:>18}",
                    cell.shape,
                    cell.median,
                    cell.effect,
                    row.policy.to_string(),
                    row.n,
                    pct(&row.alpha_two_sided),
                    pct(&row.alpha_left)
                );
            }
        }
        Payload::Operating(rows) => {
            let _ = writeln!(s, "{:<18} {:>6} {:>8} {:>18} {:>18} {:>18}", "policy", "n", "weight", "alpha", "alpha_left", "power");
            for r in rows {
                let _ = writeln!(
                    s,
                    "{:<18} {:>6} {:>8.4} {:>18} {:>18} {:>18}{}",
                    r.policy.to_string(),
                    r.n,
                    r.weight,
                    pct(&r.alpha_two_sided),
                    pct(&r.alpha_left),
                    r.power.as_ref().map(pct).unwrap_or_default(),
                    if r.best { "  *" } else { "" }
                );
            }
        }
    }
    s
}
