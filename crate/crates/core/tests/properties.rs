use oslr_core::analysis::{random_weight_km, run_test, statistic, SubjectRecord, TestOutcome, TrialDataset};
use oslr_core::design::{
    power, sample_size, solve_accrual_length, weight_uncorrelated_alt, weight_uncorrelated_null,
    AccrualPlan, Alternative, DesignSpec, WeightPolicy,
};
use oslr_core::models::{AccrualModel, CensoringModel, DropoutModel, SurvivalModel};
use oslr_core::numerics::{
    find_root, integrate, normal_cdf, normal_quantile, QuadratureSettings, RngStream, RootSettings,
};
use oslr_core::presets::table_cells;
use oslr_core::simulate::{simulate_dataset, Arm, Experiment, Sequential, WeightRule};
use proptest::prelude::*;

fn q() -> QuadratureSettings {
    QuadratureSettings::default()
}

fn censoring(a: f64, f: f64, drop: f64, theta: f64) -> CensoringModel {
    CensoringModel::new(
        AccrualModel::power(a, theta).unwrap(),
        DropoutModel::from_yearly_fraction(drop).unwrap(),
        a + f,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quadrature_is_linear_and_additive(
        a in -3.0..3.0f64, b in -3.0..3.0f64, k in 0.1..4.0f64, split in 0.05..0.95f64,
    ) {
        let f = |s: f64| (-k * s).exp();
        let g = |s: f64| s.sqrt() * (1.0 + s);
        let (lo, hi) = (0.0, 2.0);
        let s = q();
        let lhs = integrate(|x| a * f(x) + b * g(x), lo, hi, &[], &s).unwrap();
        let rhs = a * integrate(f, lo, hi, &[], &s).unwrap() + b * integrate(g, lo, hi, &[], &s).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-8 * (1.0 + lhs.abs()));
        let m = lo + split * (hi - lo);
        let parts = integrate(g, lo, m, &[], &s).unwrap() + integrate(g, m, hi, &[], &s).unwrap();
        let whole = integrate(g, lo, hi, &[], &s).unwrap();
        prop_assert!((parts - whole).abs() < 1e-8);
    }

    #[test]
    fn root_finder_locates_cubic_roots(r in -5.0..5.0f64, c in 0.01..10.0f64) {
        let s = RootSettings::default();
        let x = find_root(|x| c * (x - r) + (x - r).powi(3), -10.0, 10.0, &s).unwrap();
        prop_assert!((x - r).abs() <= s.abs_tol);
    }

    #[test]
    fn normal_quantile_inverts_cdf(p in 1e-10..(1.0 - 1e-10)) {
        let x = normal_quantile(p).unwrap();
        prop_assert!((normal_cdf(x) - p).abs() <= 1e-9 * p.min(1.0 - p).max(1e-3));
    }

    #[test]
    fn weibull_identities(k in 0.1..6.0f64, m in 0.2..20.0f64, p in 0.001..0.999f64, ratio in 0.2..5.0f64) {
        let model = SurvivalModel::weibull(k, m).unwrap();
        let t = model.quantile(p).unwrap();
        prop_assert!((model.cdf(t) - p).abs() < 1e-10);
        let h = model.cumulative_hazard(t);
        prop_assert!((model.inverse_cumulative_hazard(h) - t).abs() < 1e-9 * (1.0 + t));
        let alt = model.with_hazard_ratio(ratio).unwrap();
        prop_assert!((alt.cumulative_hazard(t) - h / ratio).abs() < 1e-12 * (1.0 + h));
        let back = model.hazard_ratio_to(&alt).unwrap();
        prop_assert!((back - ratio).abs() < 1e-10 * ratio);
    }

    #[test]
    fn censoring_survival_is_a_survival_function(
        a in 0.1..5.0f64, f in 0.0..5.0f64, drop in 0.0..0.5f64, theta in 0.3..3.0f64,
        s1 in 0.0..1.0f64, s2 in 0.0..1.0f64,
    ) {
        let c = censoring(a, f, drop, theta);
        let t = c.analysis_time;
        let (lo, hi) = if s1 < s2 { (s1 * t, s2 * t) } else { (s2 * t, s1 * t) };
        let (u, v) = (c.survival(lo), c.survival(hi));
        prop_assert!((0.0..=1.0).contains(&u) && (0.0..=1.0).contains(&v));
        prop_assert!(v <= u);
        prop_assert_eq!(c.survival(t), 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn null_weight_lies_in_the_unit_interval(
        k in 0.1..6.0f64, m in 0.2..10.0f64, a in 0.1..5.0f64, f in 0.0..5.0f64,
        drop in 0.0..0.5f64, theta in 0.3..3.0f64,
    ) {
        let null = SurvivalModel::weibull(k, m).unwrap();
        let c = censoring(a, f, drop, theta);
        let w0 = weight_uncorrelated_null(&null, &c, &q()).unwrap();
        prop_assert!((0.0..=1.0).contains(&w0), "w0 = {}", w0);
    }

    #[test]
    fn sample_size_meets_power_exactly_at_the_ceiling(
        k in 0.3..4.0f64, m in 0.5..8.0f64, a in 0.5..4.0f64, f in 0.0..3.0f64,
        ratio in 1.15..2.5f64, w in 0.0..1.0f64, beta in 0.05..0.5f64,
    ) {
        let mut spec = DesignSpec::new(
            SurvivalModel::weibull(k, m).unwrap(),
            Alternative::HazardRatio(ratio),
            a, f, 0.05, beta, WeightPolicy::Fixed(w),
        );
        spec.max_sample_size = u64::MAX;
        let r = sample_size(&spec).unwrap();
        prop_assert!(r.n >= 1);
        prop_assert!(power(&spec, r.n).unwrap() >= 1.0 - beta);
        if r.n > 1 {
            prop_assert!(power(&spec, r.n - 1).unwrap() < 1.0 - beta);
        }
        prop_assert!(power(&spec, 2 * r.n).unwrap() > power(&spec, r.n).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn statistic_scales_with_the_square_root(events in 1u64..500, expected in 0.1..500.0f64, w in 0.0..1.0f64, c in 1u64..50) {
        let z = statistic(events, expected, w).unwrap();
        let zc = statistic(c * events, c as f64 * expected, w).unwrap();
        prop_assert!((zc - (c as f64).sqrt() * z).abs() < 1e-9 * (1.0 + zc.abs()));
    }

    #[test]
    fn one_and_two_sided_decisions_agree(events in 0u64..300, expected in 0.1..300.0f64, w in 0.0..0.99f64, alpha in 0.001..0.5f64) {
        let o = TestOutcome::from_counts(300, events, expected, w, alpha).unwrap();
        prop_assert_eq!(o.reject_two_sided, o.reject_left || o.reject_right);
        prop_assert!(!(o.reject_left && o.reject_right));
        prop_assert!((o.p_left + o.p_right - 1.0).abs() < 1e-12);
        prop_assert!((o.p_two_sided - 2.0 * o.p_left.min(o.p_right)).abs() < 1e-12);
    }

    #[test]
    fn km_weight_lies_in_the_unit_interval(
        seed in any::<u64>(), n in 1usize..60, k in 0.2..4.0f64, drop in 0.0..0.5f64,
    ) {
        let truth = SurvivalModel::weibull(k, 1.0).unwrap();
        let c = censoring(1.0, 1.0, drop, 1.0);
        let data = simulate_dataset(&truth, &c, n, &mut RngStream::new(seed, 0)).unwrap();
        let rw = random_weight_km(&data, &truth, None);
        prop_assert!((0.0..=1.0).contains(&rw.weight));
        if !data.subjects().iter().any(|s| !s.event) {
            prop_assert!(rw.fallback);
        }
    }
}

#[test]
fn constant_policies_embed_as_fixed_weights() {
    let null = SurvivalModel::exponential_median(2.0).unwrap();
    let c = censoring(1.0, 1.0, 0.1, 1.0);
    let mut rng = RngStream::new(3, 1);
    for _ in 0..20 {
        let data = simulate_dataset(&null, &c, 40, &mut rng).unwrap();
        for (p, w) in [
            (WeightPolicy::Wu, 0.5),
            (WeightPolicy::Compensator, 0.0),
            (WeightPolicy::Counting, 1.0),
        ] {
            let a = run_test(&data, &null, &p, 0.05, None);
            let b = run_test(&data, &null, &WeightPolicy::Fixed(w), 0.05, None);
            match (a, b) {
                (Ok(a), Ok(b)) => {
                    assert_eq!(a.statistic.to_bits(), b.statistic.to_bits());
                    assert_eq!(a, b);
                }
                (Err(_), Err(_)) => {}
                other => panic!("{other:?}"),
            }
        }
    }
}

#[test]
fn sample_size_decreases_with_the_weight_on_every_table_cell() {
    for cell in table_cells() {
        let n = |w: f64| sample_size(&cell.design(WeightPolicy::Fixed(w)).unwrap()).unwrap();
        let (n0, nh, n1) = (n(0.0), n(0.5), n(1.0));
        assert!(n0.moments.v1 < n0.moments.v0, "{cell:?}");
        assert!(n1.n_formula <= nh.n_formula && nh.n_formula <= n0.n_formula, "{cell:?}");
    }
}

#[test]
fn faster_accrual_shortens_the_accrual_period() {
    let base = DesignSpec::new(
        SurvivalModel::weibull(1.0, 1.0).unwrap(),
        Alternative::HazardRatio(2.0),
        1.0,
        3.0,
        0.05,
        0.2,
        WeightPolicy::Compensator,
    );
    let fixed = sample_size(&base).unwrap();
    // At rate n / 1 the solved accrual length is the fixed-design one.
    let spec = DesignSpec {
        accrual: AccrualPlan::Rate(fixed.n_formula),
        ..base.clone()
    };
    let solved = solve_accrual_length(&spec).unwrap();
    assert!((solved.accrual_length - 1.0).abs() < 1e-6, "{}", solved.accrual_length);
    assert_eq!(solved.n, fixed.n);

    let mut last = f64::INFINITY;
    for r in [10.0, 30.0, 100.0, 1000.0, 1e5] {
        let s = solve_accrual_length(&DesignSpec {
            accrual: AccrualPlan::Rate(r),
            ..base.clone()
        })
        .unwrap();
        assert!(s.accrual_length < last);
        last = s.accrual_length;
    }
    // Very fast accrual approaches the requirement with everybody followed
    // for f.
    let at_f = sample_size(&DesignSpec {
        accrual: AccrualPlan::Length(1e-6),
        ..base
    })
    .unwrap();
    let fast = solve_accrual_length(&DesignSpec {
        accrual: AccrualPlan::Rate(1e7),
        ..DesignSpec::new(
            SurvivalModel::weibull(1.0, 1.0).unwrap(),
            Alternative::HazardRatio(2.0),
            1.0,
            3.0,
            0.05,
            0.2,
            WeightPolicy::Compensator,
        )
    })
    .unwrap();
    assert!((fast.n_formula - at_f.n_formula).abs() < 0.05 * at_f.n_formula);
}

#[test]
fn simulation_is_a_function_of_the_seed() {
    let null = SurvivalModel::weibull(1.0, 2.0).unwrap();
    let e = Experiment {
        truth: null.clone(),
        null_model: null,
        censoring: censoring(3.0, 1.0, 0.0, 1.0),
        arms: vec![
            Arm { label: "a".into(), policy: None, n: 30, rule: WeightRule::Fixed(0.39) },
            Arm { label: "b".into(), policy: None, n: 12, rule: WeightRule::KaplanMeier { fallback: None } },
        ],
        alpha: 0.05,
        master_seed: 99,
        stream_base: 5,
    };
    let a = e.run(2000, &Sequential).unwrap();
    let b = e.run(2000, &Sequential).unwrap();
    assert_eq!(a, b);
    let other = Experiment { master_seed: 100, ..e }.run(2000, &Sequential).unwrap();
    assert_ne!(a.arms[0].tally, other.arms[0].tally);
}

#[test]
fn records_from_the_simulator_are_valid_and_complete() {
    let truth = SurvivalModel::weibull(0.7, 1.5).unwrap();
    let c = censoring(2.0, 1.0, 0.2, 1.0);
    let data = simulate_dataset(&truth, &c, 5000, &mut RngStream::new(1, 2)).unwrap();
    let dropouts = data.subjects().iter().filter(|s| s.dropout == Some(true)).count();
    let events = data.subjects().iter().filter(|s| s.event).count();
    assert!(dropouts > 0 && events > 0);
    let rebuilt = TrialDataset::new(
        data.subjects()
            .iter()
            .map(|s| SubjectRecord { dropout: None, ..*s })
            .collect(),
        data.analysis_time(),
    );
    assert!(rebuilt.is_ok());
}

#[test]
fn alternative_weight_can_exceed_one_far_from_the_null() {
    // Nearly every subject has an event under the alternative and the few
    // early dropouts carry small A0, so Cov(A0, N) > Var(N). Reference value
    // from 40-digit quadrature.
    let null = SurvivalModel::weibull(4.145806773933591, 0.5).unwrap();
    let alt = null.with_hazard_ratio(2.939354000111538).unwrap();
    let c = censoring(0.2, 2.4565106087979487, 0.006745291504160071, 0.5);
    let w1 = weight_uncorrelated_alt(&null, &alt, &c, &q()).unwrap();
    assert!((w1 - 1.000617700372778).abs() < 1e-8, "{w1}");
}

#[test]
fn null_covariance_of_events_and_compensator_can_be_positive() {
    // Under the null Cov(A0, N) = v1 (w0 - v1): positive whenever the
    // uncorrelated weight exceeds the event rate, e.g. shape 5, median 4.
    let q = q();
    let c = censoring(3.0, 1.0, 0.0, 1.0);
    let m = SurvivalModel::weibull(5.0, 4.0).unwrap();
    let mo = oslr_core::design::moments(&m, &m, &c, &q).unwrap();
    let cov = mo.v01 - mo.v0 * mo.v1;
    assert!((cov - 0.004827150021119459).abs() < 1e-8, "{cov}");
}

#[test]
fn alternative_weight_lies_in_the_unit_interval_on_the_table_grid() {
    let c = censoring(3.0, 1.0, 0.0, 1.0);
    for cell in table_cells() {
        let null = cell.null_model().unwrap();
        let alt = null.with_hazard_ratio(cell.effect).unwrap();
        let w1 = weight_uncorrelated_alt(&null, &alt, &c, &q()).unwrap();
        assert!((0.0..=1.0).contains(&w1), "{cell:?}: {w1}");
    }
}
