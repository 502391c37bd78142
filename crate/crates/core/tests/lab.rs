use bsdelab_core::dsl::{catalog_lookup, parse, Params};
use bsdelab_core::lab::{
    apriori_check, classify, counterexample_curve, counterexample_oracle, lambda_dependence_curve,
    sup_distance, sup_distance_fields, terminal_l2, uniqueness_gap, xi_dependence_curve,
    LabError, LabSettings, Sampling,
};
use bsdelab_core::lattice::MAX_ENUM_STEPS;
use bsdelab_core::solver::{scheme_error, solve_envelope, solve_lipschitz};
use bsdelab_core::{
    AdaptedField, Driver, DriverFamily, EnvelopeKind, Lattice, Scheme, Selector, TerminalValue,
    Verdict,
};
use proptest::prelude::*;

fn driver(name: &str, kv: &[(&str, f64)]) -> Driver {
    let p: Params = kv.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    catalog_lookup(name, &p).unwrap().into_driver().unwrap()
}

fn exact() -> Sampling {
    Sampling::default()
}

/// `E[max_k |a - b|^2]` by listing every path.
fn enumerated(l: &Lattice, a: &AdaptedField, b: &AdaptedField) -> f64 {
    l.enumerate_paths(MAX_ENUM_STEPS)
        .unwrap()
        .map(|p| {
            let worst = p
                .levels
                .iter()
                .enumerate()
                .map(|(k, &j)| (a.get(k, j) - b.get(k, j)).powi(2))
                .fold(0.0, f64::max);
            p.probability * worst
        })
        .sum()
}

/// Backward RK4 for `y' = -(3|y|^(2/3) + c)` from `y(T) = y_t`.
fn ode_y0(horizon: f64, y_t: f64, c: f64) -> f64 {
    let f = |y: f64| 3.0 * y.abs().powf(2.0 / 3.0) + c;
    let steps = 100_000;
    let ds = horizon / steps as f64;
    let mut y = y_t;
    for _ in 0..steps {
        let k1 = f(y);
        let k2 = f(y + 0.5 * ds * k1);
        let k3 = f(y + 0.5 * ds * k2);
        let k4 = f(y + ds * k3);
        y += ds / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    y
}

fn field(n: usize) -> impl Strategy<Value = AdaptedField> {
    prop::collection::vec(-3.0..3.0f64, (n + 1) * (n + 2) / 2).prop_map(move |v| {
        let mut it = v.into_iter();
        AdaptedField::from_fn(n, |_, _| it.next().unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metric_axioms((n, f, g, h) in (1usize..9).prop_flat_map(|n| (Just(n), field(n), field(n), field(n)))) {
        let l = Lattice::new(1.0, n).unwrap();
        let s = exact();
        let d = |a: &AdaptedField, b: &AdaptedField| sup_distance_fields(&l, a, b, &s).unwrap();
        prop_assert_eq!(d(&f, &f), 0.0);
        prop_assert_eq!(d(&f, &g), d(&g, &f));
        prop_assert!(d(&f, &h).sqrt() <= d(&f, &g).sqrt() + d(&g, &h).sqrt() + 1e-10);
        prop_assert!((d(&f, &g) - enumerated(&l, &f, &g)).abs() <= 1e-12 * (1.0 + d(&f, &g)));
    }
}

#[test]
fn sampling_tracks_exact_value() {
    let l = Lattice::new(1.0, 16).unwrap();
    let a = AdaptedField::from_fn(16, |k, j| l.w(k, j));
    let b = AdaptedField::zeros(16);
    let truth = sup_distance_fields(&l, &a, &b, &exact()).unwrap();
    let sampled = Sampling { max_enum_steps: 0, samples: 200_000, seed: 7 };
    let est = sup_distance_fields(&l, &a, &b, &sampled).unwrap();
    assert!((est - truth).abs() < 0.02 * truth, "{est} vs {truth}");
    assert_eq!(est, sup_distance_fields(&l, &a, &b, &sampled).unwrap());
    assert!(matches!(
        sup_distance_fields(&l, &a, &b, &Sampling { samples: 0, ..sampled }),
        Err(LabError::NoSamples)
    ));
}

#[test]
fn mismatched_lattices_are_rejected() {
    let g = driver("zero", &[]);
    let xi = TerminalValue::brownian();
    let a = solve_lipschitz(&Lattice::new(1.0, 4).unwrap(), &g, &xi, Scheme::Explicit).unwrap();
    let b = solve_lipschitz(&Lattice::new(1.0, 8).unwrap(), &g, &xi, Scheme::Explicit).unwrap();
    assert_eq!(sup_distance(&a, &b, &exact()), Err(LabError::MismatchedLattice));
}

#[test]
fn oracle_matches_ode_integration() {
    for (t, n) in [(1.0, 1u64), (2.0, 8), (1.0, 1000)] {
        let p = counterexample_oracle(t, n, 0.0).unwrap();
        let ode = ode_y0(t, 1.0 / n as f64, 0.0);
        assert!((p.y_n - ode).abs() < 1e-8 * p.y_n, "T={t} n={n}: {} vs {ode}", p.y_n);
        assert!(p.y_n > p.y_max && p.y_max > p.y_min);
    }
}

#[test]
fn counterexample_limits_are_approached_monotonically() {
    let ns: Vec<u64> = (0..12).map(|i| 1u64 << i).collect();
    let lo = counterexample_curve(1.0, &ns, Selector::Min, 256, 1e-2).unwrap();
    let hi = counterexample_curve(1.0, &ns, Selector::Max, 256, 1e-2).unwrap();
    assert!(lo.distances.windows(2).all(|w| w[1] < w[0] && w[1] > 1.0));
    assert!(hi.distances.windows(2).all(|w| w[1] < w[0] && w[1] > 0.0));
    assert_eq!(lo.distances[0], 64.0);
}

#[test]
fn non_uniqueness_and_divergence_co_occur() {
    let far = [1_000_000_000u64, 1_000_000_000_000, 1_000_000_000_000_000];
    let lo = counterexample_curve(1.0, &far, Selector::Min, 256, 1e-2).unwrap();
    match lo.verdict {
        Verdict::DivergesTo(v) => assert!((v - 1.0).abs() < 1e-2, "{v}"),
        other => panic!("expected divergence, got {other}"),
    }
    let hi = counterexample_curve(1.0, &far, Selector::Max, 256, 1e-2).unwrap();
    assert_eq!(hi.verdict, Verdict::Converges);

    let l = Lattice::new(1.0, 256).unwrap();
    let gap = uniqueness_gap(&l, &driver("remark33", &[]), &TerminalValue::constant(0.0), 32.0, &exact())
        .unwrap();
    assert!(gap > 0.9, "{gap}");
}

#[test]
fn lipschitz_drivers_depend_continuously_on_xi() {
    let l = Lattice::new(1.0, 16).unwrap();
    let xi = TerminalValue::brownian();
    let seq: Vec<TerminalValue> = [1u32, 4, 16, 64]
        .iter()
        .map(|n| TerminalValue::parse(&format!("w + 1/{n}")).unwrap())
        .collect();
    let drivers = vec![
        driver("zero", &[]),
        driver("constant", &[("c", 2.0)]),
        driver("linear", &[("a", 1.0), ("b", 0.0)]),
        driver("linear", &[("a", -0.5), ("b", 2.0)]),
        driver("abs_power", &[("c", 1.5), ("p", 1.0)]),
    ];
    for g in drivers {
        for selector in [Selector::Min, Selector::Max] {
            let r = xi_dependence_curve(&l, &g, &xi, &seq, selector, &LabSettings::new(8.0)).unwrap();
            assert_eq!(r.verdict, Verdict::Converges, "{} {selector:?}: {:?}", g.name(), r.distances);
        }
    }
}

#[test]
fn linear_xi_curve_has_constant_ratio() {
    let l = Lattice::new(1.0, 16).unwrap();
    let g = driver("linear", &[("a", 1.0), ("b", 0.0)]);
    let seq: Vec<TerminalValue> = [1u32, 2, 4, 8]
        .iter()
        .map(|n| TerminalValue::parse(&format!("w + 1/{n}")).unwrap())
        .collect();
    let r = xi_dependence_curve(&l, &g, &TerminalValue::brownian(), &seq, Selector::Min, &LabSettings::new(8.0))
        .unwrap();
    let c = r.fitted_constant().unwrap();
    for (d, p) in r.distances.iter().zip(&r.perturbations) {
        assert!(*d <= c * p * (1.0 + 1e-12));
        assert!(*d >= c * p * (1.0 - 1e-9));
    }
    assert!(r.is_monotone_decreasing());
}

#[test]
fn apriori_examples() {
    let l = Lattice::new(1.0, 16).unwrap();
    let zero = driver("zero", &[]);
    let out = apriori_check(
        &l,
        &zero,
        &[
            (TerminalValue::brownian(), TerminalValue::constant(0.0)),
            (TerminalValue::brownian(), TerminalValue::parse("w + 0").unwrap()),
        ],
        &exact(),
    )
    .unwrap();
    let r = out[0].ratio.unwrap();
    let a = AdaptedField::from_fn(16, |k, j| l.w(k, j));
    let truth = enumerated(&l, &a, &AdaptedField::zeros(16));
    assert!((r - truth).abs() < 1e-12);
    assert!((1.0..=4.0).contains(&r));
    assert!(out[1].ratio.is_none() && out[1].note.is_some());

    let lin = driver("linear", &[("a", 1.0), ("b", 0.0)]);
    let pairs: Vec<_> = [1.0, 0.5, 0.25]
        .iter()
        .map(|&c| (TerminalValue::constant(c), TerminalValue::constant(0.0)))
        .collect();
    let ratios: Vec<f64> = apriori_check(&l, &lin, &pairs, &exact())
        .unwrap()
        .iter()
        .map(|r| r.ratio.unwrap())
        .collect();
    assert!((ratios[0] - ratios[1]).abs() < 1e-10 && (ratios[0] - ratios[2]).abs() < 1e-10);
}

#[test]
fn parameter_curves() {
    let l = Lattice::new(1.0, 16).unwrap();
    let constant = DriverFamily::new("flat", parse("y + 0*lam").unwrap(), (0.0, 1.0), 0.0, 1.0, Some(1.0), None)
        .unwrap();
    let r = lambda_dependence_curve(
        &l,
        &constant,
        &TerminalValue::brownian(),
        &[1.0, 0.5],
        Selector::Min,
        &LabSettings::new(8.0),
    )
    .unwrap();
    assert_eq!(r.distances, vec![0.0, 0.0]);

    let outside = lambda_dependence_curve(
        &l,
        &constant,
        &TerminalValue::brownian(),
        &[2.0],
        Selector::Min,
        &LabSettings::new(8.0),
    );
    assert!(matches!(outside, Err(LabError::Driver(_))));

    let shift = catalog_lookup("remark33_shift", &Params::new()).unwrap().into_family().unwrap();
    let fine = Lattice::new(1.0, 128).unwrap();
    let r = lambda_dependence_curve(
        &fine,
        &shift,
        &TerminalValue::constant(0.0),
        &[1.0, 0.5, 0.25],
        Selector::Min,
        &LabSettings::new(32.0),
    )
    .unwrap();
    assert!(r.distances.iter().all(|d| d.is_finite() && *d >= 0.0));
    let sol = solve_envelope(&fine, &shift.slice(1.0).unwrap(), 32.0, EnvelopeKind::Lower, &TerminalValue::constant(0.0), Scheme::Explicit)
        .unwrap();
    let ode = ode_y0(1.0, 0.0, 1.0);
    assert!((sol.y0() - ode).abs() / ode < 0.05, "{} vs {ode}", sol.y0());
}

#[test]
fn unique_regime_gap_is_small() {
    let l = Lattice::new(1.0, 64).unwrap();
    let g = driver("remark33", &[]);
    let xi = TerminalValue::constant(1.0);
    let gap = uniqueness_gap(&l, &g, &xi, 32.0, &exact()).unwrap();
    let zero_gap = uniqueness_gap(&l, &g, &TerminalValue::constant(0.0), 32.0, &exact()).unwrap();
    assert!(gap < 1e-2 * zero_gap, "{gap} vs {zero_gap}");

    let lin = driver("linear", &[("a", 1.0), ("b", 1.0)]);
    let w = TerminalValue::brownian();
    let gap = uniqueness_gap(&l, &lin, &w, 32.0, &exact()).unwrap();
    assert!(gap <= 10.0 * scheme_error(&l, &lin, &w).unwrap());
    assert!(matches!(
        uniqueness_gap(&l, &lin, &w, 64.0, &exact()),
        Err(LabError::IndexTooLarge(_))
    ));
}

#[test]
fn terminal_l2_is_second_moment() {
    let l = Lattice::new(2.0, 10).unwrap();
    let v = terminal_l2(&l, &TerminalValue::brownian(), &TerminalValue::constant(0.0)).unwrap();
    assert!((v - 2.0).abs() < 1e-12);
}

#[test]
fn report_json_has_exact_fields() {
    let r = counterexample_curve(1.0, &[1, 2], Selector::Min, 16, 1e-2).unwrap();
    let v = serde_json::to_value(&r).unwrap();
    let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
    assert_eq!(keys, ["distances", "perturbations", "ratios", "verdict"]);
    assert_eq!(v["verdict"], "inconclusive");
    assert_eq!(classify(&[2.0, 1.0], 1.5, 0.0), Verdict::Converges);
}
