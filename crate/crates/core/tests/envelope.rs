use bsdelab_core::dsl::{catalog_lookup, lookup_spec, parse, Driver, Params};
use bsdelab_core::envelope::{
    envelope_family, lower_envelope, search_radius, upper_envelope, EnvelopeDriver, EnvelopeError,
};
use bsdelab_core::EnvelopeKind;
use proptest::prelude::*;

const H: f64 = 1e-3;

fn remark33() -> Driver {
    catalog_lookup("remark33", &Params::new()).unwrap().into_driver().unwrap()
}

/// Dense 1-d scan of `inf/sup_u g(u) +/- m|y - u|` over `|u - y| <= reach`.
fn brute(g: &Driver, kind: EnvelopeKind, m: f64, y: f64, reach: f64) -> f64 {
    let n = 400_000;
    (0..=n)
        .map(|i| {
            let u = y - reach + 2.0 * reach * i as f64 / n as f64;
            let gu = g.eval(0.0, u, 0.0).unwrap();
            match kind {
                EnvelopeKind::Lower => gu + m * (y - u).abs(),
                EnvelopeKind::Upper => -(gu - m * (y - u).abs()),
            }
        })
        .fold(f64::INFINITY, f64::min)
        * match kind {
            EnvelopeKind::Lower => 1.0,
            EnvelopeKind::Upper => -1.0,
        }
}

#[test]
fn radius_examples() {
    assert_eq!(search_radius(3.0, 6.0, 0.0, &[0.0]).unwrap(), 2.0);
    assert_eq!(search_radius(3.0, 4.0, 1.0, &[0.0]).unwrap(), 12.0);
    assert_eq!(search_radius(0.0, 1.0, 5.0, &[2.0]).unwrap(), 0.0);
    assert!(matches!(
        search_radius(3.0, 3.0, 0.0, &[0.0]),
        Err(EnvelopeError::IndexTooSmall { .. })
    ));
}

#[test]
fn bounded_search_matches_wide_scan() {
    let g = remark33();
    for (m, y) in [(6.0, 0.0), (4.0, 1.0), (10.0, -2.0), (5.0, 3.5)] {
        let r = search_radius(3.0, m, y, &[0.0]).unwrap();
        for kind in [EnvelopeKind::Lower, EnvelopeKind::Upper] {
            let wide = brute(&g, kind, m, y, 4.0 * r + 1.0);
            let ball = brute(&g, kind, m, y, r);
            assert!((wide - ball).abs() < 1e-6, "{kind:?} m={m} y={y}: {wide} vs {ball}");
            let got = match kind {
                EnvelopeKind::Lower => lower_envelope(&g, m, 0.0, y, &[0.0], H).unwrap(),
                EnvelopeKind::Upper => upper_envelope(&g, m, 0.0, y, &[0.0], H).unwrap(),
            };
            assert!((got - wide).abs() <= 2.0 * H * m, "{kind:?} m={m} y={y}: {got} vs {wide}");
        }
    }
}

#[test]
fn remark33_lower_examples() {
    let g = remark33();
    assert_eq!(lower_envelope(&g, 10.0, 0.0, 0.0, &[0.0], H).unwrap(), 0.0);
    let v = lower_envelope(&g, 10.0, 0.0, 1.0, &[0.0], H).unwrap();
    let oracle = brute(&g, EnvelopeKind::Lower, 10.0, 1.0, 2.0);
    assert!(v > 0.0 && v <= 3.0);
    assert!((v - oracle).abs() < 1e-6, "{v} vs {oracle}");
}

#[test]
fn remark33_upper_at_zero() {
    let g = remark33();
    for m in [4.0, 8.0, 16.0, 32.0] {
        let oracle = brute(&g, EnvelopeKind::Upper, m, 0.0, 0.2);
        assert!((oracle - 4.0 / (m * m)).abs() < 1e-6 * 4.0 / (m * m));
        let v = upper_envelope(&g, m, 0.0, 0.0, &[0.0], H).unwrap();
        assert!((v - 4.0 / (m * m)).abs() < 1e-9, "m={m}: {v} vs oracle {oracle}");
    }
}

#[test]
fn convergence_as_m_grows() {
    let g = remark33();
    for y in [0.0, 0.3, -1.0, 2.0] {
        let gy = g.eval(0.0, y, 0.0).unwrap();
        let errors: Vec<f64> = [8.0, 16.0, 32.0, 64.0]
            .iter()
            .map(|&m| {
                let h = 1.0 / (m * m);
                let lo = lower_envelope(&g, m, 0.0, y, &[0.0], h).unwrap();
                let hi = upper_envelope(&g, m, 0.0, y, &[0.0], h).unwrap();
                (gy - lo).max(hi - gy)
            })
            .collect();
        assert!(
            errors.windows(2).all(|w| w[1] < w[0] || w[0] == 0.0),
            "y={y}: {errors:?}"
        );
    }
}

#[test]
fn lipschitz_drivers_are_fixed_points() {
    for (a, b) in [(1.0, 1.0), (2.0, -1.0), (0.0, 0.5)] {
        let p: Params = [("a".to_string(), a), ("b".to_string(), b)].into_iter().collect();
        let g = catalog_lookup("linear", &p).unwrap().into_driver().unwrap();
        let m = g.lipschitz().unwrap() + 1.0;
        for y in [-3.0, 0.0, 0.7, 4.0] {
            for z in [-2.0, 0.0, 1.5] {
                let gy = g.eval(0.0, y, z).unwrap();
                assert!((lower_envelope(&g, m, 0.0, y, &[z], H).unwrap() - gy).abs() <= 1e-12);
                assert!((upper_envelope(&g, m, 0.0, y, &[z], H).unwrap() - gy).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn vector_z_envelope() {
    let g = Driver::native("norm", 2, 1.0, Some(1.0), |_, _, z: &[f64]| {
        (z[0] * z[0] + z[1] * z[1]).sqrt()
    })
    .unwrap();
    for z in [[0.0f64, 0.0], [1.0, -2.0]] {
        let exact = (z[0] * z[0] + z[1] * z[1]).sqrt();
        assert!((lower_envelope(&g, 2.0, 0.0, 0.0, &z, H).unwrap() - exact).abs() < 1e-9);
        assert!((upper_envelope(&g, 2.0, 0.0, 0.0, &z, H).unwrap() - exact).abs() < 1e-9);
    }
    assert!(matches!(
        lower_envelope(&g, 2.0, 0.0, 0.0, &[1.0], H),
        Err(EnvelopeError::DimensionMismatch { .. })
    ));
}

#[test]
fn envelope_driver_metadata_and_cache() {
    let env = EnvelopeDriver::new(remark33(), 8.0, EnvelopeKind::Upper, H).unwrap();
    assert_eq!(env.lipschitz(), 8.0);
    let a = env.eval(0.0, 0.5, 0.0).unwrap();
    let b = env.eval(0.0, 0.5, 0.0).unwrap();
    assert_eq!(a.to_bits(), b.to_bits());
    assert_eq!(env.cached(), 1);
    assert!(EnvelopeDriver::new(remark33(), 2.0, EnvelopeKind::Lower, H).is_err());
}

#[test]
fn family_shift_passes_through() {
    let fam = lookup_spec("remark33_shift").unwrap().unwrap().into_family().unwrap();
    let env = envelope_family(fam, 8.0, EnvelopeKind::Lower, H).unwrap();
    let base = env.at(0.0).unwrap();
    let shifted = env.at(0.5).unwrap();
    for y in [-1.0, 0.0, 0.4, 2.0] {
        let d = shifted.eval(0.0, y, 0.0).unwrap() - base.eval(0.0, y, 0.0).unwrap();
        assert!((d - 0.5).abs() < 1e-9, "y={y}: {d}");
    }
}

#[test]
fn family_abs_gap_bounded() {
    let fam = lookup_spec("remark33_abs").unwrap().unwrap().into_family().unwrap();
    let env = envelope_family(fam, 16.0, EnvelopeKind::Upper, H).unwrap();
    let base = env.at(0.0).unwrap();
    for lam in [0.1, 0.5, 1.0] {
        let e = env.at(lam).unwrap();
        for y in [-2.0, -0.5, 0.0, 1.0, 3.0] {
            let gap = (e.eval(0.0, y, 0.0).unwrap() - base.eval(0.0, y, 0.0).unwrap()).abs();
            // the sup over the search ball of lam |u| bounds the gap
            let r = search_radius(4.0, 16.0, y, &[0.0]).unwrap();
            assert!(gap <= lam * (y.abs() + r) + 2.0 * H * 16.0, "lam={lam} y={y}: {gap}");
        }
    }
}

fn drivers() -> impl Strategy<Value = Driver> {
    prop::sample::select(vec!["remark33", "3*powabs(y,2/3) + abs(z)", "2*sgn(y)*powabs(y, 0.5)", "max(y, 0) - min(z, 1)"])
        .prop_map(|src| match lookup_spec(src) {
            Some(entry) => entry.unwrap().into_driver().unwrap(),
            None => Driver::from_expr(src, parse(src).unwrap(), Some(4.0), None).unwrap(),
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sandwich_and_growth(g in drivers(), m in 5.0..40.0f64, y in -5.0..5.0f64, z in -5.0..5.0f64) {
        let lo = lower_envelope(&g, m, 0.0, y, &[z], H).unwrap();
        let hi = upper_envelope(&g, m, 0.0, y, &[z], H).unwrap();
        let gy = g.eval(0.0, y, z).unwrap();
        prop_assert!(lo <= gy && gy <= hi);
        let bound = g.growth() * (y.abs() + z.abs() + 1.0) + 1e-9;
        prop_assert!(lo.abs() <= bound && hi.abs() <= bound);
    }

    #[test]
    fn monotone_in_m(g in drivers(), m1 in 5.0..20.0f64, dm in 0.5..20.0f64, y in -5.0..5.0f64, z in -2.0..2.0f64) {
        let m2 = m1 + dm;
        let tol = 2.0 * H * m2;
        prop_assert!(lower_envelope(&g, m1, 0.0, y, &[z], H).unwrap() <= lower_envelope(&g, m2, 0.0, y, &[z], H).unwrap() + tol);
        prop_assert!(upper_envelope(&g, m1, 0.0, y, &[z], H).unwrap() >= upper_envelope(&g, m2, 0.0, y, &[z], H).unwrap() - tol);
    }

    #[test]
    fn m_lipschitz(g in drivers(), m in 5.0..30.0f64, y1 in -5.0..5.0f64, y2 in -5.0..5.0f64, z1 in -2.0..2.0f64, z2 in -2.0..2.0f64) {
        let tol = m * ((y1 - y2).abs() + (z1 - z2).abs()) + 2.0 * H * m;
        for kind in [EnvelopeKind::Lower, EnvelopeKind::Upper] {
            let e = |y: f64, z: f64| bsdelab_core::envelope::envelope(&g, kind, m, 0.0, y, &[z], H).unwrap();
            prop_assert!((e(y1, z1) - e(y2, z2)).abs() <= tol);
        }
    }
}
