use bsdelab_core::dsl::{
    audit_growth, audit_lipschitz, catalog_lookup, lookup_spec, parse, AuditBox, Bindings,
    BinaryOp, CatalogEntry, Driver, EvalError, Expr, Params, ParseErrorKind, UnaryOp, Var,
};
use proptest::prelude::*;

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        (0.0..1e6f64).prop_map(Expr::num),
        (0u32..100).prop_map(|n| Expr::num(n as f64)),
        prop::sample::select(vec![Var::T, Var::Y, Var::Z, Var::W, Var::Lam]).prop_map(Expr::var),
    ]
}

fn ast() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(5, 48, 2, |inner| {
        let unary = prop::sample::select(vec![
            UnaryOp::Neg,
            UnaryOp::Abs,
            UnaryOp::Sgn,
            UnaryOp::Exp,
            UnaryOp::Sqrt,
        ]);
        let binary = prop::sample::select(vec![
            BinaryOp::Add,
            BinaryOp::Sub,
            BinaryOp::Mul,
            BinaryOp::Div,
            BinaryOp::Min,
            BinaryOp::Max,
            BinaryOp::PowAbs,
        ]);
        prop_oneof![
            (unary, inner.clone()).prop_map(|(op, e)| Expr::unary(op, e)),
            (binary, inner.clone(), inner.clone()).prop_map(|(op, l, r)| Expr::binary(op, l, r)),
            (inner, 0u32..5).prop_map(|(b, k)| Expr::binary(BinaryOp::Pow, b, Expr::num(k as f64))),
        ]
    })
}

proptest! {
    #[test]
    fn print_then_parse_is_identity(e in ast()) {
        let printed = e.to_string();
        let back = parse(&printed).unwrap();
        prop_assert_eq!(&back, &e, "printed as {}", printed);
        prop_assert_eq!(back.to_string(), printed);
    }

    #[test]
    fn evaluation_agrees_after_round_trip(e in ast(), y in -3.0..3.0f64, z in -3.0..3.0f64) {
        let b = Bindings { t: Some(0.5), y: Some(y), z: Some(z), w: Some(0.25), lam: Some(0.75) };
        let back = parse(&e.to_string()).unwrap();
        prop_assert_eq!(e.evaluate(&b), back.evaluate(&b));
    }
}

#[test]
fn parse_examples() {
    assert_eq!(
        parse("3*powabs(y,2/3)").unwrap(),
        Expr::binary(
            BinaryOp::Mul,
            Expr::num(3.0),
            Expr::binary(
                BinaryOp::PowAbs,
                Expr::var(Var::Y),
                Expr::binary(BinaryOp::Div, Expr::num(2.0), Expr::num(3.0))
            )
        )
    );
    assert_eq!(parse("y").unwrap(), Expr::var(Var::Y));
    let div = parse("1/0").unwrap();
    assert_eq!(
        div.evaluate(&Bindings::driver(0.0, 0.0, 0.0)),
        Err(EvalError::DivisionByZero)
    );
}

#[test]
fn precedence_and_associativity() {
    let b = Bindings::driver(0.0, 2.0, 3.0);
    let eval = |s: &str| parse(s).unwrap().evaluate(&b).unwrap();
    assert_eq!(eval("1 - 2 - 3"), -4.0);
    assert_eq!(eval("2^3^2"), 512.0);
    assert_eq!(eval("-y^2"), -4.0);
    assert_eq!(eval("y * z + 1"), 7.0);
    assert_eq!(eval("(y + z) * 2"), 10.0);
    assert_eq!(eval("max(y, z) - min(y, z)"), 1.0);
}

#[test]
fn diagnostics_carry_positions() {
    let err = parse("y +\n  foo").unwrap_err();
    assert_eq!(err.to_string(), "2:3: unknown identifier `foo`");
    assert!(matches!(
        parse("max(y)").unwrap_err().kind,
        ParseErrorKind::Arity { expected: 2, found: 1, .. }
    ));
    let err = parse("y + ").unwrap_err();
    assert!(matches!(err.kind, ParseErrorKind::UnexpectedEnd { .. }));
    assert_eq!(err.offset, 4);
    assert!(parse("y 2").is_err());
}

#[test]
fn evaluation_examples() {
    let g = parse("3*powabs(y,2/3)").unwrap();
    let at = |y: f64| g.evaluate(&Bindings::driver(0.0, y, 0.0)).unwrap();
    approx::assert_abs_diff_eq!(at(8.0), 12.0, epsilon = 1e-12);
    approx::assert_abs_diff_eq!(at(-8.0), 3.0 * 8f64.powf(2.0 / 3.0), epsilon = 1e-12);
    assert_eq!(at(0.0), 0.0);

    let lin = parse("a*y+b*z").map(|_| ()).unwrap_err();
    assert!(matches!(lin.kind, ParseErrorKind::UnknownIdentifier(_)));
    let zero = parse("0*y+0*z").unwrap();
    assert_eq!(zero.evaluate(&Bindings::driver(0.0, 5.0, -7.0)), Ok(0.0));
}

fn catalog_drivers() -> Vec<Driver> {
    let p = |kv: &[(&str, f64)]| -> Params { kv.iter().map(|(k, v)| (k.to_string(), *v)).collect() };
    let specs: Vec<(&str, Params)> = vec![
        ("zero", p(&[])),
        ("constant", p(&[("c", -2.5)])),
        ("linear", p(&[("a", 2.0), ("b", -1.0)])),
        ("linear", p(&[("a", 0.0), ("b", 0.0)])),
        ("linear", p(&[("a", -0.5), ("b", 3.0)])),
        ("remark33", p(&[])),
        ("abs_power", p(&[("c", 2.0), ("p", 0.5)])),
        ("abs_power", p(&[("c", -1.5), ("p", 1.0)])),
    ];
    specs
        .into_iter()
        .map(|(name, params)| catalog_lookup(name, &params).unwrap().into_driver().unwrap())
        .collect()
}

#[test]
fn catalog_growth_audit() {
    for d in catalog_drivers() {
        let excess = audit_growth(&d, &AuditBox::default()).unwrap();
        assert!(excess <= 1e-9, "{}: excess {excess}", d.name());
    }
}

#[test]
fn catalog_lipschitz_audit() {
    for d in catalog_drivers() {
        if d.lipschitz().is_some() {
            let excess = audit_lipschitz(&d, &AuditBox::default()).unwrap().unwrap();
            assert!(excess <= 1e-9, "{}: excess {excess}", d.name());
        }
    }
}

#[test]
fn audit_catches_understated_constants() {
    let d = Driver::from_expr("5*y", parse("5*y").unwrap(), Some(1.0), Some(1.0)).unwrap();
    assert!(audit_growth(&d, &AuditBox::default()).unwrap() > 1.0);
    assert!(audit_lipschitz(&d, &AuditBox::default()).unwrap().unwrap() > 1.0);
}

#[test]
fn family_slices_share_growth() {
    for name in ["linear_lambda", "remark33_shift", "remark33_abs"] {
        let f = match lookup_spec(name).unwrap().unwrap() {
            CatalogEntry::Family(f) => f,
            CatalogEntry::Driver(_) => panic!("{name} should be a family"),
        };
        for lam in [0.0, 0.3, 1.0] {
            let s = f.slice(lam).unwrap();
            assert_eq!(s.growth(), f.growth());
            assert!(audit_growth(&s, &AuditBox::default()).unwrap() <= 1e-9);
        }
        assert!(f.slice(1.5).is_err());
    }
}

#[test]
fn expressions_reject_foreign_variables() {
    assert!(Driver::from_expr("w", parse("w").unwrap(), Some(1.0), None).is_err());
    assert!(Driver::from_expr("y", parse("y").unwrap(), None, None).is_err());
    let c = Driver::from_expr("2", parse("2").unwrap(), None, None).unwrap();
    assert_eq!((c.growth(), c.lipschitz()), (2.0, Some(0.0)));
}
