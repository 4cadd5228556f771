//! Property tests for the field DSL: dual-number derivatives against a
//! symbolic oracle on random polynomials, and parse/print round-trips.

use proptest::prelude::*;

use tempogeo_core::fields::{parse, Expression, Func, ScalarField};

/// Symbolic derivative for the polynomial subset (test-side oracle,
/// independent of the dual-number evaluator).
fn d_sym(e: &Expression, var: usize) -> Expression {
    use Expression as E;
    match e {
        E::Number(_) | E::Time => E::Number(0.0),
        E::Coord(i) => E::Number(if *i == var { 1.0 } else { 0.0 }),
        E::Neg(a) => E::Neg(Box::new(d_sym(a, var))),
        E::Add(a, b) => E::Add(Box::new(d_sym(a, var)), Box::new(d_sym(b, var))),
        E::Sub(a, b) => E::Sub(Box::new(d_sym(a, var)), Box::new(d_sym(b, var))),
        E::Mul(a, b) => E::Add(
            Box::new(E::Mul(Box::new(d_sym(a, var)), b.clone())),
            Box::new(E::Mul(a.clone(), Box::new(d_sym(b, var)))),
        ),
        E::Pow(a, b) => match **b {
            E::Number(n) => {
                if n == 0.0 {
                    E::Number(0.0)
                } else {
                    // n a^{n-1} a'
                    E::Mul(
                        Box::new(E::Mul(
                            Box::new(E::Number(n)),
                            Box::new(E::Pow(a.clone(), Box::new(E::Number(n - 1.0)))),
                        )),
                        Box::new(d_sym(a, var)),
                    )
                }
            }
            _ => unreachable!("polynomial strategy uses literal exponents"),
        },
        E::Div(..) | E::Call(..) => unreachable!("not part of the polynomial subset"),
    }
}

/// Random polynomials of degree ≤ 4 in up to 3 coordinates.
fn polynomial(max_depth: u32) -> impl Strategy<Value = Expression> {
    let leaf = prop_oneof![
        (0..10i32).prop_map(|n| Expression::Number(n as f64)),
        (0..3usize).prop_map(Expression::Coord),
    ];
    leaf.prop_recursive(max_depth, 64, 3, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone())
                .prop_map(|(a, b)| Expression::Add(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone())
                .prop_map(|(a, b)| Expression::Sub(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone())
                .prop_map(|(a, b)| Expression::Mul(Box::new(a), Box::new(b))),
            inner.clone().prop_map(|a| Expression::Neg(Box::new(a))),
            (inner, 0..5i32).prop_map(|(a, n)| Expression::Pow(
                Box::new(a),
                Box::new(Expression::Number(n as f64))
            )),
        ]
    })
}

/// Arbitrary parser-producible expressions (non-negative literals; calls,
/// divisions and powers included).
fn any_expression(max_depth: u32) -> impl Strategy<Value = Expression> {
    let leaf = prop_oneof![
        (0u32..1000, 0u32..100).prop_map(|(a, b)| Expression::Number(a as f64 + b as f64 / 100.0)),
        (0..4usize).prop_map(Expression::Coord),
        Just(Expression::Time),
    ];
    leaf.prop_recursive(max_depth, 96, 3, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone())
                .prop_map(|(a, b)| Expression::Add(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone())
                .prop_map(|(a, b)| Expression::Sub(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone())
                .prop_map(|(a, b)| Expression::Mul(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone())
                .prop_map(|(a, b)| Expression::Div(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone())
                .prop_map(|(a, b)| Expression::Pow(Box::new(a), Box::new(b))),
            inner.clone().prop_map(|a| Expression::Neg(Box::new(a))),
            inner
                .clone()
                .prop_map(|a| Expression::Call(Func::Exp, vec![a])),
            inner
                .clone()
                .prop_map(|a| Expression::Call(Func::Sin, vec![a])),
            inner
                .clone()
                .prop_map(|a| Expression::Call(Func::Tanh, vec![a])),
            (inner.clone(), inner).prop_map(|(a, b)| Expression::Call(Func::Min, vec![a, b])),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1024))]

    #[test]
    fn dual_derivatives_match_symbolic_derivatives_on_polynomials(
        expr in polynomial(4),
        var in 0..3usize,
        xs in prop::array::uniform3(-1.0f64..1.0),
    ) {
        let field = ScalarField::new(expr.clone(), 3).unwrap();
        let ad = field.dx(var, 0.0, &xs).unwrap();
        let sym = d_sym(&expr, var);
        let expected = sym.eval(0.0, &xs).unwrap();
        let tol = 1e-12 * (1.0 + expected.abs());
        prop_assert!(
            (ad - expected).abs() <= tol,
            "ad {} vs symbolic {} for {}", ad, expected, expr
        );
    }

    #[test]
    fn second_derivatives_commute_on_polynomials(
        expr in polynomial(3),
        xs in prop::array::uniform3(-1.0f64..1.0),
    ) {
        let field = ScalarField::new(expr, 3).unwrap();
        for i in 0..3 {
            for j in (i + 1)..3 {
                let a = field.d2x(i, j, 0.0, &xs).unwrap();
                let b = field.d2x(j, i, 0.0, &xs).unwrap();
                prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn printing_then_reparsing_reproduces_the_tree(expr in any_expression(4)) {
        let printed = expr.to_string();
        let reparsed = parse(&printed)
            .unwrap_or_else(|e| panic!("`{printed}` failed to reparse: {e}"));
        prop_assert_eq!(expr, reparsed, "printed form: {}", printed);
    }
}
