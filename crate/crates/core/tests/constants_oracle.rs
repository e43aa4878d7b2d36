use std::f64::consts::PI;

use proptest::prelude::*;
use sfde::mittag_leffler::ml_eval;
use sfde::model::{kappa1, kappa2, ContractionInputs, ContractionVariant};
use sfde::operator::{solution_operator_eval, SectorialSpec};
use sfde::quadrature::gauss_kronrod;

const ALPHAS: [f64; 6] = [1.1, 1.25, 1.5, 1.75, 1.9, 2.0];
const MUS: [f64; 3] = [-0.5, -1.0, -4.0];

/// `int_0^inf (1 + a t^alpha)^{-power} dt` by adaptive quadrature. The tail
/// `[1, inf)` is mapped by `t = v^{-1/(alpha-1)}`, which leaves a smooth
/// integrand on `[0, 1]` for both powers used here.
fn oracle(alpha: f64, a: f64, power: i32) -> f64 {
    let head = gauss_kronrod(|t| (1.0 + a * t.powf(alpha)).powi(-power), 0.0, 1.0, 1e-15, 1e-14).unwrap();
    let p = 1.0 / (alpha - 1.0);
    let tail = gauss_kronrod(
        |v: f64| {
            if v == 0.0 {
                return if power == 1 { p / a } else { 0.0 };
            }
            let t = v.powf(-p);
            // dt = p v^{-p-1} dv
            p * v.powf(-p - 1.0) * (1.0 + a * t.powf(alpha)).powi(-power)
        },
        0.0,
        1.0,
        1e-15,
        1e-14,
    )
    .unwrap();
    head.value + tail.value
}

#[test]
fn kappa1_matches_quadrature_grid() {
    for alpha in ALPHAS {
        for mu in MUS {
            let k = kappa1(alpha, mu).unwrap();
            let q = oracle(alpha, -mu, 1);
            assert!((k - q).abs() <= 1e-8, "alpha {alpha} mu {mu}: {k} vs {q}");
        }
    }
    assert!((kappa1(2.0, -1.0).unwrap() - PI / 2.0).abs() <= 1e-10);
}

#[test]
fn kappa2_exact_matches_quadrature_grid() {
    for alpha in ALPHAS {
        for mu in MUS {
            let k = kappa2(alpha, mu).unwrap().quadrature_value;
            let q = oracle(alpha, -mu, 2);
            assert!((k - q).abs() <= 1e-8, "alpha {alpha} mu {mu}: {k} vs {q}");
        }
    }
    let k = kappa2(2.0, -1.0).unwrap();
    assert!((k.quadrature_value - PI / 4.0).abs() <= 1e-10);
    assert!((k.paper_value - 1.110_720_734_539_591_5).abs() <= 1e-12);
}

#[test]
fn kappa1_scaling_law() {
    for alpha in ALPHAS {
        let base = kappa1(alpha, -1.0).unwrap();
        for mu in [-0.1f64, -2.5, -30.0] {
            let scaled = (-mu).powf(-1.0 / alpha) * base;
            assert!((kappa1(alpha, mu).unwrap() - scaled).abs() <= 1e-13 * scaled);
        }
    }
}

#[test]
fn contraction_examples() {
    let base = ContractionInputs {
        k0: 0.1,
        lipschitz: 0.0,
        b: 0.0,
        c: 1.0,
        m: 1.0,
        alpha: 1.5,
        mu: -1.0,
    };
    for v in [ContractionVariant::PaperLiteral, ContractionVariant::QuadratureExact] {
        assert!((base.theta(v).unwrap() - 0.05).abs() < 1e-15);
    }
    let lit = ContractionInputs {
        k0: 0.0,
        lipschitz: 0.01,
        alpha: 2.0,
        ..base
    };
    let expected = 5.0 * 0.01 * (PI / 2.0).powi(2) + 20.0 * 0.01 * PI / (4.0 * (PI / 4.0).sin());
    let theta = lit.theta(ContractionVariant::PaperLiteral).unwrap();
    assert!((theta - expected).abs() < 1e-14);
    assert!((theta - 0.34551).abs() < 1e-5);
    let big = ContractionInputs { lipschitz: 1.0, ..lit };
    assert!((big.theta(ContractionVariant::PaperLiteral).unwrap() - 100.0 * expected).abs() < 1e-12);
}

#[test]
fn laplace_transform_of_scalar_operator() {
    let alpha = 1.5;
    for lambda in [1.0f64, 2.0] {
        let q = gauss_kronrod(
            |t| (-lambda * t).exp() * ml_eval(alpha, 1.0, -t.powf(alpha)).unwrap(),
            0.0,
            45.0,
            1e-12,
            1e-12,
        )
        .unwrap();
        let exact = lambda.powf(alpha - 1.0) / (lambda.powf(alpha) + 1.0);
        assert!((q.value - exact).abs() <= 1e-6, "lambda {lambda}: {} vs {exact}", q.value);
    }
}

#[test]
fn diagonal_operator_is_entrywise() {
    let spec = SectorialSpec::diagonal(1.5, vec![-1.0, -2.0, -0.5], -0.5, 0.3, 1.0, 1.0);
    for t in [0.0, 0.3, 1.0, 4.0, 12.0] {
        let s = solution_operator_eval(&spec, t).unwrap();
        for (i, a) in [-1.0f64, -2.0, -0.5].iter().enumerate() {
            let e = ml_eval(1.5, 1.0, a * t.powf(1.5)).unwrap();
            assert!((s.matrix[(i, i)] - e).abs() <= 1e-12, "t {t} mode {i}");
        }
    }
}

fn inputs() -> impl Strategy<Value = ContractionInputs> {
    (0.0..1.0f64, 0.0..2.0f64, 0.0..5.0f64, 1.0..3.0f64, 0.1..3.0f64, 1.05..2.0f64, -5.0..-0.1f64).prop_map(
        |(k0, lipschitz, b, c, m, alpha, mu)| ContractionInputs {
            k0,
            lipschitz,
            b,
            c,
            m,
            alpha,
            mu,
        },
    )
}

proptest! {
    #[test]
    fn contraction_is_monotone_in_each_input(base in inputs(), bump in 0.0..1.0f64) {
        let bumped = [
            ContractionInputs { k0: base.k0 + bump, ..base },
            ContractionInputs { lipschitz: base.lipschitz + bump, ..base },
            ContractionInputs { b: base.b + bump, ..base },
            ContractionInputs { c: base.c + bump, ..base },
            ContractionInputs { m: base.m + bump, ..base },
        ];
        for v in [ContractionVariant::PaperLiteral, ContractionVariant::QuadratureExact] {
            let t0 = base.theta(v).unwrap();
            for b in &bumped {
                prop_assert!(b.theta(v).unwrap() >= t0);
            }
        }
    }

    #[test]
    fn printed_and_exact_kappa2_differ(alpha in 1.05..2.0f64, mu in -5.0..-0.1f64) {
        let k = kappa2(alpha, mu).unwrap();
        prop_assert!(k.quadrature_value > 0.0 && k.paper_value > 0.0);
        prop_assert!((k.paper_value - k.quadrature_value).abs() > 1e-6);
    }
}
