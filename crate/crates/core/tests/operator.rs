use std::f64::consts::PI;

use degheat::operator::hardy_check;
use degheat::{DegenerateOperator64, GradedMesh64, GridFunction64};
use proptest::prelude::*;

/// Smallest Dirichlet eigenvalue of `-(x^a u')' = lam u` by shooting.
///
/// With `xi = x^(1-a)` and flux `F = x^a u'` the system
/// `du/dxi = F/(1-a)`, `dF/dxi = -lam u x^a/(1-a)` is regular at 0.
fn shoot(alpha: f64, lambda: f64, steps: usize) -> f64 {
    let p = 1.0 - alpha;
    let rhs = |xi: f64, u: f64, f: f64| {
        let x = xi.powf(1.0 / p);
        // dx/dxi = x^a / (1-a)
        let dx = x.powf(alpha) / p;
        (f / p, -lambda * u * dx)
    };
    let h = 1.0 / steps as f64;
    let (mut u, mut f) = (0.0, 1.0);
    for k in 0..steps {
        let xi = k as f64 * h;
        let (a1, b1) = rhs(xi, u, f);
        let (a2, b2) = rhs(xi + 0.5 * h, u + 0.5 * h * a1, f + 0.5 * h * b1);
        let (a3, b3) = rhs(xi + 0.5 * h, u + 0.5 * h * a2, f + 0.5 * h * b2);
        let (a4, b4) = rhs(xi + h, u + h * a3, f + h * b3);
        u += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
        f += h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
    }
    u
}

fn shooting_eigenvalue(alpha: f64, steps: usize) -> f64 {
    // first sign change of u(1; lam), then bisection
    let mut lo = 0.25;
    let flo = shoot(alpha, lo, steps);
    while shoot(alpha, lo + 0.25, steps) * flo > 0.0 {
        lo += 0.25;
        assert!(lo < 50.0);
    }
    let mut hi = lo + 0.25;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if shoot(alpha, mid, steps) * flo > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn first_eigenvalue_matches_shooting() {
    for alpha in [0.25, 0.5, 0.75] {
        let coarse = shooting_eigenvalue(alpha, 2000);
        let fine = shooting_eigenvalue(alpha, 4000);
        let oracle = fine + (fine - coarse) / 15.0;
        let mesh = GradedMesh64::build(200, 2.0, 4, 1.0).unwrap();
        let op = DegenerateOperator64::dirichlet(alpha, mesh).unwrap();
        let (lambda, phi) = op.eigen_smallest(1).unwrap().remove(0);
        assert!(
            (lambda - oracle).abs() < 0.01 * oracle,
            "alpha {alpha}: {lambda} vs {oracle}"
        );
        assert!((phi.l2_norm().unwrap() - 1.0).abs() < 1e-10);
        assert!(phi.values()[1..200].iter().all(|&v| v > 0.0));
    }
    // a = 1/2: (4/3) sqrt(lam) is the first zero of J_{1/3}
    let lam = shooting_eigenvalue(0.5, 4000);
    assert!((lam - (0.75f64 * 2.902586).powi(2)).abs() < 1e-3);
}

#[test]
fn eigenvalues_increase_and_vectors_are_orthogonal() {
    let mesh = GradedMesh64::build(120, 2.0, 4, 1.0).unwrap();
    let op = DegenerateOperator64::dirichlet(0.5, mesh).unwrap();
    let pairs = op.eigen_smallest(4).unwrap();
    for w in pairs.windows(2) {
        assert!(w[0].0 > 0.0 && w[0].0 < w[1].0);
    }
    for i in 0..4 {
        for j in 0..i {
            assert!(pairs[i].1.inner(&pairs[j].1).unwrap().abs() < 1e-8);
        }
    }
}

#[test]
fn operator_on_power_matches_closed_form() {
    // (x^0.5 (x^1.5)')' = 1.5
    let mesh = GradedMesh64::build(400, 2.0, 4, 1.0).unwrap();
    let op = DegenerateOperator64::dirichlet(0.5, mesh.clone()).unwrap();
    let f = GridFunction64::from_fn(mesh, |x| x.powf(1.5)).unwrap();
    let af = op.apply(&f).unwrap();
    let err = af.values()[1..400].iter().fold(0.0f64, |m, v| m.max((v - 1.5).abs()));
    assert!(err <= 2e-2, "{err}");
}

#[test]
fn trace_of_lifting_is_exact() {
    for alpha in [0.25, 0.5, 0.75] {
        for n in [100, 200, 400] {
            let mesh = GradedMesh64::build(n, 2.0, 4, 1.0).unwrap();
            let op = DegenerateOperator64::dirichlet(alpha, mesh.clone()).unwrap();
            let l = GridFunction64::from_fn(mesh, |x| 1.0 - x.powf(1.0 - alpha)).unwrap();
            let trace = op.conormal_trace_at_zero(&l).unwrap();
            assert!((trace + (1.0 - alpha)).abs() < 0.02 * (1.0 - alpha));
        }
    }
}

#[test]
fn trace_of_identity_vanishes_under_refinement() {
    let mut last = f64::INFINITY;
    for n in [50, 100, 200, 400] {
        let mesh = GradedMesh64::build(n, 2.0, 4, 1.0).unwrap();
        let op = DegenerateOperator64::dirichlet(0.5, mesh.clone()).unwrap();
        let f = GridFunction64::from_fn(mesh, |x| x).unwrap();
        let t = op.conormal_trace_at_zero(&f).unwrap();
        assert!(t > 0.0 && t < last);
        last = t;
    }
    assert!(last < 0.01);
}

/// Composite Gauss-Legendre (5 points) after `x = y^4`, which removes the
/// algebraic endpoint singularities of the integrands used here.
fn integrate(f: impl Fn(f64) -> f64) -> f64 {
    let nodes = [
        (0.0, 128.0 / 225.0),
        (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
        (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
        (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
        (0.906_179_845_938_664, 0.236_926_885_056_189_1),
    ];
    let panels = 400;
    let h = 1.0 / panels as f64;
    let mut acc = 0.0;
    for k in 0..panels {
        let c = (k as f64 + 0.5) * h;
        for &(z, w) in &nodes {
            let y: f64 = c + 0.5 * h * z;
            acc += 0.5 * h * w * f(y.powi(4)) * 4.0 * y.powi(3);
        }
    }
    acc
}

#[test]
fn hardy_integral_ratio_against_quadrature() {
    let (a, b) = (0.25, 0.8);
    let u = |x: f64| (PI * x).sin() * x.powf(1.5);
    let du = |x: f64| PI * (PI * x).cos() * x.powf(1.5) + 1.5 * (PI * x).sin() * x.sqrt();
    let au = |x: f64| {
        -PI * PI * (PI * x).sin() * x.powf(a + 1.5)
            + PI * (a + 1.5) * (PI * x).cos() * x.powf(a + 0.5)
            + 1.5 * PI * (PI * x).cos() * x.powf(a + 0.5)
            + 1.5 * (a + 0.5) * (PI * x).sin() * x.powf(a - 0.5)
    };
    let graph = integrate(|x| u(x) * u(x)).sqrt() + integrate(|x| au(x) * au(x)).sqrt();
    let lhs = integrate(|x| x.powf(2.0 * a + b - 4.0) * u(x) * u(x))
        + integrate(|x| x.powf(2.0 * a + b - 2.0) * du(x) * du(x));
    let oracle = lhs / (graph * graph);

    let mesh = GradedMesh64::build(400, 2.0, 4, 1.0).unwrap();
    let op = DegenerateOperator64::dirichlet(a, mesh.clone()).unwrap();
    let f = GridFunction64::from_fn(mesh, u).unwrap();
    let r = hardy_check(&f, a, b, &op).unwrap();
    assert!(r.integral_bound_ratio.is_finite());
    assert!(
        r.integral_bound_ratio <= oracle + 1e-2,
        "{} vs {oracle}",
        r.integral_bound_ratio
    );
    assert!((r.integral_bound_ratio - oracle).abs() < 0.05 * oracle);
    assert!(r.integral_bound_ratio <= r.integral_constant);
}

#[test]
fn hardy_flux_margin_for_power() {
    let mesh = GradedMesh64::build(400, 2.0, 4, 1.0).unwrap();
    let op = DegenerateOperator64::dirichlet(0.5, mesh.clone()).unwrap();
    let f = GridFunction64::from_fn(mesh, |x| x.powf(1.5) * (1.0 - x)).unwrap();
    let r = hardy_check(&f, 0.5, 0.6, &op).unwrap();
    assert!(r.flux_bound_margin >= -1e-2);
    assert!(r.solution_bound_margin >= -1e-2);
}

fn interior_field(mesh: &std::sync::Arc<GradedMesh64>, coeffs: &[f64]) -> GridFunction64 {
    GridFunction64::from_fn(mesh.clone(), |x| {
        coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| c * ((k + 1) as f64 * PI * x).sin())
            .sum::<f64>()
            * x
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn symmetric_and_negative(
        alpha in 0.0f64..0.95,
        n in 8usize..80,
        grading in 1.0f64..3.0,
        a in prop::collection::vec(-1.0f64..1.0, 4),
        b in prop::collection::vec(-1.0f64..1.0, 4),
    ) {
        let mesh = GradedMesh64::build(n, grading, 4, 1.0).unwrap();
        let op = DegenerateOperator64::dirichlet(alpha, mesh.clone()).unwrap();
        let f = interior_field(&mesh, &a);
        let g = interior_field(&mesh, &b);
        let af = op.apply(&f).unwrap();
        let ag = op.apply(&g).unwrap();
        let p = af.inner(&g).unwrap();
        let q = f.inner(&ag).unwrap();
        let scale = af.l2_norm().unwrap() * g.l2_norm().unwrap() + 1e-300;
        prop_assert!((p - q).abs() <= 1e-12 * scale);
        prop_assert!(af.inner(&f).unwrap() <= 1e-14 * scale);

        // summation by parts: <Af, f> = -sum c (df/h)^2 h
        let flux = op.fluxes(f.values());
        let energy: f64 = (0..n).map(|i| flux[i] * (f.values()[i + 1] - f.values()[i])).sum();
        prop_assert!((af.inner(&f).unwrap() + energy).abs() <= 1e-10 * energy.abs().max(1e-300));
    }

    #[test]
    fn linear(alpha in 0.0f64..0.95, s in -3.0f64..3.0, a in prop::collection::vec(-1.0f64..1.0, 4), b in prop::collection::vec(-1.0f64..1.0, 4)) {
        let mesh = GradedMesh64::build(40, 2.0, 4, 1.0).unwrap();
        let op = DegenerateOperator64::dirichlet(alpha, mesh.clone()).unwrap();
        let f = interior_field(&mesh, &a);
        let g = interior_field(&mesh, &b);
        let lhs = op.apply(&f.lin_comb(1.0, &g, s).unwrap()).unwrap();
        let rhs = op.apply(&f).unwrap().lin_comb(1.0, &op.apply(&g).unwrap(), s).unwrap();
        let scale = lhs.max_abs().max(1.0);
        for (p, q) in lhs.values().iter().zip(rhs.values()) {
            prop_assert!((p - q).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn weighted_quadrature_is_linear(sigma in -0.9f64..2.0, s in -2.0f64..2.0) {
        let mesh = GradedMesh64::build(30, 2.0, 4, 1.0).unwrap();
        let f = GridFunction64::from_fn(mesh.clone(), |x| x * (1.0 - x)).unwrap();
        let g = GridFunction64::from_fn(mesh, |x| (3.0 * x).sin()).unwrap();
        let lhs = degheat::mesh::weighted_integral(&f.lin_comb(1.0, &g, s).unwrap(), sigma).unwrap();
        let rhs = degheat::mesh::weighted_integral(&f, sigma).unwrap() + s * degheat::mesh::weighted_integral(&g, sigma).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()));
    }
}
