use std::f32::consts::PI;

use degheat::carleman::{carleman_sides, validate_context};
use degheat::control::duality_row;
use degheat::evolution::solve_forward;
use degheat::{DegenerateOperator32, ForwardProblem, GradedMesh32, GridFunction32, Scheme, Variant};

#[test]
fn classical_decay_in_f32() {
    let m = GradedMesh32::build(100, 1.0, 100, 0.1).unwrap();
    let u0 = GridFunction32::from_fn(m.clone(), |x| (PI * x).sin()).unwrap();
    let tr = solve_forward(
        &ForwardProblem::free(0.0, u0.clone()).unwrap(),
        &m,
        Scheme::CrankNicolson,
    )
    .unwrap();
    let exact = u0.scaled((-PI * PI * 0.1).exp());
    let err = tr.terminal.lin_comb(1.0, &exact, -1.0).unwrap().l2_norm().unwrap();
    assert!(err < 0.01 * exact.l2_norm().unwrap());
}

#[test]
fn eigenvalue_in_f32() {
    let m = GradedMesh32::build(100, 1.0, 4, 1.0).unwrap();
    let op = DegenerateOperator32::dirichlet(0.0, m).unwrap();
    let (lambda, _) = op.eigen_smallest(1).unwrap().remove(0);
    assert!((lambda - PI * PI).abs() < 0.005 * PI * PI);
}

#[test]
fn duality_and_carleman_in_f32() {
    let m = GradedMesh32::build(60, 2.0, 60, 1.0).unwrap();
    let g: Vec<f32> = m.times().iter().map(|&t| (PI * t).sin().powi(2)).collect();
    let v = GridFunction32::from_fn(m.clone(), |x| x * (1.0 - x)).unwrap();
    let row = duality_row(&g, &v, 0.5, &m, Scheme::CrankNicolson).unwrap();
    assert!(row.gap < 1e-2);

    let w = GridFunction32::from_space_time_fn(m, |x, t| x * x * (1.0 - x) * (1.0 - x) * t * t * (1.0 - t) * (1.0 - t))
        .unwrap();
    let ctx = validate_context(0.5f32, 0.6, 1.0, 4.0).unwrap();
    let sides = carleman_sides(&w, &ctx, Variant::Theorem).unwrap();
    assert!(sides.ratio().unwrap().is_finite());
}
