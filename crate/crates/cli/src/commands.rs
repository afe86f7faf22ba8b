//! The subcommand runners. Each one writes its files into the output
//! directory and records checks and metrics in the [`Summary`].

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Result};
use degheat::carleman::{admissibility, coefficient_signs, curvature_ratio, ratio_sweep, validate_context, SweepCurve};
use degheat::control::{control_from, duality_row, two_stage_control, verify_terminal_error, DualityRow};
use degheat::evolution::{energy_report, solve_adjoint, solve_forward};
use degheat::io::{write_duality, write_json, write_profile, write_space_time, write_sweep, write_time_series};
use degheat::operator::hardy_check;
use degheat::{
    AdjointProblem, ControlTask64, DegenerateOperator64, ForwardProblem, GradedMesh64, GridFunction64, Variant,
};
use serde::Serialize;

use crate::config::{control_signal, random_control, random_state, space_field, ExperimentConfig, Profile, Stream};
use crate::summary::{Check, Summary};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Adjoint,
    Carleman,
    Duality,
    Control,
    Hardy,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Adjoint => "adjoint",
            Command::Carleman => "carleman",
            Command::Duality => "duality",
            Command::Control => "control",
            Command::Hardy => "hardy",
        }
    }
}

struct Run<'a> {
    cfg: &'a ExperimentConfig,
    out: PathBuf,
    summary: Summary,
    verbose: bool,
}

impl Run<'_> {
    fn path(&mut self, name: &str) -> PathBuf {
        self.summary.outputs.push(name.into());
        self.out.join(name)
    }

    fn log(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("[{}] {}", self.summary.command, msg.as_ref());
        }
    }
}

/// Runs `command` and always writes `summary.json`, also when the run itself
/// fails. Returns the summary.
pub fn execute(command: Command, cfg: &ExperimentConfig, out: &Path, verbose: bool) -> Result<Summary> {
    let mut run = Run {
        cfg,
        out: out.to_path_buf(),
        summary: Summary::new(command.name(), cfg.seed),
        verbose,
    };
    let outcome = cfg.validate().and_then(|_| match command {
        Command::Solve => solve(&mut run),
        Command::Adjoint => adjoint(&mut run),
        Command::Carleman => carleman(&mut run),
        Command::Duality => duality(&mut run),
        Command::Control => control(&mut run),
        Command::Hardy => hardy(&mut run),
    });
    if let Err(e) = &outcome {
        run.summary.fail(e);
    }
    run.summary.write(out)?;
    Ok(run.summary)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (p, q)| m.max((p - q).abs()))
}

fn rel_l2(a: &GridFunction64, b: &GridFunction64) -> Result<f64> {
    Ok(a.lin_comb(1.0, b, -1.0)?.l2_norm()? / b.l2_norm()?)
}

fn solve(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let alpha = cfg.problem.alpha;
    let mesh = cfg.build_mesh()?;
    let u0 = space_field(&cfg.data.initial, &mesh, alpha, cfg.seed, Stream::Initial)?;
    let g = control_signal(&cfg.data.boundary, &mesh, cfg.seed)?;
    let problem = ForwardProblem::new(alpha, u0, g)?;
    run.log(format!("forward solve on N = {}, M = {}", mesh.cells(), mesh.steps()));
    let tr = solve_forward(&problem, &mesh, cfg.scheme)?;
    let energy = energy_report(&tr, &problem)?;

    write_space_time(&run.path("trajectory.csv"), &tr.states)?;
    write_profile(&run.path("terminal.csv"), &tr.terminal)?;
    write_time_series(&run.path("trace.csv"), &mesh, "conormal_trace", &tr.conormal_trace)?;
    #[derive(Serialize)]
    struct EnergyFile {
        sup_l2_sq: f64,
        h1_alpha_time_integral: f64,
        data_norm_sq: f64,
        ratio: Option<f64>,
    }
    let energy_file = EnergyFile {
        sup_l2_sq: energy.sup_l2_sq,
        h1_alpha_time_integral: energy.h1_alpha_time_integral,
        data_norm_sq: energy.data_norm_sq,
        ratio: energy.ratio(),
    };
    write_json(&run.path("energy.json"), &energy_file)?;
    run.summary.metric("energy", &energy_file);
    run.summary.metric("terminal_l2", tr.terminal.l2_norm()?);

    let n = mesh.cells();
    let left: Vec<f64> = (0..=mesh.steps()).map(|j| tr.states.slice(j)[0]).collect();
    let right: Vec<f64> = (0..=mesh.steps()).map(|j| tr.states.slice(j)[n]).collect();
    let bc = max_abs_diff(&left, &problem.control).max(right.iter().fold(0.0, |m, v| m.max(v.abs())));
    run.summary.check(Check::at_most("boundary_values", bc, 1e-12));
    run.summary.check(Check::flag(
        "finite",
        tr.states.values().iter().all(|v| v.is_finite()),
        "all trajectory values finite",
    ));

    if let Profile::Eigenmode { k, amplitude } = cfg.data.initial {
        if problem.control.iter().all(|&v| v == 0.0) {
            let op = DegenerateOperator64::dirichlet(alpha, mesh.clone())?;
            let (lambda, phi) = op.eigen_smallest(k)?.pop().expect("k pairs");
            let exact = phi.scaled(amplitude * (-lambda * mesh.horizon()).exp());
            run.summary.metric("eigenvalue", lambda);
            if exact.l2_norm()? > 0.0 {
                run.summary
                    .check(Check::at_most("eigen_decay", rel_l2(&tr.terminal, &exact)?, 1e-2));
            }
        }
    }
    Ok(())
}

fn adjoint(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let alpha = cfg.problem.alpha;
    let mesh = cfg.build_mesh()?;
    let v = space_field(&cfg.data.final_state, &mesh, alpha, cfg.seed, Stream::Final)?;
    let tr = solve_adjoint(&AdjointProblem::new(alpha, v)?, &mesh, cfg.scheme)?;
    write_space_time(&run.path("adjoint.csv"), &tr.states)?;
    write_time_series(&run.path("trace.csv"), &mesh, "conormal_trace", &tr.conormal_trace)?;
    let trace_l2 = tr.conormal_trace.iter().map(|p| p * p * mesh.dt()).sum::<f64>().sqrt();
    run.summary.metric("trace_l2", trace_l2);
    run.summary.check(Check::flag(
        "finite",
        tr.states.values().iter().all(|v| v.is_finite()),
        "all adjoint values finite",
    ));

    if let Profile::Eigenmode { k, .. } = cfg.data.final_state {
        let op = DegenerateOperator64::dirichlet(alpha, mesh.clone())?;
        let (lambda, _) = op.eigen_smallest(k)?.pop().expect("k pairs");
        let end = *tr.conormal_trace.last().expect("non-empty");
        let t_end = mesh.horizon();
        let worst = tr
            .conormal_trace
            .iter()
            .enumerate()
            .map(|(j, &psi)| {
                let expected = end * (-lambda * (t_end - mesh.time(j))).exp();
                if expected == 0.0 {
                    psi.abs()
                } else {
                    ((psi - expected) / expected).abs()
                }
            })
            .fold(0.0, f64::max);
        run.summary.metric("eigenvalue", lambda);
        run.summary.check(Check::at_most("trace_eigen_decay", worst, 1e-2));
    }
    Ok(())
}

/// Manufactured field `x^2(1-x)^2 t^2(T-t)^2`; vanishes with its flux at
/// both ends and at both time ends.
fn manufactured(mesh: &Arc<GradedMesh64>) -> Result<GridFunction64> {
    let t_end = mesh.horizon();
    Ok(GridFunction64::from_space_time_fn(mesh.clone(), |x, t| {
        x * x * (1.0 - x) * (1.0 - x) * t * t * (t_end - t) * (t_end - t)
    })?)
}

fn carleman(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let (alpha, beta) = (cfg.problem.alpha, cfg.carleman.beta);
    let report = admissibility(alpha, beta);
    write_json(&run.path("admissibility.json"), &report)?;
    run.summary.metric("admissibility", &report);
    run.summary.check(Check::flag(
        "admissible",
        report.valid,
        format!("beta must lie in ({}, {})", report.interval.0, report.interval.1),
    ));
    if !report.valid {
        return Ok(());
    }

    let mesh = cfg.build_mesh()?;
    let ctx = validate_context(alpha, beta, mesh.horizon(), cfg.carleman.s_list[0])?;
    run.summary.metric("coefficient_signs", coefficient_signs(&ctx));
    run.summary
        .metric("curvature_ratio", curvature_ratio(mesh.horizon(), mesh.steps()));
    let v = manufactured(&mesh)?;
    run.log(format!("sweeping {} values of s", cfg.carleman.s_list.len()));
    let theorem = ratio_sweep(&v, &ctx, &cfg.carleman.s_list, Variant::Theorem)?;
    let corollary = ratio_sweep(&v, &ctx, &cfg.carleman.s_list, Variant::Corollary)?;
    write_sweep(&run.path("sweep.csv"), &theorem)?;
    write_sweep(&run.path("sweep_corollary.csv"), &corollary)?;

    run.summary.metric("bounded_tail", theorem.bounded_tail);
    run.summary
        .metric("ratios", theorem.points.iter().map(|p| p.ratio).collect::<Vec<_>>());
    if let Some(bounded) = theorem.bounded_tail {
        run.summary.check(Check::flag(
            "bounded_tail",
            bounded,
            "max ratio over the upper half of s within 1.1 x its median",
        ));
    }
    run.summary.check(Check::flag(
        "variants_ordered",
        ordered(&theorem, &corollary),
        "corollary terms <= theorem terms",
    ));
    let truncation = theorem
        .points
        .iter()
        .map(|p| p.sides.band_truncation)
        .fold(0.0, f64::max);
    run.summary.check(Check::at_most("band_truncation", truncation, 1e-6));
    Ok(())
}

fn ordered(theorem: &SweepCurve<f64>, corollary: &SweepCurve<f64>) -> bool {
    theorem.points.iter().zip(&corollary.points).all(|(p, q)| {
        q.sides.lhs_cubic <= p.sides.lhs_cubic
            && q.sides.lhs_linear <= p.sides.lhs_linear
            && q.sides.lhs_gradient <= p.sides.lhs_gradient
    })
}

fn duality(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let alpha = cfg.problem.alpha;
    let (n, m) = (cfg.mesh.n, cfg.mesh.m);
    let mut rows: Vec<(String, DualityRow<f64>)> = Vec::new();

    let mesh = cfg.build_mesh()?;
    let zero = duality_row(
        &vec![0.0; m + 1],
        &GridFunction64::zeros(mesh.clone()),
        alpha,
        &mesh,
        cfg.scheme,
    )?;
    rows.push(("zero".into(), zero));

    let g = control_signal(&cfg.data.boundary, &mesh, cfg.seed)?;
    let v = space_field(&cfg.data.final_state, &mesh, alpha, cfg.seed, Stream::Final)?;
    rows.push(("configured".into(), duality_row(&g, &v, alpha, &mesh, cfg.scheme)?));

    // closed form: (B g, sin(pi x)) = pi int_0^T e^{-pi^2 (T-t)} g(t) dt
    let classical_t = 0.5;
    let classical_mesh = GradedMesh64::build(n, 1.0, m, classical_t)?;
    let g: Vec<f64> = classical_mesh
        .times()
        .iter()
        .map(|&t| (PI * t / classical_t).sin().powi(2))
        .collect();
    let v = GridFunction64::from_fn(classical_mesh.clone(), |x| (PI * x).sin())?;
    let classical = duality_row(&g, &v, 0.0, &classical_mesh, cfg.scheme)?;
    rows.push(("classical".into(), classical));

    let mut refinement = Vec::new();
    for (label, nn, mm) in [("refine_coarse", n / 2, m / 2), ("refine_fine", n, m)] {
        let mesh = GradedMesh64::build(nn, cfg.mesh.gamma, mm, cfg.problem.horizon)?;
        let g = random_control(&mesh, cfg.seed, Stream::DualityControl);
        let v = random_state(&mesh, cfg.seed, Stream::DualityState)?;
        let row = duality_row(&g, &v, alpha, &mesh, cfg.scheme)?;
        refinement.push(row.gap);
        rows.push((label.into(), row));
    }
    write_duality(&run.path("duality.csv"), &rows)?;

    run.summary.check(Check::at_most("zero_gap", zero.gap, 0.0));
    run.summary.check(Check::at_most("classical_gap", classical.gap, 1e-3));
    let ratio = refinement[0] / refinement[1];
    run.summary.metric("refinement_gaps", &refinement);
    run.summary.check(Check::at_least("refinement_ratio", ratio, 1.5));
    Ok(())
}

fn control(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let alpha = cfg.problem.alpha;
    let mesh = cfg.build_mesh()?;
    let task = ControlTask64 {
        alpha,
        u0: space_field(&cfg.data.initial, &mesh, alpha, cfg.seed, Stream::Initial)?,
        target: space_field(&cfg.data.target, &mesh, alpha, cfg.seed, Stream::Target)?,
        epsilon: cfg.control.epsilon,
        rho: cfg.control.rho,
        rho_min: cfg.control.rho_min,
        max_iters: cfg.control.max_iters,
        grad_tol: cfg.control.grad_tol,
    };
    let steps = mesh.steps();

    #[derive(Serialize)]
    struct ResultFile<'a> {
        two_stage: bool,
        epsilon: f64,
        target_l2: f64,
        terminal_error: f64,
        verified_terminal_error: f64,
        control_cost: f64,
        iterations: usize,
        converged: bool,
        rho_final: f64,
        stages: &'a [degheat::control::StageRecord<f64>],
        intermediate_boundary: Option<f64>,
    }

    let (result, intermediate_boundary, u0_used) = if cfg.control.two_stage {
        run.log("two-stage control");
        let two = two_stage_control(&task, &mesh, cfg.scheme)?;
        let mut u0 = task.u0.values().to_vec();
        let n = mesh.cells();
        u0[0] = 0.0;
        u0[n] = 0.0;
        let u0 = GridFunction64::space(mesh.clone(), u0)?;
        (two.result, Some(two.intermediate_boundary), u0)
    } else {
        run.log("control with penalty continuation");
        (control_from(&task, &mesh, cfg.scheme)?, None, task.u0.clone())
    };
    let verified = verify_terminal_error(&u0_used, &result.g, &task.target, alpha, &mesh, cfg.scheme)?;

    write_time_series(&run.path("control.csv"), &mesh, "g", &result.g)?;
    let file = ResultFile {
        two_stage: cfg.control.two_stage,
        epsilon: task.epsilon,
        target_l2: task.target.l2_norm()?,
        terminal_error: result.terminal_error,
        verified_terminal_error: verified,
        control_cost: result.control_cost,
        iterations: result.iterations,
        converged: result.converged,
        rho_final: result.rho_final,
        stages: &result.stages,
        intermediate_boundary,
    };
    write_json(&run.path("result.json"), &file)?;
    run.summary.metric("result", &file);

    run.summary
        .check(Check::at_most("terminal_error", result.terminal_error, task.epsilon));
    run.summary.check(Check::at_most(
        "verification",
        (result.terminal_error - verified).abs(),
        1e-10,
    ));
    run.summary.check(Check::flag(
        "control_endpoints",
        result.g[0] == 0.0 && result.g[steps] == 0.0,
        "g(0) = g(T) = 0",
    ));
    if let Some(b) = intermediate_boundary {
        run.summary.check(Check::at_most("intermediate_boundary", b, 1e-6));
        run.summary.check(Check::flag(
            "first_half_zero",
            result.g[..steps / 2].iter().all(|&v| v == 0.0),
            "g = 0 on [0, T/2)",
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
struct HardyRow {
    n: usize,
    flux_bound_margin: f64,
    solution_bound_margin: f64,
    integral_bound_ratio: f64,
    integral_constant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct HardyCase {
    name: &'static str,
    rows: Vec<HardyRow>,
}

pub type TestFunction = (&'static str, fn(f64) -> f64);

/// Test functions vanishing at least quadratically at the degenerate end.
pub const HARDY_CATALOG: [TestFunction; 4] = [
    ("x2_1mx", |x| x * x * (1.0 - x)),
    ("x2_1mx2", |x| x * x * (1.0 - x) * (1.0 - x)),
    ("x3_cos", |x| x.powi(3) * (PI * x / 2.0).cos()),
    ("x2_sin", |x| x * x * (PI * x).sin()),
];

fn hardy(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let (alpha, beta) = (cfg.problem.alpha, cfg.hardy.beta);
    let refinements = &cfg.hardy.refinements;
    if refinements.is_empty() {
        bail!("hardy.refinements is empty");
    }
    let mut cases = Vec::new();
    for (name, f) in HARDY_CATALOG {
        let mut rows = Vec::new();
        for &n in refinements {
            let mesh = GradedMesh64::build(n, cfg.mesh.gamma, 4, 1.0)?;
            let op = DegenerateOperator64::dirichlet(alpha, mesh.clone())?;
            let u = GridFunction64::from_fn(mesh, f)?;
            let r = hardy_check(&u, alpha, beta, &op)?;
            rows.push(HardyRow {
                n,
                flux_bound_margin: r.flux_bound_margin,
                solution_bound_margin: r.solution_bound_margin,
                integral_bound_ratio: r.integral_bound_ratio,
                integral_constant: r.integral_constant,
            });
        }
        cases.push(HardyCase { name, rows });
    }
    write_json(&run.path("hardy.json"), &cases)?;

    for case in &cases {
        let last = case.rows.last().expect("non-empty");
        let margin = last.flux_bound_margin.min(last.solution_bound_margin);
        run.summary
            .check(Check::at_least(&format!("{}_margin", case.name), margin, -1e-2));
        let improving = case.rows.windows(2).all(|w| {
            let violation = |r: &HardyRow| (-r.flux_bound_margin).max(0.0) + (-r.solution_bound_margin).max(0.0);
            violation(&w[1]) <= violation(&w[0])
        });
        run.summary.check(Check::flag(
            &format!("{}_improving", case.name),
            improving,
            "margin violation non-increasing",
        ));
        let spread = case
            .rows
            .iter()
            .map(|r| (r.integral_bound_ratio / last.integral_bound_ratio - 1.0).abs())
            .fold(0.0, f64::max);
        let finite = case.rows.iter().all(|r| r.integral_bound_ratio.is_finite());
        run.summary.check(Check::at_most(
            &format!("{}_ratio_spread", case.name),
            if finite { spread } else { f64::INFINITY },
            0.1,
        ));
    }
    Ok(())
}
