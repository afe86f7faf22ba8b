//! Dirichlet boundary control at `x = 0`.
//!
//! `B: g -> u_g(T)` maps a control with `g(0) = g(T) = 0` to the terminal state
//! from zero initial data. Its adjoint is read off the conormal trace `psi` of
//! the backward problem with final data `v`: for the time-stepping schemes
//! used here the pairing
//!
//! ```text
//! (B g, v) = sum_n dt * gbar_n * psibar_n
//! ```
//!
//! holds to rounding, with step averages `gbar_n = (g^n + g^{n+1})/2`,
//! `psibar_n = (psi^n + psi^{n+1})/2` for Crank-Nicolson and
//! `gbar_n = g^{n+1}`, `psibar_n = psi^n` for implicit Euler.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::evolution::{check_control, Propagator, Scheme};
use crate::mesh::{GradedMesh, GridFunction};
use crate::scalar::Scalar;
use crate::tridiag::Tridiagonal;

/// `B g`: terminal state of the forward problem with `u0 = 0`.
pub fn apply_b<T: Scalar>(g: &[T], alpha: T, mesh: &Arc<GradedMesh<T>>, scheme: Scheme) -> Result<GridFunction<T>> {
    let prop = Propagator::new(alpha, mesh.clone(), scheme)?;
    let zero = vec![T::zero(); mesh.len()];
    GridFunction::space(mesh.clone(), prop.terminal(&zero, g)?)
}

/// Scheme-exact pairing `sum_n dt gbar_n psibar_n`.
pub fn trace_pairing<T: Scalar>(g: &[T], psi: &[T], dt: T, scheme: Scheme) -> T {
    let half = T::of(0.5);
    (0..g.len() - 1)
        .map(|n| match scheme {
            Scheme::CrankNicolson => dt * half * (g[n] + g[n + 1]) * half * (psi[n] + psi[n + 1]),
            Scheme::ImplicitEuler => dt * g[n + 1] * psi[n],
        })
        .sum()
}

/// Derivative of [`trace_pairing`] with respect to `g_j`, divided by `dt`.
/// Zero at both end nodes.
pub fn pairing_density<T: Scalar>(psi: &[T], scheme: Scheme) -> Vec<T> {
    let m = psi.len() - 1;
    let mut e = vec![T::zero(); m + 1];
    for j in 1..m {
        e[j] = match scheme {
            Scheme::CrankNicolson => (psi[j - 1] + T::of(2.0) * psi[j] + psi[j + 1]) * T::of(0.25),
            Scheme::ImplicitEuler => psi[j - 1],
        };
    }
    e
}

/// Both sides of the duality identity and their relative gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DualityRow<T> {
    /// `(B g, v)`.
    pub lhs: T,
    /// `sum_j psi(t_j) g(t_j) dt`.
    pub rhs: T,
    pub gap: T,
}

/// `|(Bg, v) - sum_j psi_j g_j dt| / (|lhs| + |rhs| + eps)`.
pub fn duality_row<T: Scalar>(
    g: &[T],
    v: &GridFunction<T>,
    alpha: T,
    mesh: &Arc<GradedMesh<T>>,
    scheme: Scheme,
) -> Result<DualityRow<T>> {
    check_control(g, mesh.steps())?;
    v.require_space()?;
    v.ensure_mesh(mesh)?;
    let prop = Propagator::new(alpha, mesh.clone(), scheme)?;
    let zero = vec![T::zero(); mesh.len()];
    let bg = prop.terminal(&zero, g)?;
    let lhs = mesh.inner(&bg, v.values());
    let psi = prop.adjoint_traces(v.values())?;
    let dt = mesh.dt();
    let rhs: T = psi.iter().zip(g).map(|(&p, &q)| p * q * dt).sum();
    let gap = (lhs - rhs).abs() / (lhs.abs() + rhs.abs() + T::epsilon());
    Ok(DualityRow { lhs, rhs, gap })
}

pub fn duality_gap<T: Scalar>(
    g: &[T],
    v: &GridFunction<T>,
    alpha: T,
    mesh: &Arc<GradedMesh<T>>,
    scheme: Scheme,
) -> Result<T> {
    Ok(duality_row(g, v, alpha, mesh, scheme)?.gap)
}

fn second_difference<T: Scalar>(m: usize, dt: T) -> Result<Tridiagonal<T>> {
    let k = m.saturating_sub(1);
    if k == 0 {
        return Err(Error::InvalidParameter("need at least two time steps".into()));
    }
    let c = T::one() / (dt * dt);
    Tridiagonal::new(vec![-c; k], vec![T::of(2.0) * c; k], vec![-c; k])
}

/// Solves `-G'' = psi` on the time grid with `G(0) = G(T) = 0`; `psi` is read
/// on the interior nodes only.
pub fn riesz_h10<T: Scalar>(psi: &[T], dt: T) -> Result<Vec<T>> {
    let m = psi
        .len()
        .checked_sub(1)
        .ok_or_else(|| Error::InvalidParameter("empty sequence".into()))?;
    let a = second_difference(m, dt)?;
    let inner = a.solve(&psi[1..m])?;
    let mut g = Vec::with_capacity(m + 1);
    g.push(T::zero());
    g.extend(inner);
    g.push(T::zero());
    Ok(g)
}

/// `sum (a_{j+1} - a_j)(b_{j+1} - b_j) / dt`.
pub fn h10_inner<T: Scalar>(a: &[T], b: &[T], dt: T) -> T {
    a.windows(2)
        .zip(b.windows(2))
        .map(|(p, q)| (p[1] - p[0]) * (q[1] - q[0]) / dt)
        .sum()
}

#[derive(Debug, Clone)]
pub struct ControlTask<T> {
    pub alpha: T,
    pub u0: GridFunction<T>,
    pub target: GridFunction<T>,
    pub epsilon: T,
    /// Initial penalty; continuation divides it by 10 down to `rho_min`.
    pub rho: T,
    pub rho_min: T,
    pub max_iters: usize,
    /// Relative to the initial gradient norm.
    pub grad_tol: T,
}

impl<T: Scalar> ControlTask<T> {
    pub fn validate(&self) -> Result<()> {
        self.u0.require_space()?;
        self.target.require_space()?;
        if !(self.epsilon > T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !(self.rho > T::zero()) || !(self.rho_min > T::zero()) || self.rho_min > self.rho {
            return Err(Error::InvalidParameter(format!(
                "need 0 < rho_min <= rho, got rho = {}, rho_min = {}",
                self.rho, self.rho_min
            )));
        }
        if !(self.grad_tol >= T::zero()) {
            return Err(Error::InvalidParameter("grad_tol must be non-negative".into()));
        }
        Ok(())
    }
}

/// One completed penalty level of the continuation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StageRecord<T> {
    pub rho: T,
    pub iterations: usize,
    pub terminal_error: T,
    pub control_cost: T,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlResult<T> {
    pub g: Vec<T>,
    pub terminal_error: T,
    /// `||g'||^2_{L^2(0,T)}`.
    pub control_cost: T,
    /// Total CG iterations over all penalty levels.
    pub iterations: usize,
    /// `terminal_error <= epsilon`.
    pub converged: bool,
    pub rho_final: T,
    pub stages: Vec<StageRecord<T>>,
    /// Objective after every accepted CG step, per penalty level.
    pub objective_history: Vec<Vec<T>>,
}

/// The penalized functional `J(g) = |Bg - uT|^2 / 2 + rho |g'|^2 / 2`
/// (zero initial state) and its H^1_0 gradient.
pub struct Objective<'a, T: Scalar> {
    prop: Propagator<T>,
    target: &'a GridFunction<T>,
    pub rho: T,
}

impl<'a, T: Scalar> Objective<'a, T> {
    pub fn new(alpha: T, target: &'a GridFunction<T>, rho: T, scheme: Scheme) -> Result<Self> {
        target.require_space()?;
        let prop = Propagator::new(alpha, target.mesh().clone(), scheme)?;
        Ok(Self { prop, target, rho })
    }

    fn mesh(&self) -> &Arc<GradedMesh<T>> {
        self.prop.mesh()
    }

    fn apply_b(&self, g: &[T]) -> Result<Vec<T>> {
        let zero = vec![T::zero(); self.mesh().len()];
        self.prop.terminal(&zero, g)
    }

    /// `riesz(e(B* r))`: H^1_0 representative of `g -> (Bg, r)`.
    fn adjoint_representative(&self, r: &[T]) -> Result<Vec<T>> {
        let psi = self.prop.adjoint_traces(r)?;
        let e = pairing_density(&psi, self.prop.scheme());
        riesz_h10(&e, self.mesh().dt())
    }

    pub fn value(&self, g: &[T]) -> Result<T> {
        let bg = self.apply_b(g)?;
        Ok(self.value_from(&bg, g))
    }

    fn value_from(&self, bg: &[T], g: &[T]) -> T {
        let mesh = self.mesh();
        let r: Vec<T> = bg.iter().zip(self.target.values()).map(|(&a, &b)| a - b).collect();
        let half = T::of(0.5);
        half * mesh.inner(&r, &r) + half * self.rho * h10_inner(g, g, mesh.dt())
    }

    /// H^1_0 gradient; `<gradient, d>_{H^1_0}` is the directional derivative.
    pub fn gradient(&self, g: &[T]) -> Result<Vec<T>> {
        let bg = self.apply_b(g)?;
        let r: Vec<T> = bg.iter().zip(self.target.values()).map(|(&a, &b)| a - b).collect();
        let rep = self.adjoint_representative(&r)?;
        Ok(rep.iter().zip(g).map(|(&a, &b)| a + self.rho * b).collect())
    }

    /// Linear CG in the H^1_0 inner product from `g`, at most `max_iters`
    /// steps, stopping when the gradient norm falls to `grad_tol` times its
    /// initial value. Returns `(g, iterations, converged, J history)`.
    pub fn minimize(&self, g: Vec<T>, max_iters: usize, grad_tol: T) -> Result<(Vec<T>, usize, bool, Vec<T>)> {
        let dt = self.mesh().dt();
        let mut g = g;
        let mut bg = self.apply_b(&g)?;
        let residual: Vec<T> = bg.iter().zip(self.target.values()).map(|(&a, &b)| a - b).collect();
        let rep = self.adjoint_representative(&residual)?;
        // negative gradient
        let mut r: Vec<T> = rep.iter().zip(&g).map(|(&a, &b)| -(a + self.rho * b)).collect();
        let mut rr = h10_inner(&r, &r, dt);
        let r0 = rr.sqrt();
        let mut history = vec![self.value_from(&bg, &g)];
        if rr == T::zero() {
            return Ok((g, 0, true, history));
        }
        let mut p = r.clone();
        for k in 0..max_iters {
            let bp = self.apply_b(&p)?;
            let hp_rep = self.adjoint_representative(&bp)?;
            let hp: Vec<T> = hp_rep.iter().zip(&p).map(|(&a, &b)| a + self.rho * b).collect();
            let php = h10_inner(&p, &hp, dt);
            if !(php > T::zero()) {
                return Err(Error::LinearSolve(format!("non-positive curvature {php} in CG")));
            }
            let step = rr / php;
            for (gi, &pi) in g.iter_mut().zip(&p) {
                *gi += step * pi;
            }
            for (bi, &pi) in bg.iter_mut().zip(&bp) {
                *bi += step * pi;
            }
            for (ri, &hi) in r.iter_mut().zip(&hp) {
                *ri -= step * hi;
            }
            history.push(self.value_from(&bg, &g));
            let rr_new = h10_inner(&r, &r, dt);
            if rr_new.sqrt() <= grad_tol * r0 || rr_new == T::zero() {
                return Ok((g, k + 1, true, history));
            }
            let beta = rr_new / rr;
            rr = rr_new;
            for (pi, &ri) in p.iter_mut().zip(&r) {
                *pi = ri + beta * *pi;
            }
        }
        Ok((g, max_iters, false, history))
    }
}

/// Penalized least squares with rho continuation: minimize at `rho`, and while
/// the terminal error exceeds `epsilon` divide rho by 10 (warm start) until
/// it would drop below `rho_min`. Requires `u0 = 0`.
pub fn synthesize<T: Scalar>(
    task: &ControlTask<T>,
    mesh: &Arc<GradedMesh<T>>,
    scheme: Scheme,
) -> Result<ControlResult<T>> {
    run_continuation(task, mesh, scheme, true)
}

/// Like [`synthesize`] but walks the whole rho schedule even after the
/// tolerance is met.
pub fn synthesize_full_schedule<T: Scalar>(
    task: &ControlTask<T>,
    mesh: &Arc<GradedMesh<T>>,
    scheme: Scheme,
) -> Result<ControlResult<T>> {
    run_continuation(task, mesh, scheme, false)
}

fn run_continuation<T: Scalar>(
    task: &ControlTask<T>,
    mesh: &Arc<GradedMesh<T>>,
    scheme: Scheme,
    stop_at_epsilon: bool,
) -> Result<ControlResult<T>> {
    task.validate()?;
    task.u0.ensure_mesh(mesh)?;
    task.target.ensure_mesh(mesh)?;
    let scale = task.u0.max_abs();
    if scale > T::zero() {
        return Err(Error::InvalidParameter(
            "synthesize expects a zero initial state; reduce the task first".into(),
        ));
    }
    let dt = mesh.dt();
    let mut g = vec![T::zero(); mesh.steps() + 1];
    let mut level = 0i32;
    let mut rho = task.rho;
    let mut stages = Vec::new();
    let mut objective_history = Vec::new();
    let mut iterations = 0;
    let mut terminal_error;
    let floor = task.rho_min * T::of(1.0 - 1e-6);
    loop {
        let obj = Objective::new(task.alpha, &task.target, rho, scheme)?;
        let (next, its, cg_ok, hist) = obj.minimize(g, task.max_iters, task.grad_tol)?;
        g = next;
        iterations += its;
        let bg = obj.apply_b(&g)?;
        let r: Vec<T> = bg.iter().zip(task.target.values()).map(|(&a, &b)| a - b).collect();
        terminal_error = mesh.inner(&r, &r).sqrt();
        stages.push(StageRecord {
            rho,
            iterations: its,
            terminal_error,
            control_cost: h10_inner(&g, &g, dt),
            converged: cg_ok,
        });
        objective_history.push(hist);
        let done = stop_at_epsilon && terminal_error <= task.epsilon;
        let next_rho = task.rho * T::of(10f64.powi(-(level + 1)));
        if done || next_rho < floor {
            break;
        }
        level += 1;
        rho = next_rho;
    }
    Ok(ControlResult {
        control_cost: h10_inner(&g, &g, dt),
        g,
        terminal_error,
        iterations,
        converged: terminal_error <= task.epsilon,
        rho_final: rho,
        stages,
        objective_history,
    })
}

/// Splits off the free evolution of `u0`: returns `(uT - u_free(T), u_free(T))`.
pub fn reduce_initial<T: Scalar>(
    u0: &GridFunction<T>,
    target: &GridFunction<T>,
    alpha: T,
    mesh: &Arc<GradedMesh<T>>,
    scheme: Scheme,
) -> Result<(GridFunction<T>, GridFunction<T>)> {
    let problem = crate::evolution::ForwardProblem::free(alpha, u0.rebind(mesh.clone())?)?;
    target.require_space()?;
    target.ensure_mesh(mesh)?;
    let prop = Propagator::new(alpha, mesh.clone(), scheme)?;
    let free = GridFunction::space(mesh.clone(), prop.terminal(problem.u0.values(), &problem.control)?)?;
    let shifted = target.lin_comb(T::one(), &free, -T::one())?;
    Ok((shifted, free))
}

/// Control of a boundary-compatible `u0`: reduce, synthesize, and report the
/// terminal error of an independent forward solve with `(u0, g)`.
pub fn control_from<T: Scalar>(
    task: &ControlTask<T>,
    mesh: &Arc<GradedMesh<T>>,
    scheme: Scheme,
) -> Result<ControlResult<T>> {
    let (shifted, _) = reduce_initial(&task.u0, &task.target, task.alpha, mesh, scheme)?;
    let reduced = ControlTask {
        u0: GridFunction::zeros(mesh.clone()),
        target: shifted,
        ..task.clone()
    };
    let mut result = synthesize(&reduced, mesh, scheme)?;
    result.terminal_error = verify_terminal_error(&task.u0, &result.g, &task.target, task.alpha, mesh, scheme)?;
    result.converged = result.terminal_error <= task.epsilon;
    Ok(result)
}

/// `||u(T; u0, g) - uT||` from a fresh forward solve.
pub fn verify_terminal_error<T: Scalar>(
    u0: &GridFunction<T>,
    g: &[T],
    target: &GridFunction<T>,
    alpha: T,
    mesh: &Arc<GradedMesh<T>>,
    scheme: Scheme,
) -> Result<T> {
    let prop = Propagator::new(alpha, mesh.clone(), scheme)?;
    let terminal = prop.terminal(u0.values(), g)?;
    let r: Vec<T> = terminal.iter().zip(target.values()).map(|(&a, &b)| a - b).collect();
    Ok(mesh.inner(&r, &r).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoStageResult<T> {
    pub result: ControlResult<T>,
    /// State at `T/2` after the free stage.
    pub intermediate: Vec<T>,
    /// `max(|u(0, T/2)|, |u(1, T/2)|)`.
    pub intermediate_boundary: T,
    /// Terminal error reported by the second-stage synthesis.
    pub stage_two_error: T,
}

/// Control for initial data without boundary compatibility: evolve freely on
/// `[0, T/2]`, then control from the smoothed state on `[T/2, T]`. The
/// returned control is zero on the first half of the time grid. `M` must be
/// even. Boundary samples of `u0` carry no L^2 mass and are dropped.
pub fn two_stage_control<T: Scalar>(
    task: &ControlTask<T>,
    mesh: &Arc<GradedMesh<T>>,
    scheme: Scheme,
) -> Result<TwoStageResult<T>> {
    task.validate()?;
    task.u0.ensure_mesh(mesh)?;
    task.target.ensure_mesh(mesh)?;
    let steps = mesh.steps();
    if !steps.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "two-stage control needs an even step count, got {steps}"
        )));
    }
    let half_steps = steps / 2;
    let half = mesh.with_horizon(half_steps, mesh.time(half_steps))?;
    let n = mesh.cells();
    let mut u0 = task.u0.values().to_vec();
    u0[0] = T::zero();
    u0[n] = T::zero();

    let prop = Propagator::new(task.alpha, half.clone(), scheme)?;
    let u1 = prop.terminal(&u0, &vec![T::zero(); half_steps + 1])?;
    let intermediate_boundary = u1[0].abs().max(u1[n].abs());

    let stage_two = ControlTask {
        u0: GridFunction::space(half.clone(), u1.clone())?,
        target: task.target.rebind(half.clone())?,
        ..task.clone()
    };
    let second = control_from(&stage_two, &half, scheme)?;

    let mut g = vec![T::zero(); half_steps];
    g.extend_from_slice(&second.g);
    let full_u0 = GridFunction::space(mesh.clone(), u0)?;
    let terminal_error = verify_terminal_error(&full_u0, &g, &task.target, task.alpha, mesh, scheme)?;
    let result = ControlResult {
        control_cost: h10_inner(&g, &g, mesh.dt()),
        g,
        terminal_error,
        converged: terminal_error <= task.epsilon,
        iterations: second.iterations,
        rho_final: second.rho_final,
        stages: second.stages,
        objective_history: second.objective_history,
    };
    Ok(TwoStageResult {
        result,
        intermediate: u1,
        intermediate_boundary,
        stage_two_error: second.terminal_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mesh(n: usize, m: usize, t: f64) -> Arc<GradedMesh<f64>> {
        GradedMesh::build(n, 2.0, m, t).unwrap()
    }

    #[test]
    fn riesz_of_constant() {
        let m = 200;
        let dt = 1.0 / m as f64;
        let g = riesz_h10(&vec![1.0; m + 1], dt).unwrap();
        assert!((g[m / 2] - 0.125).abs() < 1e-3);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[m], 0.0);
        assert!(riesz_h10(&vec![0.0; m + 1], dt).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn riesz_represents_the_l2_pairing() {
        let m = 50;
        let dt = 0.02;
        let psi: Vec<f64> = (0..=m).map(|j| (j as f64 * 0.37).sin()).collect();
        let d: Vec<f64> = (0..=m)
            .map(|j| if j == 0 || j == m { 0.0 } else { (j as f64 * 1.3).cos() })
            .collect();
        let g = riesz_h10(&psi, dt).unwrap();
        let lhs = h10_inner(&g, &d, dt);
        let rhs: f64 = psi.iter().zip(&d).map(|(a, b)| a * b * dt).sum();
        assert!((lhs - rhs).abs() < 1e-10 * rhs.abs().max(1.0));
    }

    #[test]
    fn pairing_is_exact_for_both_schemes() {
        let m = mesh(30, 24, 0.5);
        let g: Vec<f64> = m
            .times()
            .iter()
            .map(|&t| (2.0 * std::f64::consts::PI * t).sin().powi(2))
            .collect();
        let v = GridFunction::from_fn(m.clone(), |x| x * (1.0 - x) * (3.0 * x).cos()).unwrap();
        for scheme in [Scheme::CrankNicolson, Scheme::ImplicitEuler] {
            let prop = Propagator::new(0.5, m.clone(), scheme).unwrap();
            let bg = apply_b(&g, 0.5, &m, scheme).unwrap();
            let lhs = m.inner(bg.values(), v.values());
            let psi = prop.adjoint_traces(v.values()).unwrap();
            let rhs = trace_pairing(&g, &psi, m.dt(), scheme);
            assert!((lhs - rhs).abs() < 1e-12 * lhs.abs(), "{scheme:?}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn zero_data() {
        let m = mesh(20, 10, 1.0);
        let z = vec![0.0; 11];
        assert_eq!(apply_b(&z, 0.5, &m, Scheme::CrankNicolson).unwrap().max_abs(), 0.0);
        let v = GridFunction::from_fn(m.clone(), |x| x * (1.0 - x)).unwrap();
        assert_eq!(duality_gap(&z, &v, 0.5, &m, Scheme::CrankNicolson).unwrap(), 0.0);
        let task = ControlTask {
            alpha: 0.5,
            u0: GridFunction::zeros(m.clone()),
            target: GridFunction::zeros(m.clone()),
            epsilon: 1e-3,
            rho: 1e-2,
            rho_min: 1e-8,
            max_iters: 50,
            grad_tol: 1e-8,
        };
        let r = synthesize(&task, &m, Scheme::CrankNicolson).unwrap();
        assert!(r.g.iter().all(|&v| v == 0.0));
        assert_eq!(r.terminal_error, 0.0);
        assert_eq!(r.iterations, 0);
        assert!(r.converged);
    }

    #[test]
    fn nonzero_initial_state_is_rejected() {
        let m = mesh(20, 10, 1.0);
        let task = ControlTask {
            alpha: 0.5,
            u0: GridFunction::from_fn(m.clone(), |x| x * (1.0 - x)).unwrap(),
            target: GridFunction::zeros(m.clone()),
            epsilon: 1e-3,
            rho: 1e-2,
            rho_min: 1e-8,
            max_iters: 5,
            grad_tol: 1e-8,
        };
        assert!(synthesize(&task, &m, Scheme::CrankNicolson).is_err());
        let bad = ControlTask { rho: -1.0, ..task };
        assert!(bad.validate().is_err());
    }
}
