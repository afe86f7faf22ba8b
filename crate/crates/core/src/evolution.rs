//! Forward (boundary-controlled) and backward (adjoint) evolution.
//!
//! The forward problem `u_t = (x^a u_x)_x`, `u(0,t) = g(t)`, `u(1,t) = 0` is
//! marched through the homogeneous-boundary unknown `y = u - L g` with the
//! lifting `L = 1 - x^(1-a)`, which solves
//! `y_t - (x^a y_x)_x = -L g_t`. The control derivative enters each step as
//! the step increment `g^{n+1} - g^n`, which is the difference quotient
//! centered at the half step.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{squared_slopes, weighted_cell_integral, FieldKind, GradedMesh, GridFunction};
use crate::operator::DegenerateOperator;
use crate::scalar::Scalar;
use crate::tridiag::{Tridiagonal, TridiagonalLu};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    ImplicitEuler,
    #[default]
    CrankNicolson,
}

impl Scheme {
    fn theta<T: Scalar>(self) -> T {
        match self {
            Scheme::ImplicitEuler => T::one(),
            Scheme::CrankNicolson => T::of(0.5),
        }
    }
}

/// Nodal samples of the lifting `1 - x^(1-a)`: equal to 1 at `x = 0`, 0 at
/// `x = 1`, and annihilated by the operator.
pub fn lifting_function<T: Scalar>(alpha: T, mesh: &Arc<GradedMesh<T>>) -> Result<GridFunction<T>> {
    if !(alpha >= T::zero() && alpha < T::one()) {
        return Err(Error::UnsupportedRegime { alpha: alpha.as_f64() });
    }
    let p = T::one() - alpha;
    let values = mesh
        .nodes()
        .iter()
        .map(|&x| {
            if alpha == T::zero() {
                T::one() - x
            } else {
                T::one() - x.powf(p)
            }
        })
        .collect();
    Ok(GridFunction::from_parts(mesh.clone(), values, FieldKind::Space))
}

fn vanishes<T: Scalar>(v: T, scale: T) -> bool {
    v.abs() <= scale * T::epsilon() * T::of(16.0)
}

/// Data of the boundary-controlled problem: initial state in `H^1_{a,0}` and a
/// control sampled on the time nodes with `g(0) = g(T) = 0`.
#[derive(Debug, Clone)]
pub struct ForwardProblem<T> {
    pub alpha: T,
    pub u0: GridFunction<T>,
    pub control: Vec<T>,
}

impl<T: Scalar> ForwardProblem<T> {
    pub fn new(alpha: T, u0: GridFunction<T>, control: Vec<T>) -> Result<Self> {
        let p = Self { alpha, u0, control };
        p.validate()?;
        Ok(p)
    }

    /// Zero control.
    pub fn free(alpha: T, u0: GridFunction<T>) -> Result<Self> {
        let m = u0.mesh().steps();
        Self::new(alpha, u0, vec![T::zero(); m + 1])
    }

    pub fn validate(&self) -> Result<()> {
        self.u0.require_space()?;
        let mesh = self.u0.mesh();
        let u = self.u0.values();
        let scale = self.u0.max_abs();
        if !vanishes(u[0], scale) || !vanishes(u[mesh.cells()], scale) {
            return Err(Error::BoundaryCondition(format!(
                "initial state must vanish at both ends (u0(0) = {}, u0(1) = {})",
                u[0],
                u[mesh.cells()]
            )));
        }
        check_control(&self.control, mesh.steps())
    }
}

pub(crate) fn check_control<T: Scalar>(g: &[T], steps: usize) -> Result<()> {
    if g.len() != steps + 1 {
        return Err(Error::MeshMismatch(format!(
            "control has {} samples for {} time nodes",
            g.len(),
            steps + 1
        )));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite control sample".into()));
    }
    let scale = g.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    if !vanishes(g[0], scale) || !vanishes(g[steps], scale) {
        return Err(Error::BoundaryCondition(format!(
            "control must vanish at t = 0 and t = T (g(0) = {}, g(T) = {})",
            g[0], g[steps]
        )));
    }
    Ok(())
}

/// Final data of the backward problem `v_t + (x^a v_x)_x = 0`, `v(T) = v`.
#[derive(Debug, Clone)]
pub struct AdjointProblem<T> {
    pub alpha: T,
    pub final_state: GridFunction<T>,
}

impl<T: Scalar> AdjointProblem<T> {
    pub fn new(alpha: T, final_state: GridFunction<T>) -> Result<Self> {
        final_state.require_space()?;
        let n = final_state.mesh().cells();
        let v = final_state.values();
        let scale = final_state.max_abs();
        if !vanishes(v[0], scale) || !vanishes(v[n], scale) {
            return Err(Error::BoundaryCondition("final data must vanish at both ends".into()));
        }
        Ok(Self { alpha, final_state })
    }
}

/// A computed space-time solution with its boundary flux and energy record.
#[derive(Debug, Clone)]
pub struct Trajectory<T> {
    pub states: GridFunction<T>,
    pub terminal: GridFunction<T>,
    /// `(x^a u_x)(0, t_j)` for every time node.
    pub conormal_trace: Vec<T>,
    /// `||u(t_j)||^2` for every time node.
    pub l2_sq: Vec<T>,
    /// `int_0^{t_j} int x^a u_x^2` (trapezoidal in time).
    pub h1_cumulative: Vec<T>,
}

impl<T: Scalar> Trajectory<T> {
    fn from_states(op: &DegenerateOperator<T>, mesh: &Arc<GradedMesh<T>>, values: Vec<T>) -> Result<Self> {
        let len = mesh.len();
        let steps = mesh.steps();
        let dt = mesh.dt();
        let mut conormal_trace = Vec::with_capacity(steps + 1);
        let mut l2_sq = Vec::with_capacity(steps + 1);
        let mut h1 = Vec::with_capacity(steps + 1);
        for slice in values.chunks(len) {
            conormal_trace.push(op.trace_at_zero(slice));
            l2_sq.push(mesh.inner(slice, slice));
            h1.push(weighted_cell_integral(mesh, &squared_slopes(mesh, slice), op.alpha())?);
        }
        let mut h1_cumulative = vec![T::zero(); steps + 1];
        for j in 1..=steps {
            h1_cumulative[j] = h1_cumulative[j - 1] + dt * T::of(0.5) * (h1[j - 1] + h1[j]);
        }
        let terminal = values[steps * len..].to_vec();
        Ok(Self {
            states: GridFunction::from_parts(mesh.clone(), values, FieldKind::SpaceTime),
            terminal: GridFunction::from_parts(mesh.clone(), terminal, FieldKind::Space),
            conormal_trace,
            l2_sq,
            h1_cumulative,
        })
    }
}

/// Reusable time stepper for one `(alpha, mesh, scheme)` triple.
#[derive(Debug, Clone)]
pub struct Propagator<T> {
    op: DegenerateOperator<T>,
    mesh: Arc<GradedMesh<T>>,
    scheme: Scheme,
    block: Tridiagonal<T>,
    implicit: TridiagonalLu<T>,
    lifting: Vec<T>,
}

impl<T: Scalar> Propagator<T> {
    pub fn new(alpha: T, mesh: Arc<GradedMesh<T>>, scheme: Scheme) -> Result<Self> {
        let op = DegenerateOperator::dirichlet(alpha, mesh.clone())?;
        let block = op.interior_block();
        let theta: T = scheme.theta();
        let implicit = block.shifted(T::one(), -theta * mesh.dt()).factor()?;
        let lifting = lifting_function(alpha, &mesh)?.into_values();
        Ok(Self {
            op,
            mesh,
            scheme,
            block,
            implicit,
            lifting,
        })
    }

    pub fn operator(&self) -> &DegenerateOperator<T> {
        &self.op
    }

    pub fn mesh(&self) -> &Arc<GradedMesh<T>> {
        &self.mesh
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// Marches `(u0, g)` forward and hands every time slice of `u` to `visit`.
    pub fn march(&self, u0: &[T], g: &[T], mut visit: impl FnMut(usize, &[T])) -> Result<()> {
        let n = self.mesh.cells();
        let steps = self.mesh.steps();
        check_control(g, steps)?;
        if u0.len() != n + 1 {
            return Err(Error::MeshMismatch("initial state length".into()));
        }
        let dt = self.mesh.dt();
        let theta: T = self.scheme.theta();
        let explicit = (T::one() - theta) * dt;

        let mut y: Vec<T> = u0[1..n].to_vec();
        let mut u = vec![T::zero(); n + 1];
        let assemble = |y: &[T], gj: T, u: &mut [T]| {
            u[0] = gj;
            for i in 1..n {
                u[i] = y[i - 1] + self.lifting[i] * gj;
            }
            u[n] = T::zero();
        };
        assemble(&y, g[0], &mut u);
        visit(0, &u);
        for step in 0..steps {
            let dg = g[step + 1] - g[step];
            let mut rhs = if explicit > T::zero() {
                let ay = self.block.mul_vec(&y);
                y.iter().zip(&ay).map(|(&a, &b)| a + explicit * b).collect()
            } else {
                y.clone()
            };
            if dg != T::zero() {
                for (i, r) in rhs.iter_mut().enumerate() {
                    *r -= self.lifting[i + 1] * dg;
                }
            }
            self.implicit.solve_in_place(&mut rhs)?;
            y = rhs;
            assemble(&y, g[step + 1], &mut u);
            visit(step + 1, &u);
        }
        Ok(())
    }

    /// Terminal state `u(T)` only.
    pub fn terminal(&self, u0: &[T], g: &[T]) -> Result<Vec<T>> {
        let steps = self.mesh.steps();
        let mut out = Vec::new();
        self.march(u0, g, |j, u| {
            if j == steps {
                out = u.to_vec();
            }
        })?;
        Ok(out)
    }

    pub fn forward(&self, u0: &[T], g: &[T]) -> Result<Trajectory<T>> {
        let len = self.mesh.len();
        let mut values = Vec::with_capacity(len * (self.mesh.steps() + 1));
        self.march(u0, g, |_, u| values.extend_from_slice(u))?;
        Trajectory::from_states(&self.op, &self.mesh, values)
    }

    /// Backward solve from final data `v` (boundary values ignored), obtained
    /// by marching forward in `T - t` and reversing.
    pub fn adjoint(&self, v: &[T]) -> Result<Trajectory<T>> {
        let len = self.mesh.len();
        let steps = self.mesh.steps();
        let mut data = v.to_vec();
        data[0] = T::zero();
        data[len - 1] = T::zero();
        let zero = vec![T::zero(); steps + 1];
        let mut slices: Vec<Vec<T>> = Vec::with_capacity(steps + 1);
        self.march(&data, &zero, |_, u| slices.push(u.to_vec()))?;
        let values = slices.into_iter().rev().flatten().collect();
        Trajectory::from_states(&self.op, &self.mesh, values)
    }

    /// Conormal traces `(x^a v_x)(0, t_j)` of the backward solution.
    pub fn adjoint_traces(&self, v: &[T]) -> Result<Vec<T>> {
        let len = self.mesh.len();
        let steps = self.mesh.steps();
        let mut data = v.to_vec();
        data[0] = T::zero();
        data[len - 1] = T::zero();
        let zero = vec![T::zero(); steps + 1];
        let mut traces = vec![T::zero(); steps + 1];
        self.march(&data, &zero, |j, u| traces[steps - j] = self.op.trace_at_zero(u))?;
        Ok(traces)
    }
}

pub fn solve_forward<T: Scalar>(
    p: &ForwardProblem<T>,
    mesh: &Arc<GradedMesh<T>>,
    scheme: Scheme,
) -> Result<Trajectory<T>> {
    p.validate()?;
    p.u0.ensure_mesh(mesh)?;
    Propagator::new(p.alpha, mesh.clone(), scheme)?.forward(p.u0.values(), &p.control)
}

pub fn solve_adjoint<T: Scalar>(
    p: &AdjointProblem<T>,
    mesh: &Arc<GradedMesh<T>>,
    scheme: Scheme,
) -> Result<Trajectory<T>> {
    p.final_state.ensure_mesh(mesh)?;
    Propagator::new(p.alpha, mesh.clone(), scheme)?.adjoint(p.final_state.values())
}

/// Ingredients of the energy estimate: the solution side and the data side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyReport<T> {
    pub sup_l2_sq: T,
    pub h1_alpha_time_integral: T,
    /// `int |g'|^2 dt + ||u0||^2` (control measured in the H^1_0 seminorm).
    pub data_norm_sq: T,
}

impl<T: Scalar> EnergyReport<T> {
    /// `(sup_l2_sq + h1) / data`, or `None` for zero data.
    pub fn ratio(&self) -> Option<T> {
        (self.data_norm_sq > T::zero()).then(|| (self.sup_l2_sq + self.h1_alpha_time_integral) / self.data_norm_sq)
    }
}

/// Discrete `||g'||^2_{L^2(0,T)}` from forward differences.
pub fn control_seminorm_sq<T: Scalar>(g: &[T], dt: T) -> T {
    g.windows(2)
        .map(|w| {
            let d = (w[1] - w[0]) / dt;
            d * d * dt
        })
        .sum()
}

pub fn energy_report<T: Scalar>(tr: &Trajectory<T>, p: &ForwardProblem<T>) -> Result<EnergyReport<T>> {
    let mesh = tr.states.mesh();
    p.u0.ensure_mesh(mesh)?;
    let sup_l2_sq = tr.l2_sq.iter().fold(T::zero(), |m, &v| m.max(v));
    let h1_alpha_time_integral = *tr.h1_cumulative.last().unwrap_or(&T::zero());
    let data_norm_sq = control_seminorm_sq(&p.control, mesh.dt()) + p.u0.inner(&p.u0)?;
    Ok(EnergyReport {
        sup_l2_sq,
        h1_alpha_time_integral,
        data_norm_sq,
    })
}
