//! Conservative flux-form discretization of `A u = (x^a u_x)_x`.
//!
//! With face fluxes `F_{i+1/2} = c_{i+1/2} (u_{i+1} - u_i) / h_{i+1/2}` the
//! interior rows read `(A u)_i = (F_{i+1/2} - F_{i-1/2}) / hbar_i`, where
//! `hbar_i` is the dual-cell width. The face coefficient is the harmonic mean
//! of `x^a` over the cell,
//!
//! ```text
//! c_{i+1/2} = (1 - a) h / (x_{i+1}^(1-a) - x_i^(1-a)),
//! ```
//!
//! which makes the flux of `x^(1-a)` (and so of the lifting `1 - x^(1-a)`)
//! exact on every cell, including the one touching the degenerate point.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{
    squared_slopes, weighted_cell_integral, weighted_nodal_integral, FieldKind, GradedMesh, GridFunction,
};
use crate::scalar::Scalar;
use crate::tridiag::{sturm_count, Tridiagonal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Row forced to zero; boundary values are supplied by the caller.
    Dirichlet,
    /// Zero flux through the outer half cell.
    None,
}

#[derive(Debug, Clone)]
pub struct DegenerateOperator<T> {
    alpha: T,
    mesh: Arc<GradedMesh<T>>,
    face_coefficients: Vec<T>,
    bc_left: Boundary,
    bc_right: Boundary,
}

/// Harmonic mean of `x^alpha` over `[a, b]`.
fn face_coefficient<T: Scalar>(alpha: T, a: T, b: T) -> T {
    if alpha == T::zero() {
        return T::one();
    }
    let p = T::one() - alpha;
    // b^p - a^p without cancellation for adjacent nodes; ln(0) = -inf gives b^p.
    let diff = -b.powf(p) * (p * (a / b).ln()).exp_m1();
    p * (b - a) / diff
}

impl<T: Scalar> DegenerateOperator<T> {
    pub fn assemble(alpha: T, mesh: Arc<GradedMesh<T>>, bc_left: Boundary, bc_right: Boundary) -> Result<Self> {
        if !(alpha >= T::zero() && alpha < T::one()) {
            return Err(Error::UnsupportedRegime { alpha: alpha.as_f64() });
        }
        let face_coefficients = (0..mesh.cells())
            .map(|c| face_coefficient(alpha, mesh.x(c), mesh.x(c + 1)))
            .collect();
        Ok(Self {
            alpha,
            mesh,
            face_coefficients,
            bc_left,
            bc_right,
        })
    }

    /// Dirichlet conditions at both ends, the setting of the evolution problems.
    pub fn dirichlet(alpha: T, mesh: Arc<GradedMesh<T>>) -> Result<Self> {
        Self::assemble(alpha, mesh, Boundary::Dirichlet, Boundary::Dirichlet)
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn mesh(&self) -> &Arc<GradedMesh<T>> {
        &self.mesh
    }

    pub fn face_coefficients(&self) -> &[T] {
        &self.face_coefficients
    }

    pub fn boundaries(&self) -> (Boundary, Boundary) {
        (self.bc_left, self.bc_right)
    }

    /// Face fluxes `c (u_{c+1} - u_c) / h_c`, one per cell.
    pub fn fluxes(&self, u: &[T]) -> Vec<T> {
        self.face_coefficients
            .iter()
            .enumerate()
            .map(|(c, &k)| k * (u[c + 1] - u[c]) / self.mesh.width(c))
            .collect()
    }

    pub(crate) fn apply_nodal(&self, u: &[T], out: &mut [T]) {
        let n = self.mesh.cells();
        let flux = self.fluxes(u);
        for i in 1..n {
            out[i] = (flux[i] - flux[i - 1]) / self.mesh.dual_width(i);
        }
        out[0] = match self.bc_left {
            Boundary::Dirichlet => T::zero(),
            Boundary::None => flux[0] / self.mesh.dual_width(0),
        };
        out[n] = match self.bc_right {
            Boundary::Dirichlet => T::zero(),
            Boundary::None => -flux[n - 1] / self.mesh.dual_width(n),
        };
    }

    /// Applies the operator to a space field, or slice by slice to a
    /// space-time field.
    pub fn apply(&self, f: &GridFunction<T>) -> Result<GridFunction<T>> {
        f.ensure_mesh(&self.mesh)?;
        let len = self.mesh.len();
        let mut out = vec![T::zero(); f.values().len()];
        for (src, dst) in f.values().chunks(len).zip(out.chunks_mut(len)) {
            self.apply_nodal(src, dst);
        }
        Ok(GridFunction::from_parts(f.mesh().clone(), out, f.kind()))
    }

    /// Full `(N+1) x (N+1)` tridiagonal rows of the operator.
    pub fn rows(&self) -> Tridiagonal<T> {
        let n = self.mesh.cells();
        let mut lower = vec![T::zero(); n + 1];
        let mut diag = vec![T::zero(); n + 1];
        let mut upper = vec![T::zero(); n + 1];
        for i in 1..n {
            let hb = self.mesh.dual_width(i);
            lower[i] = self.face_coefficients[i - 1] / (self.mesh.width(i - 1) * hb);
            upper[i] = self.face_coefficients[i] / (self.mesh.width(i) * hb);
            diag[i] = -(lower[i] + upper[i]);
        }
        if self.bc_left == Boundary::None {
            upper[0] = self.face_coefficients[0] / (self.mesh.width(0) * self.mesh.dual_width(0));
            diag[0] = -upper[0];
        }
        if self.bc_right == Boundary::None {
            lower[n] = self.face_coefficients[n - 1] / (self.mesh.width(n - 1) * self.mesh.dual_width(n));
            diag[n] = -lower[n];
        }
        Tridiagonal { lower, diag, upper }
    }

    /// The `(N-1) x (N-1)` block acting on interior nodes with homogeneous
    /// Dirichlet data.
    pub fn interior_block(&self) -> Tridiagonal<T> {
        let full = self.rows();
        let n = self.mesh.cells();
        let mut block = Tridiagonal {
            lower: full.lower[1..n].to_vec(),
            diag: full.diag[1..n].to_vec(),
            upper: full.upper[1..n].to_vec(),
        };
        block.lower[0] = T::zero();
        let last = block.len() - 1;
        block.upper[last] = T::zero();
        block
    }

    /// First-face flux, the discrete limit of `x^a f_x` as `x -> 0+`.
    pub fn conormal_trace_at_zero(&self, f: &GridFunction<T>) -> Result<T> {
        f.require_space()?;
        f.ensure_mesh(&self.mesh)?;
        Ok(self.trace_at_zero(f.values()))
    }

    pub(crate) fn trace_at_zero(&self, u: &[T]) -> T {
        self.face_coefficients[0] * (u[1] - u[0]) / self.mesh.width(0)
    }

    /// Last-face flux, the discrete `x^a f_x` at `x = 1`.
    pub(crate) fn trace_at_one(&self, u: &[T]) -> T {
        let n = self.mesh.cells();
        self.face_coefficients[n - 1] * (u[n] - u[n - 1]) / self.mesh.width(n - 1)
    }

    /// The `k` smallest eigenpairs of `-A` (Dirichlet at both ends), with
    /// eigenfunctions normalized in the discrete L2 norm and positive slope at
    /// `x = 0`.
    ///
    /// Eigenvalues are bracketed by Sturm-count bisection on the symmetrized
    /// tridiagonal form; eigenvectors follow from shifted inverse iteration.
    pub fn eigen_smallest(&self, k: usize) -> Result<Vec<(T, GridFunction<T>)>> {
        if self.bc_left != Boundary::Dirichlet || self.bc_right != Boundary::Dirichlet {
            return Err(Error::InvalidParameter(
                "eigen_smallest needs Dirichlet conditions at both ends".into(),
            ));
        }
        let n = self.mesh.cells();
        if k == 0 || k > n - 1 {
            return Err(Error::InvalidParameter(format!("k = {k} must lie in 1..={}", n - 1)));
        }
        // S = D^{-1/2} K D^{-1/2} with K = -hbar * A on the interior block.
        let m = n - 1;
        let sqrt_hb: Vec<T> = (1..n).map(|i| self.mesh.dual_width(i).sqrt()).collect();
        let diag: Vec<T> = (1..n)
            .map(|i| {
                let kd = self.face_coefficients[i - 1] / self.mesh.width(i - 1)
                    + self.face_coefficients[i] / self.mesh.width(i);
                kd / self.mesh.dual_width(i)
            })
            .collect();
        let off: Vec<T> = (1..n - 1)
            .map(|i| -self.face_coefficients[i] / self.mesh.width(i) / (sqrt_hb[i - 1] * sqrt_hb[i]))
            .collect();

        let radius = |i: usize| {
            let mut r = T::zero();
            if i > 0 {
                r += off[i - 1].abs();
            }
            if i + 1 < m {
                r += off[i].abs();
            }
            r
        };
        let lo0 = (0..m).map(|i| diag[i] - radius(i)).fold(T::infinity(), T::min);
        let hi0 = (0..m).map(|i| diag[i] + radius(i)).fold(T::neg_infinity(), T::max);
        let norm = hi0.abs().max(lo0.abs());

        let sym = Tridiagonal {
            lower: std::iter::once(T::zero()).chain(off.iter().copied()).collect(),
            diag: diag.clone(),
            upper: off.iter().copied().chain(std::iter::once(T::zero())).collect(),
        };

        let mut found: Vec<Vec<T>> = Vec::with_capacity(k);
        let mut pairs = Vec::with_capacity(k);
        for idx in 0..k {
            let (mut lo, mut hi) = (lo0, hi0);
            for _ in 0..300 {
                let mid = (lo + hi) * T::of(0.5);
                if mid <= lo || mid >= hi {
                    break;
                }
                if sturm_count(&diag, &off, mid) > idx {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let lambda = (lo + hi) * T::of(0.5);

            // Shift slightly below so the factorization stays regular.
            let shift = lambda - (norm * T::epsilon() * T::of(64.0)).max(lambda.abs() * T::of(1e-9));
            let lu = sym.shifted(-shift, T::one()).factor()?;
            let mut z: Vec<T> = (0..m)
                .map(|i| T::one() + T::of(0.1) * (T::of_usize(i + 1) * T::of(0.7)).sin())
                .collect();
            let tol = norm * T::epsilon() * T::of(1e3);
            let mut converged = false;
            let mut rayleigh = lambda;
            for _ in 0..100 {
                for prev in &found {
                    let d: T = prev.iter().zip(&z).map(|(&p, &q)| p * q).sum();
                    for (zi, &pi) in z.iter_mut().zip(prev) {
                        *zi -= d * pi;
                    }
                }
                lu.solve_in_place(&mut z)?;
                let nz = z.iter().map(|&v| v * v).sum::<T>().sqrt();
                if !(nz > T::zero()) {
                    break;
                }
                z.iter_mut().for_each(|v| *v /= nz);
                let sz = sym.mul_vec(&z);
                rayleigh = sz.iter().zip(&z).map(|(&p, &q)| p * q).sum();
                let res = sz
                    .iter()
                    .zip(&z)
                    .map(|(&p, &q)| (p - rayleigh * q) * (p - rayleigh * q))
                    .sum::<T>()
                    .sqrt();
                if res <= tol {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(Error::EigenNonConvergence(format!(
                    "eigenpair {idx} residual above tolerance"
                )));
            }
            let mut u = vec![T::zero(); n + 1];
            for i in 0..m {
                u[i + 1] = z[i] / sqrt_hb[i];
            }
            let scale = u.iter().fold(T::zero(), |a, v| a.max(v.abs()));
            let lead = u
                .iter()
                .copied()
                .find(|v| v.abs() > scale * T::of(1e-6))
                .unwrap_or(T::one());
            if lead < T::zero() {
                u.iter_mut().for_each(|v| *v = -*v);
                z.iter_mut().for_each(|v| *v = -*v);
            }
            found.push(z);
            pairs.push((
                rayleigh,
                GridFunction::from_parts(self.mesh.clone(), u, FieldKind::Space),
            ));
        }
        Ok(pairs)
    }
}

/// Margins of the pointwise Hardy-type bounds and the ratio of the weighted
/// integral bound, for a field in the discrete domain of the operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HardyReport<T> {
    /// `min_faces (|u|_D sqrt(x) - |x^a u_x|)`.
    pub flux_bound_margin: T,
    /// `min_nodes ((2/(3-2a)) |u|_D sqrt(x) - |x^(a-1) u|)`.
    pub solution_bound_margin: T,
    /// `(int x^(2a+b-4) u^2 + int x^(2a+b-2) u_x^2) / |u|_D^2`.
    pub integral_bound_ratio: T,
    /// `|u|_D = ||u|| + ||A u||`.
    pub graph_norm: T,
    /// The constant `(1 + (2/(3-2a))^2) / b` the pointwise bounds imply.
    pub integral_constant: T,
}

pub fn hardy_check<T: Scalar>(
    f: &GridFunction<T>,
    alpha: T,
    beta: T,
    op: &DegenerateOperator<T>,
) -> Result<HardyReport<T>> {
    f.require_space()?;
    f.ensure_mesh(op.mesh())?;
    if alpha != op.alpha() {
        return Err(Error::InvalidParameter(format!(
            "alpha {alpha} differs from the operator's {}",
            op.alpha()
        )));
    }
    if !(beta > T::zero()) {
        return Err(Error::InvalidParameter(format!("beta = {beta} must be positive")));
    }
    let mesh = op.mesh();
    let u = f.values();
    let scale = f.max_abs();
    if u[0].abs() > scale * T::epsilon() * T::of(16.0) {
        return Err(Error::HypothesisViolation {
            what: "field does not vanish at x = 0".into(),
            value: u[0].as_f64(),
        });
    }
    let af = op.apply(f)?;
    let graph = f.l2_norm()? + af.l2_norm()?;
    let trace = op.trace_at_zero(u);
    let trace_bound = graph * mesh.x(1).sqrt();
    if trace.abs() > trace_bound + scale * T::epsilon() * T::of(16.0) {
        return Err(Error::HypothesisViolation {
            what: format!(
                "conormal trace at x = 0 does not vanish (bound {:e})",
                trace_bound.as_f64()
            ),
            value: trace.as_f64(),
        });
    }

    let flux = op.fluxes(u);
    let flux_bound_margin = flux
        .iter()
        .enumerate()
        .map(|(c, &fl)| graph * mesh.midpoint(c).sqrt() - fl.abs())
        .fold(T::infinity(), T::min);

    let two = T::of(2.0);
    let k = two / (T::of(3.0) - two * alpha);
    let solution_bound_margin = (1..mesh.len())
        .map(|i| {
            let x = mesh.x(i);
            k * graph * x.sqrt() - (x.powf(alpha - T::one()) * u[i]).abs()
        })
        .fold(T::infinity(), T::min);

    let sq: Vec<T> = u.iter().map(|&v| v * v).collect();
    let lhs = weighted_nodal_integral(mesh, &sq, two * alpha + beta - T::of(4.0))?
        + weighted_cell_integral(mesh, &squared_slopes(mesh, u), two * alpha + beta - two)?;
    let rhs = graph * graph;
    let integral_bound_ratio = if rhs > T::zero() { lhs / rhs } else { T::zero() };

    Ok(HardyReport {
        flux_bound_margin,
        solution_bound_margin,
        integral_bound_ratio,
        graph_norm: graph,
        integral_constant: (T::one() + k * k) / beta,
    })
}
