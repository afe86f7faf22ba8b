//! Graded space-time meshes, nodal fields and singular-weight quadrature.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::operator::DegenerateOperator;
use crate::scalar::Scalar;

/// Power-graded grid `x_i = (i/N)^gamma` on `[0,1]` together with the uniform
/// time grid `t_j = j T / M`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradedMesh<T> {
    nodes: Vec<T>,
    grading: T,
    steps: usize,
    horizon: T,
}

impl<T: Scalar> GradedMesh<T> {
    /// Builds the mesh. Requires `N >= 4`, `M >= 4`, `T > 0` and `gamma >= 1`.
    pub fn build(cells: usize, grading: T, steps: usize, horizon: T) -> Result<Arc<Self>> {
        if cells < 4 {
            return Err(Error::InvalidParameter(format!("N = {cells} must be at least 4")));
        }
        if steps < 4 {
            return Err(Error::InvalidParameter(format!("M = {steps} must be at least 4")));
        }
        if !(horizon > T::zero()) || !horizon.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "horizon T = {horizon} must be positive"
            )));
        }
        if !(grading >= T::one()) || !grading.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "grading exponent {grading} must be >= 1"
            )));
        }
        let n = T::of_usize(cells);
        let nodes = (0..=cells)
            .map(|i| {
                let r = T::of_usize(i) / n;
                if grading == T::one() {
                    r
                } else {
                    r.powf(grading)
                }
            })
            .collect();
        Ok(Arc::new(Self {
            nodes,
            grading,
            steps,
            horizon,
        }))
    }

    /// Same spatial nodes, different time grid.
    pub fn with_horizon(&self, steps: usize, horizon: T) -> Result<Arc<Self>> {
        let mut mesh = Self::build(self.cells(), self.grading, steps, horizon)?;
        Arc::make_mut(&mut mesh).nodes = self.nodes.clone();
        Ok(mesh)
    }

    /// Number of cells `N`.
    pub fn cells(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn x(&self, i: usize) -> T {
        self.nodes[i]
    }

    pub fn grading(&self) -> T {
        self.grading
    }

    /// Width of cell `[x_i, x_{i+1}]`.
    pub fn width(&self, i: usize) -> T {
        self.nodes[i + 1] - self.nodes[i]
    }

    pub fn midpoint(&self, i: usize) -> T {
        (self.nodes[i] + self.nodes[i + 1]) * T::of(0.5)
    }

    /// Dual-cell width around node `i` (half cells at the two ends). These are
    /// the lumped L2 node weights; summing them gives exactly 1.
    pub fn dual_width(&self, i: usize) -> T {
        let half = T::of(0.5);
        let n = self.cells();
        if i == 0 {
            self.width(0) * half
        } else if i == n {
            self.width(n - 1) * half
        } else {
            (self.width(i - 1) + self.width(i)) * half
        }
    }

    pub fn dual_widths(&self) -> Vec<T> {
        (0..self.len()).map(|i| self.dual_width(i)).collect()
    }

    pub fn min_width(&self) -> T {
        (0..self.cells()).map(|i| self.width(i)).fold(T::infinity(), T::min)
    }

    pub fn max_width(&self) -> T {
        (0..self.cells()).map(|i| self.width(i)).fold(T::zero(), T::max)
    }

    /// Number of time steps `M`.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn horizon(&self) -> T {
        self.horizon
    }

    pub fn dt(&self) -> T {
        self.horizon / T::of_usize(self.steps)
    }

    pub fn time(&self, j: usize) -> T {
        if j == self.steps {
            self.horizon
        } else {
            T::of_usize(j) * self.horizon / T::of_usize(self.steps)
        }
    }

    pub fn times(&self) -> Vec<T> {
        (0..=self.steps).map(|j| self.time(j)).collect()
    }

    pub fn same_space(&self, other: &Self) -> bool {
        self.nodes == other.nodes
    }

    pub fn same_space_time(&self, other: &Self) -> bool {
        self.same_space(other) && self.steps == other.steps && self.horizon == other.horizon
    }

    /// L2 inner product of two nodal vectors under the dual-cell weights.
    pub fn inner(&self, a: &[T], b: &[T]) -> T {
        a.iter()
            .zip(b)
            .enumerate()
            .map(|(i, (&p, &q))| self.dual_width(i) * p * q)
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Space,
    SpaceTime,
}

/// Nodal samples on a mesh: one value per space node, or one per space-time
/// node stored time-major (`values[j * (N+1) + i]`).
#[derive(Debug, Clone)]
pub struct GridFunction<T> {
    mesh: Arc<GradedMesh<T>>,
    values: Vec<T>,
    kind: FieldKind,
}

impl<T: Scalar> GridFunction<T> {
    pub fn space(mesh: Arc<GradedMesh<T>>, values: Vec<T>) -> Result<Self> {
        Self::checked(mesh, values, FieldKind::Space)
    }

    pub fn space_time(mesh: Arc<GradedMesh<T>>, values: Vec<T>) -> Result<Self> {
        Self::checked(mesh, values, FieldKind::SpaceTime)
    }

    fn checked(mesh: Arc<GradedMesh<T>>, values: Vec<T>, kind: FieldKind) -> Result<Self> {
        let expected = match kind {
            FieldKind::Space => mesh.len(),
            FieldKind::SpaceTime => mesh.len() * (mesh.steps() + 1),
        };
        if values.len() != expected {
            return Err(Error::MeshMismatch(format!(
                "{} values for {expected} nodes",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite value at index {pos}")));
        }
        Ok(Self { mesh, values, kind })
    }

    pub(crate) fn from_parts(mesh: Arc<GradedMesh<T>>, values: Vec<T>, kind: FieldKind) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self { mesh, values, kind }
    }

    pub fn zeros(mesh: Arc<GradedMesh<T>>) -> Self {
        let n = mesh.len();
        Self::from_parts(mesh, vec![T::zero(); n], FieldKind::Space)
    }

    pub fn zeros_space_time(mesh: Arc<GradedMesh<T>>) -> Self {
        let n = mesh.len() * (mesh.steps() + 1);
        Self::from_parts(mesh, vec![T::zero(); n], FieldKind::SpaceTime)
    }

    pub fn from_fn(mesh: Arc<GradedMesh<T>>, f: impl Fn(T) -> T) -> Result<Self> {
        let values = mesh.nodes().iter().map(|&x| f(x)).collect();
        Self::space(mesh, values)
    }

    pub fn from_space_time_fn(mesh: Arc<GradedMesh<T>>, f: impl Fn(T, T) -> T) -> Result<Self> {
        let mut values = Vec::with_capacity(mesh.len() * (mesh.steps() + 1));
        for j in 0..=mesh.steps() {
            let t = mesh.time(j);
            values.extend(mesh.nodes().iter().map(|&x| f(x, t)));
        }
        Self::space_time(mesh, values)
    }

    /// Stacks space-only slices (one per time node) into a space-time field.
    pub fn from_slices(mesh: Arc<GradedMesh<T>>, slices: &[Vec<T>]) -> Result<Self> {
        if slices.len() != mesh.steps() + 1 {
            return Err(Error::MeshMismatch(format!(
                "{} time slices for {} time nodes",
                slices.len(),
                mesh.steps() + 1
            )));
        }
        let values = slices.iter().flat_map(|s| s.iter().copied()).collect();
        Self::space_time(mesh, values)
    }

    pub fn mesh(&self) -> &Arc<GradedMesh<T>> {
        &self.mesh
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    /// Space slice at time node `j`; for a space-only field `j` is ignored.
    pub fn slice(&self, j: usize) -> &[T] {
        match self.kind {
            FieldKind::Space => &self.values,
            FieldKind::SpaceTime => {
                let n = self.mesh.len();
                &self.values[j * n..(j + 1) * n]
            }
        }
    }

    pub fn time_slice(&self, j: usize) -> GridFunction<T> {
        Self::from_parts(self.mesh.clone(), self.slice(j).to_vec(), FieldKind::Space)
    }

    pub fn require_space(&self) -> Result<()> {
        match self.kind {
            FieldKind::Space => Ok(()),
            FieldKind::SpaceTime => Err(Error::InvalidParameter("expected a space-only field".into())),
        }
    }

    pub fn require_space_time(&self) -> Result<()> {
        match self.kind {
            FieldKind::SpaceTime => Ok(()),
            FieldKind::Space => Err(Error::InvalidParameter("expected a space-time field".into())),
        }
    }

    /// Checks that `self` lives on the same grid as `mesh` (spatial nodes for
    /// space fields; nodes and time grid for space-time fields).
    pub fn ensure_mesh(&self, mesh: &GradedMesh<T>) -> Result<()> {
        let ok = std::ptr::eq(Arc::as_ptr(&self.mesh), mesh)
            || match self.kind {
                FieldKind::Space => self.mesh.same_space(mesh),
                FieldKind::SpaceTime => self.mesh.same_space_time(mesh),
            };
        if ok {
            Ok(())
        } else {
            Err(Error::MeshMismatch("field defined on a different mesh".into()))
        }
    }

    /// Rebinds a space-only field to another mesh with the same spatial nodes.
    pub fn rebind(&self, mesh: Arc<GradedMesh<T>>) -> Result<Self> {
        self.require_space()?;
        if !self.mesh.same_space(&mesh) {
            return Err(Error::MeshMismatch("spatial nodes differ".into()));
        }
        Ok(Self::from_parts(mesh, self.values.clone(), FieldKind::Space))
    }

    /// `a * self + b * other`.
    pub fn lin_comb(&self, a: T, other: &Self, b: T) -> Result<Self> {
        if self.kind != other.kind || self.values.len() != other.values.len() {
            return Err(Error::MeshMismatch("fields of different shape".into()));
        }
        other.ensure_mesh(&self.mesh)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&p, &q)| a * p + b * q)
            .collect();
        Ok(Self::from_parts(self.mesh.clone(), values, self.kind))
    }

    pub fn scaled(&self, a: T) -> Self {
        let values = self.values.iter().map(|&v| a * v).collect();
        Self::from_parts(self.mesh.clone(), values, self.kind)
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Discrete L2(0,1) inner product of two space fields.
    pub fn inner(&self, other: &Self) -> Result<T> {
        self.require_space()?;
        other.require_space()?;
        other.ensure_mesh(&self.mesh)?;
        Ok(self.mesh.inner(&self.values, &other.values))
    }

    pub fn l2_norm(&self) -> Result<T> {
        Ok(self.inner(self)?.sqrt())
    }
}

/// Approximates `int_0^1 x^sigma f(x) dx` by the cell-midpoint weight times the
/// trapezoidal cell average of `f`.
pub fn weighted_integral<T: Scalar>(f: &GridFunction<T>, sigma: T) -> Result<T> {
    f.require_space()?;
    weighted_nodal_integral(f.mesh(), f.values(), sigma)
}

pub(crate) fn weighted_nodal_integral<T: Scalar>(mesh: &GradedMesh<T>, f: &[T], sigma: T) -> Result<T> {
    if sigma <= -T::one() {
        let scale = f.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        if f[0].abs() > scale * T::epsilon() * T::of(16.0) {
            return Err(Error::QuadratureDivergence {
                sigma: sigma.as_f64(),
                detail: format!("integrand does not vanish at x = 0 (f(0) = {})", f[0]),
            });
        }
    }
    let half = T::of(0.5);
    let total: T = (0..mesh.cells())
        .map(|c| mesh.midpoint(c).powf(sigma) * (f[c] + f[c + 1]) * half * mesh.width(c))
        .sum();
    finite_or_diverged(total, sigma)
}

/// `sum_c mid_c^sigma * g_c * h_c` for a cellwise-constant `g`.
pub(crate) fn weighted_cell_integral<T: Scalar>(mesh: &GradedMesh<T>, g: &[T], sigma: T) -> Result<T> {
    let total: T = g
        .iter()
        .enumerate()
        .map(|(c, &v)| mesh.midpoint(c).powf(sigma) * v * mesh.width(c))
        .sum();
    finite_or_diverged(total, sigma)
}

fn finite_or_diverged<T: Scalar>(total: T, sigma: T) -> Result<T> {
    if total.is_finite() {
        Ok(total)
    } else {
        Err(Error::QuadratureDivergence {
            sigma: sigma.as_f64(),
            detail: "non-finite result".into(),
        })
    }
}

/// Second-order nodal derivative on the nonuniform grid (three-point formulas,
/// one-sided at the two ends).
pub fn nodal_gradient<T: Scalar>(mesh: &GradedMesh<T>, u: &[T]) -> Vec<T> {
    let n = mesh.cells();
    let mut d = vec![T::zero(); n + 1];
    for i in 1..n {
        let hm = mesh.width(i - 1);
        let hp = mesh.width(i);
        d[i] = (hm * hm * u[i + 1] - hp * hp * u[i - 1] + (hp * hp - hm * hm) * u[i]) / (hp * hm * (hp + hm));
    }
    let two = T::of(2.0);
    let (h1, h2) = (mesh.width(0), mesh.width(1));
    d[0] = -(two * h1 + h2) / (h1 * (h1 + h2)) * u[0] + (h1 + h2) / (h1 * h2) * u[1] - h1 / (h2 * (h1 + h2)) * u[2];
    let (h1, h2) = (mesh.width(n - 2), mesh.width(n - 1));
    d[n] =
        (two * h2 + h1) / (h2 * (h1 + h2)) * u[n] - (h1 + h2) / (h1 * h2) * u[n - 1] + h2 / (h1 * (h1 + h2)) * u[n - 2];
    d
}

/// L2 norm, weighted H1 seminorm integral and D(A) graph norm of a field.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct WeightedNorms<T> {
    pub l2: T,
    /// `int x^a u_x^2 dx` (the squared seminorm).
    pub h1_alpha_semi: T,
    /// `||u|| + ||A u||`.
    pub graph: T,
}

/// Squared difference quotients per cell.
pub(crate) fn squared_slopes<T: Scalar>(mesh: &GradedMesh<T>, f: &[T]) -> Vec<T> {
    (0..mesh.cells())
        .map(|c| {
            let d = (f[c + 1] - f[c]) / mesh.width(c);
            d * d
        })
        .collect()
}

pub fn norms<T: Scalar>(f: &GridFunction<T>, alpha: T, op: &DegenerateOperator<T>) -> Result<WeightedNorms<T>> {
    f.require_space()?;
    f.ensure_mesh(op.mesh())?;
    if alpha != op.alpha() {
        return Err(Error::InvalidParameter(format!(
            "alpha {alpha} differs from the operator's {}",
            op.alpha()
        )));
    }
    let mesh = f.mesh();
    let l2 = f.l2_norm()?;
    let h1_alpha_semi = weighted_cell_integral(mesh, &squared_slopes(mesh, f.values()), alpha)?;
    let af = op.apply(f)?;
    let graph = l2 + af.l2_norm()?;
    Ok(WeightedNorms {
        l2,
        h1_alpha_semi,
        graph,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_and_graded_nodes() {
        let m = GradedMesh::<f64>::build(4, 1.0, 4, 1.0).unwrap();
        assert_eq!(m.nodes(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        let m = GradedMesh::<f64>::build(4, 2.0, 4, 1.0).unwrap();
        assert_eq!(m.nodes(), &[0.0, 0.0625, 0.25, 0.5625, 1.0]);
        let m = GradedMesh::<f64>::build(200, 2.0, 200, 1.0).unwrap();
        assert!((m.min_width() - 2.5e-5).abs() < 1e-18);
        assert_eq!(m.x(0), 0.0);
        assert_eq!(m.x(200), 1.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(GradedMesh::<f64>::build(3, 1.0, 4, 1.0).is_err());
        assert!(GradedMesh::<f64>::build(4, 1.0, 0, 1.0).is_err());
        assert!(GradedMesh::<f64>::build(4, 0.5, 4, 1.0).is_err());
        assert!(GradedMesh::<f64>::build(4, 1.0, 4, 0.0).is_err());
        assert!(GradedMesh::<f64>::build(4, 1.0, 4, -1.0).is_err());
    }

    #[test]
    fn dual_widths_sum_to_one() {
        let m = GradedMesh::<f64>::build(37, 2.5, 4, 1.0).unwrap();
        let s: f64 = m.dual_widths().iter().sum();
        assert!((s - 1.0).abs() < 1e-14);
    }

    #[test]
    fn nesting_under_doubling() {
        for gamma in [1.0, 2.0, 3.0] {
            let a = GradedMesh::<f64>::build(25, gamma, 4, 1.0).unwrap();
            let b = GradedMesh::<f64>::build(50, gamma, 4, 1.0).unwrap();
            for i in 0..=25 {
                assert_eq!(a.x(i), b.x(2 * i));
            }
        }
    }

    #[test]
    fn time_grid_ends_exactly() {
        let m = GradedMesh::<f64>::build(8, 2.0, 7, 0.3).unwrap();
        assert_eq!(m.time(0), 0.0);
        assert_eq!(m.time(7), 0.3);
    }

    #[test]
    fn weighted_integral_examples() {
        let m = GradedMesh::<f64>::build(200, 2.0, 4, 1.0).unwrap();
        let one = GridFunction::from_fn(m.clone(), |_| 1.0).unwrap();
        assert!((weighted_integral(&one, 0.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((weighted_integral(&one, 1.0).unwrap() - 0.5).abs() < 1e-3);

        let m = GradedMesh::<f64>::build(400, 2.0, 4, 1.0).unwrap();
        let sq = GridFunction::from_fn(m, |x| x * x).unwrap();
        assert!((weighted_integral(&sq, -0.5).unwrap() - 0.4).abs() < 1e-2);
    }

    #[test]
    fn singular_weight_requires_vanishing_integrand() {
        let m = GradedMesh::<f64>::build(50, 2.0, 4, 1.0).unwrap();
        let one = GridFunction::from_fn(m.clone(), |_| 1.0).unwrap();
        assert!(matches!(
            weighted_integral(&one, -1.5),
            Err(Error::QuadratureDivergence { .. })
        ));
        let sq = GridFunction::from_fn(m, |x| x * x).unwrap();
        let v = weighted_integral(&sq, -1.5).unwrap();
        // int x^0.5 = 2/3
        assert!((v - 2.0 / 3.0).abs() < 1e-2);
    }

    #[test]
    fn nodal_gradient_exact_for_quadratics() {
        let m = GradedMesh::<f64>::build(17, 2.3, 4, 1.0).unwrap();
        let u: Vec<f64> = m.nodes().iter().map(|&x| 3.0 * x * x - x + 0.5).collect();
        let d = nodal_gradient(&m, &u);
        for (i, &x) in m.nodes().iter().enumerate() {
            assert!((d[i] - (6.0 * x - 1.0)).abs() < 1e-9, "node {i}");
        }
    }

    #[test]
    fn rejects_non_finite_and_wrong_length() {
        let m = GradedMesh::<f64>::build(4, 1.0, 4, 1.0).unwrap();
        assert!(GridFunction::space(m.clone(), vec![0.0; 4]).is_err());
        assert!(GridFunction::space(m.clone(), vec![0.0, 1.0, f64::NAN, 0.0, 0.0]).is_err());
        assert!(GridFunction::space_time(m, vec![0.0; 25]).is_ok());
    }

    #[test]
    fn mismatched_meshes_are_detected() {
        let a = GradedMesh::<f64>::build(8, 1.0, 4, 1.0).unwrap();
        let b = GradedMesh::<f64>::build(8, 2.0, 4, 1.0).unwrap();
        let f = GridFunction::zeros(a);
        let g = GridFunction::zeros(b);
        assert!(matches!(f.inner(&g), Err(Error::MeshMismatch(_))));
    }
}
