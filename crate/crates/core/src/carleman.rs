//! Carleman weights and the numerical evaluation of the weighted estimates.
//!
//! Weights: `l(t) = 1/(t(T-t))`, `p(x) = -x^b`, `phi = p l`. All space-time
//! integrals run over the interior time band `t_1 ..= t_{M-1}`, since `l`
//! blows up at both ends while `exp(2 s phi)` vanishes there.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mesh::{nodal_gradient, weighted_nodal_integral, GradedMesh, GridFunction};
use crate::operator::DegenerateOperator;
use crate::scalar::Scalar;

/// One named inequality of the admissibility analysis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityCheck {
    pub name: String,
    /// Signed quantity; the inequality holds when it has the required sign.
    pub value: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdmissibilityReport {
    pub alpha: f64,
    pub beta: f64,
    /// Open interval `(1 - a, 1 - a/2)` that `b` must lie in.
    pub interval: (f64, f64),
    pub checks: Vec<InequalityCheck>,
    /// `b (a+b-1)(a+b-2)(2a+b-3)`.
    pub product: f64,
    /// `-2b + 2 - a`.
    pub gradient_margin: f64,
    pub valid: bool,
}

/// The sign conditions behind the estimate, in the order they are listed in
/// [`AdmissibilityReport::checks`].
pub fn sign_conditions<T: Scalar>(alpha: T, beta: T) -> [(String, T, bool); 5] {
    let one = T::one();
    let two = T::of(2.0);
    let a1 = alpha + beta - one;
    let a2 = alpha + beta - two;
    let a3 = two * alpha + beta - T::of(3.0);
    let g = -two * beta + two - alpha;
    let prod = beta * a1 * a2 * a3;
    [
        ("a + b - 1 > 0".to_string(), a1, a1 > T::zero()),
        ("a + b - 2 < 0".to_string(), a2, a2 < T::zero()),
        ("2a + b - 3 < 0".to_string(), a3, a3 < T::zero()),
        ("-2b + 2 - a > 0".to_string(), g, g > T::zero()),
        ("b (a+b-1)(a+b-2)(2a+b-3) > 0".to_string(), prod, prod > T::zero()),
    ]
}

pub fn admissibility<T: Scalar>(alpha: T, beta: T) -> AdmissibilityReport {
    let conditions = sign_conditions(alpha, beta);
    let alpha_ok = alpha > T::zero() && alpha < T::one();
    let mut checks = vec![InequalityCheck {
        name: "0 < a < 1".into(),
        value: alpha.as_f64(),
        holds: alpha_ok,
    }];
    checks.extend(conditions.iter().map(|(name, v, ok)| InequalityCheck {
        name: name.clone(),
        value: v.as_f64(),
        holds: *ok,
    }));
    let valid = checks.iter().all(|c| c.holds);
    AdmissibilityReport {
        alpha: alpha.as_f64(),
        beta: beta.as_f64(),
        interval: ((T::one() - alpha).as_f64(), (T::one() - alpha * T::of(0.5)).as_f64()),
        product: conditions[4].1.as_f64(),
        gradient_margin: conditions[3].1.as_f64(),
        checks,
        valid,
    }
}

/// Admissible `(a, b, T, s)`: `0 < a < 1`, `b` in `(1-a, 1-a/2)`, `T, s > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CarlemanContext<T> {
    pub alpha: T,
    pub beta: T,
    pub horizon: T,
    pub s: T,
}

impl<T: Scalar> CarlemanContext<T> {
    pub fn with_s(self, s: T) -> Result<Self> {
        validate_context(self.alpha, self.beta, self.horizon, s)
    }

    pub fn l(&self, t: T) -> T {
        T::one() / (t * (self.horizon - t))
    }

    pub fn dl(&self, t: T) -> T {
        let l = self.l(t);
        -(self.horizon - T::of(2.0) * t) * l * l
    }

    pub fn d2l(&self, t: T) -> T {
        let l = self.l(t);
        let q = self.horizon - T::of(2.0) * t;
        T::of(2.0) * l * l + T::of(2.0) * q * q * l * l * l
    }

    fn check_t(&self, t: T) -> Result<()> {
        if t > T::zero() && t < self.horizon {
            Ok(())
        } else {
            Err(Error::WeightSingularity {
                t: t.as_f64(),
                horizon: self.horizon.as_f64(),
            })
        }
    }

    pub fn weights(&self, x: T, t: T) -> Result<Weights<T>> {
        self.check_t(t)?;
        if !(x >= T::zero() && x <= T::one()) {
            return Err(Error::InvalidParameter(format!("x = {x} outside [0, 1]")));
        }
        let b = self.beta;
        let l = self.l(t);
        let dl = self.dl(t);
        let d2l = self.d2l(t);
        let p = -x.powf(b);
        let xb1 = x.powf(b - T::one());
        Ok(Weights {
            l,
            p,
            phi: p * l,
            phi_x: -b * xb1 * l,
            phi_t: p * dl,
            phi_tt: p * d2l,
            phi_tx: -b * xb1 * dl,
            phi_xx: -b * (b - T::one()) * x.powf(b - T::of(2.0)) * l,
        })
    }

    /// `exp(2 s phi)`, evaluated in log space and clamped at `exp(-700)`.
    pub fn exp_weight(&self, x: T, l: T) -> T {
        let e = T::of(2.0) * self.s * (-x.powf(self.beta)) * l;
        e.max(T::of(-700.0)).exp()
    }
}

pub fn validate_context<T: Scalar>(alpha: T, beta: T, horizon: T, s: T) -> Result<CarlemanContext<T>> {
    let report = admissibility(alpha, beta);
    let mut failed: Vec<String> = report
        .checks
        .iter()
        .filter(|c| !c.holds)
        .map(|c| format!("{} (value {})", c.name, c.value))
        .collect();
    if !(horizon > T::zero()) {
        failed.push(format!("T > 0 (value {horizon})"));
    }
    if !(s > T::zero()) {
        failed.push(format!("s > 0 (value {s})"));
    }
    if failed.is_empty() {
        Ok(CarlemanContext {
            alpha,
            beta,
            horizon,
            s,
        })
    } else {
        Err(Error::Admissibility { failed })
    }
}

/// Closed-form weights and derivatives at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Weights<T> {
    pub l: T,
    pub p: T,
    pub phi: T,
    pub phi_x: T,
    pub phi_t: T,
    pub phi_tt: T,
    pub phi_tx: T,
    pub phi_xx: T,
}

/// Coefficients whose signs drive the lower bound, and the exponent
/// orderings used to absorb lower-order terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoefficientSigns<T> {
    /// `b(a+b-1)(a+b-2)(2a+b-3)`, coefficient of the `s l x^(2a+b-4) w^2` term.
    pub linear: T,
    /// `b(-2b+2-a)`, coefficient of the `s l x^(2a+b-2) w_x^2` term.
    pub gradient: T,
    /// `b^3(-2b+2-a)`, coefficient of the `s^3 l^3 x^(2a+3b-4) w^2` term.
    pub cubic: T,
    /// `2a+3b-4 < 2a+4b-4 < 0`.
    pub cubic_exponent_ordered: bool,
    /// `(2a+3b-4) - (a+2b-2) = a+b-2 < 0`.
    pub mixed_exponent_ordered: bool,
}

pub fn coefficient_signs<T: Scalar>(ctx: &CarlemanContext<T>) -> CoefficientSigns<T> {
    let (a, b) = (ctx.alpha, ctx.beta);
    let two = T::of(2.0);
    let four = T::of(4.0);
    let g = -two * b + two - a;
    let e3 = two * a + T::of(3.0) * b - four;
    let e4 = two * a + four * b - four;
    let e_mixed = a + two * b - two;
    CoefficientSigns {
        linear: b * (a + b - T::one()) * (a + b - two) * (two * a + b - T::of(3.0)),
        gradient: b * g,
        cubic: b * b * b * g,
        cubic_exponent_ordered: e3 < e4 && e4 < T::zero(),
        mixed_exponent_ordered: e3 - e_mixed < T::zero(),
    }
}

/// `max |l''| / l^3` over `t_1 ..= t_{M-1}` of a uniform grid with `M` steps.
pub fn curvature_ratio<T: Scalar>(horizon: T, steps: usize) -> T {
    let ctx = CarlemanContext {
        alpha: T::of(0.5),
        beta: T::of(0.6),
        horizon,
        s: T::one(),
    };
    (1..steps)
        .map(|j| {
            let t = T::of_usize(j) * horizon / T::of_usize(steps);
            let l = ctx.l(t);
            ctx.d2l(t).abs() / (l * l * l)
        })
        .fold(T::zero(), T::max)
}

fn check_space_time_boundary<T: Scalar>(w: &GridFunction<T>) -> Result<()> {
    w.require_space_time()?;
    let mesh = w.mesh();
    let n = mesh.cells();
    let tol = w.max_abs() * T::epsilon() * T::of(16.0);
    for j in 0..=mesh.steps() {
        let s = w.slice(j);
        if s[0].abs() > tol || s[n].abs() > tol {
            return Err(Error::BoundaryCondition(format!(
                "field must vanish at x = 0 and x = 1 (time node {j}: {}, {})",
                s[0], s[n]
            )));
        }
    }
    Ok(())
}

fn ensure_context_mesh<T: Scalar>(ctx: &CarlemanContext<T>, mesh: &GradedMesh<T>) -> Result<()> {
    if ctx.horizon != mesh.horizon() {
        return Err(Error::MeshMismatch(format!(
            "context horizon {} differs from mesh horizon {}",
            ctx.horizon,
            mesh.horizon()
        )));
    }
    Ok(())
}

/// Splits the conjugated operator `L_s w = e^{s phi} L(e^{-s phi} w)` into
///
/// ```text
/// L+ w = (x^a w_x)_x - s phi_t w + s^2 x^a phi_x^2 w
/// L- w = w_t - 2 s x^a phi_x w_x - s (x^a phi_x)_x w
/// ```
///
/// on interior nodes of the time band; all other entries are zero.
pub fn decompose_ls<T: Scalar>(
    w: &GridFunction<T>,
    ctx: &CarlemanContext<T>,
) -> Result<(GridFunction<T>, GridFunction<T>)> {
    check_space_time_boundary(w)?;
    let mesh = w.mesh();
    ensure_context_mesh(ctx, mesh)?;
    let op = DegenerateOperator::dirichlet(ctx.alpha, mesh.clone())?;
    let n = mesh.cells();
    let len = mesh.len();
    let steps = mesh.steps();
    let dt = mesh.dt();
    let (a, b, s) = (ctx.alpha, ctx.beta, ctx.s);
    let two = T::of(2.0);

    let mut plus = vec![T::zero(); w.values().len()];
    let mut minus = vec![T::zero(); w.values().len()];
    let mut aw = vec![T::zero(); len];
    for j in 1..steps {
        let t = mesh.time(j);
        let l = ctx.l(t);
        let dl = ctx.dl(t);
        let cur = w.slice(j);
        let prev = w.slice(j - 1);
        let next = w.slice(j + 1);
        op.apply_nodal(cur, &mut aw);
        let wx = nodal_gradient(mesh, cur);
        for i in 1..n {
            let x = mesh.x(i);
            let wi = cur[i];
            let xb = x.powf(b);
            let phi_t = -xb * dl;
            // x^a phi_x and its derivative
            let xa_phix = -b * l * x.powf(a + b - T::one());
            let d_xa_phix = -b * l * (a + b - T::one()) * x.powf(a + b - two);
            let xa_phix2 = b * b * l * l * x.powf(a + two * b - two);
            let wt = (next[i] - prev[i]) / (two * dt);
            plus[j * len + i] = aw[i] - s * phi_t * wi + s * s * xa_phix2 * wi;
            minus[j * len + i] = wt - two * s * xa_phix * wx[i] - s * d_xa_phix * wi;
        }
    }
    Ok((
        GridFunction::space_time(mesh.clone(), plus)?,
        GridFunction::space_time(mesh.clone(), minus)?,
    ))
}

/// The five right-hand terms of the integration-by-parts identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentityTerms<T> {
    pub cross: T,
    pub terms: [T; 5],
}

impl<T: Scalar> IdentityTerms<T> {
    pub fn residual(&self) -> T {
        let sum: T = self.terms.iter().copied().sum();
        let scale: T = self.cross.abs() + self.terms.iter().map(|v| v.abs()).sum::<T>();
        (self.cross - sum).abs() / (scale + T::epsilon())
    }
}

/// Both sides of
///
/// ```text
/// int L+w L-w = s/2 int phi_tt w^2 + s int x^a (x^a phi_x)_xx w w_x
///             + 2 s^2 int x^a phi_x phi_tx w^2
///             + s int (2 x^{2a} phi_xx + a x^{2a-1} phi_x) w_x^2
///             + s^3 int (2 x^a phi_xx + a x^{a-1} phi_x) x^a phi_x^2 w^2
/// ```
///
/// with the weight derivatives in closed form.
pub fn identity_terms<T: Scalar>(w: &GridFunction<T>, ctx: &CarlemanContext<T>) -> Result<IdentityTerms<T>> {
    let (plus, minus) = decompose_ls(w, ctx)?;
    let mesh = w.mesh();
    let steps = mesh.steps();
    let dt = mesh.dt();
    let (a, b, s) = (ctx.alpha, ctx.beta, ctx.s);
    let (one, two, three, four) = (T::one(), T::of(2.0), T::of(3.0), T::of(4.0));
    let g = -two * b + two - a;
    let k2 = -b * (a + b - one) * (a + b - two);

    let mut cross = T::zero();
    let mut terms = [T::zero(); 5];
    for j in 1..steps {
        let t = mesh.time(j);
        let l = ctx.l(t);
        let dl = ctx.dl(t);
        let d2l = ctx.d2l(t);
        let cur = w.slice(j);
        let wx = nodal_gradient(mesh, cur);
        let w2: Vec<T> = cur.iter().map(|&v| v * v).collect();
        let wwx: Vec<T> = cur.iter().zip(&wx).map(|(&p, &q)| p * q).collect();
        let wx2: Vec<T> = wx.iter().map(|&v| v * v).collect();

        cross += dt * mesh.inner(plus.slice(j), minus.slice(j));
        // phi_tt = -x^b l''
        terms[0] += dt * s * T::of(0.5) * (-d2l) * weighted_nodal_integral(mesh, &w2, b)?;
        terms[1] += dt * s * k2 * l * weighted_nodal_integral(mesh, &wwx, two * a + b - three)?;
        // x^a phi_x phi_tx = b^2 l l' x^(a+2b-2)
        terms[2] += dt * two * s * s * b * b * l * dl * weighted_nodal_integral(mesh, &w2, a + two * b - two)?;
        terms[3] += dt * s * b * g * l * weighted_nodal_integral(mesh, &wx2, two * a + b - two)?;
        terms[4] += dt
            * s
            * s
            * s
            * b
            * b
            * b
            * g
            * l
            * l
            * l
            * weighted_nodal_integral(mesh, &w2, two * a + three * b - four)?;
    }
    Ok(IdentityTerms { cross, terms })
}

/// `|LHS - sum of terms| / (|LHS| + sum |terms| + eps)` for the identity above.
pub fn identity_residual<T: Scalar>(w: &GridFunction<T>, ctx: &CarlemanContext<T>) -> Result<T> {
    Ok(identity_terms(w, ctx)?.residual())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Cubic term weighted by `x^(2a+3b-4)`, plus the linear term.
    Theorem,
    /// Cubic term without the space weight, no linear term.
    Corollary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CarlemanSides<T> {
    pub lhs_cubic: T,
    pub lhs_linear: T,
    pub lhs_gradient: T,
    pub rhs: T,
    pub variant: Variant,
    /// Relative change of the total when the band loses one more node at each
    /// end; estimates what the excluded end slivers carry.
    pub band_truncation: T,
}

impl<T: Scalar> CarlemanSides<T> {
    pub fn lhs(&self) -> T {
        self.lhs_cubic + self.lhs_linear + self.lhs_gradient
    }

    /// `lhs / rhs`, `None` when both vanish.
    pub fn ratio(&self) -> Option<T> {
        if self.rhs > T::zero() {
            Some(self.lhs() / self.rhs)
        } else if self.lhs() > T::zero() {
            Some(T::infinity())
        } else {
            None
        }
    }
}

/// Rejects fields whose conormal flux at either end is not small compared
/// with the interior flux: `|trace| <= 10 h_end max|flux|`.
fn check_conormal_traces<T: Scalar>(v: &GridFunction<T>, op: &DegenerateOperator<T>) -> Result<()> {
    let mesh = v.mesh();
    let n = mesh.cells();
    for j in 1..mesh.steps() {
        let slice = v.slice(j);
        let flux = op.fluxes(slice);
        let peak = flux.iter().fold(T::zero(), |m, f| m.max(f.abs()));
        let tiny = T::min_positive_value();
        let t0 = op.trace_at_zero(slice);
        if t0.abs() > T::of(10.0) * mesh.width(0) * peak + tiny {
            return Err(Error::HypothesisViolation {
                what: format!("conormal trace at x = 0 does not vanish at time node {j}"),
                value: t0.as_f64(),
            });
        }
        let t1 = op.trace_at_one(slice);
        if t1.abs() > T::of(10.0) * mesh.width(n - 1) * peak + tiny {
            return Err(Error::HypothesisViolation {
                what: format!("conormal trace at x = 1 does not vanish at time node {j}"),
                value: t1.as_f64(),
            });
        }
    }
    Ok(())
}

/// Per-time-node contributions `(cubic, linear, gradient, rhs)`.
fn band_contributions<T: Scalar>(
    v: &GridFunction<T>,
    ctx: &CarlemanContext<T>,
    variant: Variant,
    op: &DegenerateOperator<T>,
) -> Result<Vec<[T; 4]>> {
    let mesh = v.mesh();
    let steps = mesh.steps();
    let len = mesh.len();
    let dt = mesh.dt();
    let (a, b, s) = (ctx.alpha, ctx.beta, ctx.s);
    let (two, three, four) = (T::of(2.0), T::of(3.0), T::of(4.0));
    let mut out = Vec::with_capacity(steps.saturating_sub(1));
    let mut av = vec![T::zero(); len];
    for j in 1..steps {
        let l = ctx.l(mesh.time(j));
        let cur = v.slice(j);
        let weight: Vec<T> = mesh.nodes().iter().map(|&x| ctx.exp_weight(x, l)).collect();
        let vx = nodal_gradient(mesh, cur);
        let v2e: Vec<T> = cur.iter().zip(&weight).map(|(&p, &e)| p * p * e).collect();
        let vx2e: Vec<T> = vx.iter().zip(&weight).map(|(&p, &e)| p * p * e).collect();

        let cubic_sigma = match variant {
            Variant::Theorem => two * a + three * b - four,
            Variant::Corollary => T::zero(),
        };
        let cubic = s * s * s * l * l * l * weighted_nodal_integral(mesh, &v2e, cubic_sigma)?;
        let linear = match variant {
            Variant::Theorem => s * l * weighted_nodal_integral(mesh, &v2e, two * a + b - four)?,
            Variant::Corollary => T::zero(),
        };
        let gradient = s * l * weighted_nodal_integral(mesh, &vx2e, two * a + b - two)?;

        op.apply_nodal(cur, &mut av);
        let (prev, next) = (v.slice(j - 1), v.slice(j + 1));
        let lv2e: Vec<T> = (0..len)
            .map(|i| {
                if i == 0 || i == len - 1 {
                    return T::zero();
                }
                let lv = (next[i] - prev[i]) / (two * dt) + av[i];
                lv * lv * weight[i]
            })
            .collect();
        let rhs = mesh.inner(&lv2e, &vec![T::one(); len]);
        out.push([dt * cubic, dt * linear, dt * gradient, dt * rhs]);
    }
    Ok(out)
}

/// Both sides of the Carleman estimate for `v` over the interior time band,
/// with `Lv = v_t + (x^a v_x)_x` evaluated discretely.
pub fn carleman_sides<T: Scalar>(
    v: &GridFunction<T>,
    ctx: &CarlemanContext<T>,
    variant: Variant,
) -> Result<CarlemanSides<T>> {
    check_space_time_boundary(v)?;
    let mesh = v.mesh();
    ensure_context_mesh(ctx, mesh)?;
    let op = DegenerateOperator::dirichlet(ctx.alpha, mesh.clone())?;
    check_conormal_traces(v, &op)?;
    let rows = band_contributions(v, ctx, variant, &op)?;
    let mut tot = [T::zero(); 4];
    for r in &rows {
        for k in 0..4 {
            tot[k] += r[k];
        }
    }
    let inner_total: T = if rows.len() > 2 {
        rows[1..rows.len() - 1].iter().map(|r| r[0] + r[1] + r[2] + r[3]).sum()
    } else {
        T::zero()
    };
    let full_total = tot[0] + tot[1] + tot[2] + tot[3];
    let band_truncation = if full_total > T::zero() {
        (full_total - inner_total).abs() / full_total
    } else {
        T::zero()
    };
    for (k, val) in tot.iter().enumerate() {
        if !val.is_finite() {
            return Err(Error::QuadratureDivergence {
                sigma: f64::NAN,
                detail: format!("non-finite Carleman integral #{k}"),
            });
        }
    }
    Ok(CarlemanSides {
        lhs_cubic: tot[0],
        lhs_linear: tot[1],
        lhs_gradient: tot[2],
        rhs: tot[3],
        variant,
        band_truncation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint<T> {
    pub s: T,
    pub sides: CarlemanSides<T>,
    pub ratio: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCurve<T> {
    pub points: Vec<SweepPoint<T>>,
    /// `max <= 1.1 * median` over the upper half of the `s` values; `None`
    /// for a single-point sweep.
    pub bounded_tail: Option<bool>,
}

pub fn ratio_sweep<T: Scalar>(
    v: &GridFunction<T>,
    ctx_base: &CarlemanContext<T>,
    s_list: &[T],
    variant: Variant,
) -> Result<SweepCurve<T>> {
    if s_list.is_empty() {
        return Err(Error::InvalidParameter("empty s list".into()));
    }
    let mut points = Vec::with_capacity(s_list.len());
    for &s in s_list {
        let ctx = ctx_base.with_s(s)?;
        let sides = carleman_sides(v, &ctx, variant)?;
        points.push(SweepPoint {
            s,
            ratio: sides.ratio(),
            sides,
        });
    }
    let bounded_tail = (points.len() > 1).then(|| {
        let mut sorted: Vec<&SweepPoint<T>> = points.iter().collect();
        sorted.sort_by(|p, q| p.s.partial_cmp(&q.s).unwrap_or(std::cmp::Ordering::Equal));
        let top = &sorted[sorted.len() / 2..];
        let ratios: Option<Vec<T>> = top.iter().map(|p| p.ratio.filter(|r| r.is_finite())).collect();
        match ratios {
            None => false,
            Some(mut r) => {
                r.sort_by(|p, q| p.partial_cmp(q).unwrap_or(std::cmp::Ordering::Equal));
                let k = r.len();
                let median = if k % 2 == 1 {
                    r[k / 2]
                } else {
                    (r[k / 2 - 1] + r[k / 2]) * T::of(0.5)
                };
                r[k - 1] <= T::of(1.1) * median
            }
        }
    });
    Ok(SweepCurve { points, bounded_tail })
}
