//! The functional
//!
//! `f(u) = 1/4 int |u'|^2 dt * int V'(u).u dt`
//!
//! and the constraint
//!
//! `g(u) = int V(u) + V'(u).u / 2 dt = h`
//!
//! over [`AntiperiodicLoop`]s, together with the radial scaling `a -> g(a u)`
//! used as a retraction onto the level set, and the tangent projection of
//! gradients.
//!
//! Gradient convention: every coefficient gradient is produced by
//! [`coefficient_adjoint`], i.e. it is the Euclidean gradient with respect to
//! the raw `(a_k, b_k)` coordinates. With this convention the directional
//! identity `<grad g(u), u> = d/da g(a u)|_{a=1}` holds with no extra factor.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loop_space::{
    coefficient_adjoint, kinetic_gradient, kinetic_norm, quadrature, synthesize, AntiperiodicLoop, GridSamples,
    SampleGrid,
};
use crate::potentials::{dot, Potential};

pub const DEFAULT_PROJECTION_TOL: f64 = 1e-12;
/// Upper cap on the scaling factor during bracket expansion.
pub const SCALE_CAP: f64 = 1e8;
const SCALE_FLOOR: f64 = 1e-300;
const MAX_ROOT_ITERS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    pub h: f64,
    pub tol: f64,
}

impl ConstraintSpec {
    /// Tolerance `1e-12 * max(1, |h|)`.
    pub fn new(h: f64) -> Self {
        Self { h, tol: DEFAULT_PROJECTION_TOL * h.abs().max(1.0) }
    }

    pub fn with_tol(h: f64, tol: f64) -> Result<Self> {
        if !(tol > 0.0) {
            return Err(Error::InvalidParameter(format!("projection tolerance must be positive, got {tol}")));
        }
        Ok(Self { h, tol })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionResult {
    /// Scaling factor with `g(a u) = h`.
    pub a: f64,
    pub residual: f64,
    pub iterations: usize,
    pub bracket: (f64, f64),
    /// Smallest `dg/da` seen at a root iterate.
    pub min_slope: f64,
}

/// Per-node values of a loop under a potential.
struct NodeValues {
    u: GridSamples,
    value: Vec<f64>,
    force: GridSamples,
    /// `V''(u) u`
    curvature: GridSamples,
}

fn node_values<P: Potential + ?Sized>(lp: &AntiperiodicLoop, model: &P, grid: &SampleGrid) -> Result<NodeValues> {
    if model.dim() != lp.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: lp.dim() });
    }
    let u = synthesize(lp, grid)?;
    let n = grid.len();
    let mut force = GridSamples::zeros(n, lp.dim());
    let mut curvature = GridSamples::zeros(n, lp.dim());
    let value = (0..n)
        .map(|j| {
            let q = u.row(j);
            model.gradient(q, force.row_mut(j));
            model.hess_vec(q, q, curvature.row_mut(j));
            model.value(q)
        })
        .collect();
    Ok(NodeValues { u, value, force, curvature })
}

/// `int V'(u).u dt`.
pub fn force_integral<P: Potential + ?Sized>(lp: &AntiperiodicLoop, model: &P, grid: &SampleGrid) -> Result<f64> {
    let nv = node_values(lp, model, grid)?;
    Ok(force_from(&nv, grid))
}

fn force_from(nv: &NodeValues, grid: &SampleGrid) -> f64 {
    let vals: Vec<f64> = nv.force.rows().zip(nv.u.rows()).map(|(f, u)| dot(f, u)).collect();
    quadrature(&vals, grid)
}

/// `g(u) = int V(u) + V'(u).u / 2 dt`.
pub fn g_eval<P: Potential + ?Sized>(lp: &AntiperiodicLoop, model: &P, grid: &SampleGrid) -> Result<f64> {
    let nv = node_values(lp, model, grid)?;
    let vals: Vec<f64> =
        nv.value.iter().zip(nv.force.rows().zip(nv.u.rows())).map(|(v, (f, u))| v + 0.5 * dot(f, u)).collect();
    Ok(quadrature(&vals, grid))
}

/// `f(u) = K(u) P(u) / 4`.
pub fn f_eval<P: Potential + ?Sized>(lp: &AntiperiodicLoop, model: &P, grid: &SampleGrid) -> Result<f64> {
    Ok(0.25 * kinetic_norm(lp) * force_integral(lp, model, grid)?)
}

/// `g(a u)` and `d/da g(a u)` at fixed samples `u_j`.
struct ScalingMap<'a, P: ?Sized> {
    model: &'a P,
    u: GridSamples,
    n: usize,
}

impl<P: Potential + ?Sized> ScalingMap<'_, P> {
    fn eval(&self, a: f64) -> (f64, f64) {
        let dim = self.u.dim();
        let mut w = vec![0.0; dim];
        let mut grad = vec![0.0; dim];
        let mut hw = vec![0.0; dim];
        let (mut g, mut dg) = (0.0, 0.0);
        for u in self.u.rows() {
            w.iter_mut().zip(u).for_each(|(wi, ui)| *wi = a * ui);
            self.model.gradient(&w, &mut grad);
            self.model.hess_vec(&w, &w, &mut hw);
            g += self.model.value(&w) + 0.5 * dot(&grad, &w);
            dg += 1.5 * dot(&grad, u) + 0.5 * dot(&hw, u);
        }
        (g / self.n as f64, dg / self.n as f64)
    }
}

/// `d/da g(a u)`, equal to `1/(2a) int 3 V'(w).w + (V''(w) w, w)` with `w = a u`.
pub fn g_scale_derivative<P: Potential + ?Sized>(
    lp: &AntiperiodicLoop,
    model: &P,
    grid: &SampleGrid,
    a: f64,
) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::InvalidParameter(format!("scaling factor must be positive, got {a}")));
    }
    let map = ScalingMap { model, u: synthesize(lp, grid)?, n: grid.len() };
    Ok(map.eval(a).1)
}

/// Finds the unique `a > 0` with `g(a u) = h`.
///
/// The bracket is grown by doubling (or halving) from `a = 1`, then refined
/// by Newton steps that fall back to bisection whenever they leave it.
pub fn project_to_constraint<P: Potential + ?Sized>(
    lp: &AntiperiodicLoop,
    model: &P,
    spec: &ConstraintSpec,
    grid: &SampleGrid,
) -> Result<ProjectionResult> {
    if model.dim() != lp.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: lp.dim() });
    }
    if lp.is_zero() || kinetic_norm(lp) == 0.0 {
        return Err(Error::DegenerateLoop);
    }
    let h = spec.h;
    let v_origin = model.value(&vec![0.0; lp.dim()]);
    if !(v_origin < h) {
        return Err(Error::EnergyNotAboveOrigin { h, v_origin });
    }
    let map = ScalingMap { model, u: synthesize(lp, grid)?, n: grid.len() };

    let (g1, _) = map.eval(1.0);
    let (mut lo, mut hi) = (1.0, 1.0);
    if g1 < h {
        let mut g_hi = g1;
        while g_hi < h {
            lo = hi;
            hi *= 2.0;
            if hi > SCALE_CAP {
                return Err(Error::RootNotBracketed { h, a_max: lo, g_max: g_hi });
            }
            g_hi = map.eval(hi).0;
        }
    } else if g1 > h {
        let mut g_lo = g1;
        while g_lo > h {
            hi = lo;
            lo *= 0.5;
            if lo < SCALE_FLOOR {
                return Err(Error::RootNotBracketed { h, a_max: lo, g_max: g_lo });
            }
            g_lo = map.eval(lo).0;
        }
    }
    let bracket = (lo, hi);

    let mut a = 1.0;
    let mut min_slope = f64::INFINITY;
    for iter in 0..MAX_ROOT_ITERS {
        let (ga, slope) = map.eval(a);
        let r = ga - h;
        if slope < 0.0 {
            return Err(Error::NonMonotoneScaling { a, slope });
        }
        min_slope = min_slope.min(slope);
        if r.abs() <= spec.tol {
            return Ok(ProjectionResult { a, residual: r.abs(), iterations: iter, bracket, min_slope });
        }
        if r < 0.0 {
            lo = lo.max(a);
        } else {
            hi = hi.min(a);
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            return Err(Error::ProjectionNotConverged { residual: r.abs(), iterations: iter + 1 });
        }
        let newton = a - r / slope;
        a = if slope > 0.0 && newton.is_finite() && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
    }
    let residual = (map.eval(a).0 - h).abs();
    Err(Error::ProjectionNotConverged { residual, iterations: MAX_ROOT_ITERS })
}

/// Everything the optimizer needs at one loop, from a single synthesis.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub f: f64,
    pub g: f64,
    pub kinetic: f64,
    pub force: f64,
    pub grad_f: AntiperiodicLoop,
    pub grad_g: AntiperiodicLoop,
}

pub fn evaluate<P: Potential + ?Sized>(lp: &AntiperiodicLoop, model: &P, grid: &SampleGrid) -> Result<Evaluation> {
    let nv = node_values(lp, model, grid)?;
    let n = grid.len();
    let dim = lp.dim();
    let kinetic = kinetic_norm(lp);
    let force = force_from(&nv, grid);
    let g_vals: Vec<f64> =
        nv.value.iter().zip(nv.force.rows().zip(nv.u.rows())).map(|(v, (f, u))| v + 0.5 * dot(f, u)).collect();
    let g = quadrature(&g_vals, grid);

    // d/du <V'(u), u> = V''(u) u + V'(u);  d/du g = 3/2 V'(u) + 1/2 V''(u) u
    let mut dp = GridSamples::zeros(n, dim);
    let mut dg = GridSamples::zeros(n, dim);
    for j in 0..n {
        let (f, c) = (nv.force.row(j), nv.curvature.row(j));
        for d in 0..dim {
            dp.row_mut(j)[d] = c[d] + f[d];
            dg.row_mut(j)[d] = 1.5 * f[d] + 0.5 * c[d];
        }
    }
    let grad_force = coefficient_adjoint(&dp, grid, lp.k_max())?;
    let grad_g = coefficient_adjoint(&dg, grid, lp.k_max())?;
    let mut grad_f = kinetic_gradient(lp).scaled(0.25 * force);
    grad_f.axpy(0.25 * kinetic, &grad_force);
    Ok(Evaluation { f: 0.25 * kinetic * force, g, kinetic, force, grad_f, grad_g })
}

/// Coefficient gradient of [`f_eval`].
pub fn f_gradient<P: Potential + ?Sized>(
    lp: &AntiperiodicLoop,
    model: &P,
    grid: &SampleGrid,
) -> Result<AntiperiodicLoop> {
    Ok(evaluate(lp, model, grid)?.grad_f)
}

/// Coefficient gradient of [`g_eval`].
pub fn constraint_gradient<P: Potential + ?Sized>(
    lp: &AntiperiodicLoop,
    model: &P,
    grid: &SampleGrid,
) -> Result<AntiperiodicLoop> {
    Ok(evaluate(lp, model, grid)?.grad_g)
}

/// Inner product on coefficient space used for descent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    Euclidean,
    /// Harmonic `k` weighted by `1 + (2 pi k)^2`.
    Sobolev,
}

impl Metric {
    fn weight(&self, i: usize) -> f64 {
        match self {
            Metric::Euclidean => 1.0,
            Metric::Sobolev => {
                let w = TAU * AntiperiodicLoop::wavenumber(i) as f64;
                1.0 + w * w
            }
        }
    }

    /// Maps a coefficient gradient to the corresponding direction in this metric.
    pub fn raise(&self, grad: &AntiperiodicLoop) -> AntiperiodicLoop {
        let mut out = grad.clone();
        if *self == Metric::Euclidean {
            return out;
        }
        let dim = grad.dim();
        for i in 0..grad.harmonics() {
            let inv = 1.0 / self.weight(i);
            out.coeffs_mut()[2 * dim * i..2 * dim * (i + 1)].iter_mut().for_each(|c| *c *= inv);
        }
        out
    }

    /// Inner product of two directions in this metric.
    pub fn inner(&self, x: &AntiperiodicLoop, y: &AntiperiodicLoop) -> f64 {
        (0..x.harmonics())
            .map(|i| self.weight(i) * x.block(i).iter().zip(y.block(i)).map(|(a, b)| a * b).sum::<f64>())
            .sum()
    }

    /// Norm of a direction in this metric.
    pub fn norm(&self, dir: &AntiperiodicLoop) -> f64 {
        self.inner(dir, dir).sqrt()
    }
}

/// `grad_f - lambda grad_g` with `lambda = <grad_f, grad_g> / <grad_g, grad_g>`.
pub fn tangent_project(grad_f: &AntiperiodicLoop, grad_g: &AntiperiodicLoop) -> Result<AntiperiodicLoop> {
    tangent_project_in(Metric::Euclidean, grad_f, grad_g)
}

/// Riesz representative of `grad_f` in `metric`, projected onto the kernel of
/// `<grad_g, .>`. The multiplier is computed in the same metric.
pub fn tangent_project_in(
    metric: Metric,
    grad_f: &AntiperiodicLoop,
    grad_g: &AntiperiodicLoop,
) -> Result<AntiperiodicLoop> {
    let gg_norm = grad_g.norm();
    if gg_norm == 0.0 || gg_norm <= 1e-14 * grad_f.norm() {
        return Err(Error::VanishingConstraintGradient);
    }
    let rf = metric.raise(grad_f);
    let rg = metric.raise(grad_g);
    let lambda = grad_f.dot(&rg) / grad_g.dot(&rg);
    let mut out = rf;
    out.axpy(-lambda, &rg);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loop_space::random_loop;
    use crate::potentials::{make_exp_well, make_power_law};
    use std::f64::consts::PI;

    fn circle(c: f64) -> AntiperiodicLoop {
        AntiperiodicLoop::fundamental(&[c, 0.0], &[0.0, c]).unwrap()
    }

    fn grid() -> SampleGrid {
        SampleGrid::new(32).unwrap()
    }

    #[test]
    fn g_examples() {
        let harm = make_power_law(0.5, 1, 2).unwrap();
        for c in [0.5, 1.0, 3.0] {
            assert!((g_eval(&circle(c), &harm, &grid()).unwrap() - c * c).abs() < 1e-13);
        }
        let zero = AntiperiodicLoop::zeros(2, 3).unwrap();
        assert_eq!(g_eval(&zero, &make_exp_well(2).unwrap(), &grid()).unwrap(), 0.0);
        let g = g_eval(&circle(1.0), &make_exp_well(2).unwrap(), &grid()).unwrap();
        assert!((g - 1.5 * (-1.0f64).exp()).abs() < 1e-14);
        assert!((g - 0.551819).abs() < 1e-6);
    }

    #[test]
    fn scale_derivative_examples() {
        let harm = make_power_law(0.5, 1, 2).unwrap();
        assert!((g_scale_derivative(&circle(1.0), &harm, &grid(), 2.0).unwrap() - 4.0).abs() < 1e-13);
        let zero = AntiperiodicLoop::zeros(2, 1).unwrap();
        assert_eq!(g_scale_derivative(&zero, &harm, &grid(), 3.0).unwrap(), 0.0);
        let quart = make_power_law(1.0, 2, 2).unwrap();
        let d = g_scale_derivative(&circle(1.0), &quart, &grid(), 1.0).unwrap();
        assert!((d - 12.0).abs() < 1e-12);
        // finite differences of g(a u) = 3 a^4
        let eps = 1e-6;
        let gp = g_eval(&circle(1.0 + eps), &quart, &grid()).unwrap();
        let gm = g_eval(&circle(1.0 - eps), &quart, &grid()).unwrap();
        assert!(((gp - gm) / (2.0 * eps) - 12.0).abs() < 1e-6);
        assert!(g_scale_derivative(&zero, &harm, &grid(), 0.0).is_err());
    }

    #[test]
    fn projection_examples() {
        let harm = make_power_law(0.5, 1, 2).unwrap();
        let r = project_to_constraint(&circle(1.0), &harm, &ConstraintSpec::new(4.0), &grid()).unwrap();
        assert!((r.a - 2.0).abs() < 1e-12);
        assert!(r.residual <= 1e-12 * 4.0);
        assert!(r.bracket.0 <= r.a && r.a <= r.bracket.1);
        let r = project_to_constraint(&circle(1.0), &harm, &ConstraintSpec::new(1.0), &grid()).unwrap();
        assert!((r.a - 1.0).abs() < 1e-12);
    }

    #[test]
    fn projection_errors() {
        let ew = make_exp_well(2).unwrap();
        let lp = random_loop(3, 5, 2, 0.5).unwrap();
        let err = project_to_constraint(&lp, &ew, &ConstraintSpec::new(2.0), &grid()).unwrap_err();
        assert!(matches!(err, Error::RootNotBracketed { .. }), "{err:?}");
        assert!(err.is_infeasible_energy());

        let zero = AntiperiodicLoop::zeros(2, 5).unwrap();
        let err = project_to_constraint(&zero, &ew, &ConstraintSpec::new(0.5), &grid()).unwrap_err();
        assert_eq!(err, Error::DegenerateLoop);

        let harm = make_power_law(0.5, 1, 2).unwrap();
        let err = project_to_constraint(&lp, &harm, &ConstraintSpec::new(-1.0), &grid()).unwrap_err();
        assert!(matches!(err, Error::EnergyNotAboveOrigin { .. }));
    }

    #[test]
    fn projection_detects_non_monotone_scaling() {
        // V = x^2 exp(-x^2) violates V3: g(a u) rises then falls
        struct Bump;
        impl Potential for Bump {
            fn dim(&self) -> usize {
                1
            }
            fn value(&self, q: &[f64]) -> f64 {
                q[0] * q[0] * (-q[0] * q[0]).exp()
            }
            fn gradient(&self, q: &[f64], out: &mut [f64]) {
                let x = q[0];
                out[0] = (2.0 * x - 2.0 * x * x * x) * (-x * x).exp();
            }
            fn hess_vec(&self, q: &[f64], v: &[f64], out: &mut [f64]) {
                let x = q[0];
                out[0] = (2.0 - 10.0 * x * x + 4.0 * x.powi(4)) * (-x * x).exp() * v[0];
            }
            fn label(&self) -> String {
                "bump".into()
            }
        }
        let lp = AntiperiodicLoop::fundamental(&[1.5], &[0.0]).unwrap();
        let g = SampleGrid::new(16).unwrap();
        // at a = 1 the loop sits on the falling side; slope is negative there
        assert!(g_scale_derivative(&lp, &Bump, &g, 1.0).unwrap() < 0.0);
        let err = project_to_constraint(&lp, &Bump, &ConstraintSpec::new(0.05), &g).unwrap_err();
        assert!(matches!(err, Error::NonMonotoneScaling { .. }), "{err:?}");
    }

    #[test]
    fn f_examples() {
        let harm = make_power_law(0.5, 1, 2).unwrap();
        let f = f_eval(&circle(1.0), &harm, &grid()).unwrap();
        assert!((f - PI * PI).abs() < 1e-12);
        assert!((f - 9.869604).abs() < 1e-6);
        assert_eq!(f_eval(&AntiperiodicLoop::zeros(2, 1).unwrap(), &harm, &grid()).unwrap(), 0.0);
        let f2 = f_eval(&circle(2f64.sqrt()), &harm, &grid()).unwrap();
        assert!((f2 - 4.0 * PI * PI).abs() < 1e-11);
    }

    #[test]
    fn zero_loop_gradients_vanish() {
        let harm = make_power_law(0.5, 1, 2).unwrap();
        let zero = AntiperiodicLoop::zeros(2, 3).unwrap();
        assert!(f_gradient(&zero, &harm, &grid()).unwrap().is_zero());
        assert!(constraint_gradient(&zero, &harm, &grid()).unwrap().is_zero());
    }

    #[test]
    fn directional_identity_for_constraint_gradient() {
        let m = make_power_law(1.0, 2, 2).unwrap();
        for seed in 0..5 {
            let lp = random_loop(seed, 5, 2, 0.6).unwrap();
            let lhs = constraint_gradient(&lp, &m, &grid()).unwrap().dot(&lp);
            let rhs = g_scale_derivative(&lp, &m, &grid(), 1.0).unwrap();
            assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0), "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn tangent_projection_examples() {
        let mk = |v: [f64; 2]| AntiperiodicLoop::from_coeffs(1, 1, v.to_vec()).unwrap();
        let p = tangent_project(&mk([2.0, 4.0]), &mk([1.0, 2.0])).unwrap();
        assert!(p.norm() < 1e-15);
        let p = tangent_project(&mk([0.0, 3.0]), &mk([1.0, 0.0])).unwrap();
        assert_eq!(p.coeffs(), &[0.0, 3.0]);
        let p = tangent_project(&mk([1.0, 1.0]), &mk([1.0, 0.0])).unwrap();
        assert_eq!(p.coeffs(), &[0.0, 1.0]);
        assert_eq!(tangent_project(&mk([1.0, 1.0]), &mk([0.0, 0.0])), Err(Error::VanishingConstraintGradient));
    }

    #[test]
    fn preconditioned_projection_is_tangent() {
        let m = make_power_law(1.0, 2, 2).unwrap();
        let lp = random_loop(8, 7, 2, 0.7).unwrap();
        let g = SampleGrid::new(64).unwrap();
        let e = evaluate(&lp, &m, &g).unwrap();
        let d = tangent_project_in(Metric::Sobolev, &e.grad_f, &e.grad_g).unwrap();
        assert!(d.dot(&e.grad_g).abs() <= 1e-12 * d.norm() * e.grad_g.norm());
        // d is a descent direction: <grad f, d> = |d|^2 in the metric
        let n = Metric::Sobolev.norm(&d);
        assert!((e.grad_f.dot(&d) - n * n).abs() <= 1e-10 * n * n);
    }
}
