//! Physical orbits from unit-period minimizers.
//!
//! A loop `u` on the constraint set with period `T` from [`recover_period`]
//! gives `q(t) = u(t/T)`. [`rescale`] samples it and measures the spectral
//! residual of the ODE, and [`verify_by_integration`] re-integrates it from
//! its initial state with an independent time stepper.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loop_space::{kinetic_norm, AntiperiodicLoop, SampleGrid};
use crate::potentials::{dot, Potential};
use crate::variational::force_integral;

pub const DEFAULT_OUT_SAMPLES: usize = 512;
pub const DEFAULT_STEPS: usize = 8192;
pub const MIN_STEPS: usize = 100;
const BLOWUP_RADIUS: f64 = 1e12;

/// `T = sqrt(int |u'|^2 / int V'(u).u)`.
pub fn recover_period<P: Potential + ?Sized>(lp: &AntiperiodicLoop, model: &P, grid: &SampleGrid) -> Result<f64> {
    let kinetic = kinetic_norm(lp);
    if !(kinetic > 0.0) {
        return Err(Error::DegenerateLoop);
    }
    let force = force_integral(lp, model, grid)?;
    if !(force > 0.0) {
        return Err(Error::NonpositiveForce(force));
    }
    let t = (kinetic / force).sqrt();
    if !t.is_finite() {
        return Err(Error::DegenerateLoop);
    }
    Ok(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    #[default]
    StormerVerlet,
    Rk4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitSample {
    pub t: f64,
    pub q: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// `max |q'' + V'(q)|` over the samples.
    pub ode_residual_inf: f64,
    /// `max |E(t) - h|` over the samples.
    pub energy_err_inf: f64,
    /// `|E(0) - h|`
    pub energy_err_initial: f64,
    /// `max |V'(q)|` over the samples.
    pub max_force: f64,
    pub max_speed: f64,
    pub max_radius: f64,
    /// `max |q(t) - q(0)|`
    pub max_excursion: f64,
    /// `max |q(t + T/2) + q(t)|` over the samples.
    pub antiperiodicity_error: f64,
    /// Wavenumber carrying the largest share of the kinetic norm.
    pub dominant_harmonic: usize,
    /// Set when `dominant_harmonic > 1`, in which case `T` may be a multiple
    /// of the minimal period.
    pub possibly_non_minimal: bool,
    pub closure_error: Option<f64>,
    pub integrator_energy_drift: Option<f64>,
    pub integrator: Option<Integrator>,
    pub steps: Option<usize>,
}

impl Diagnostics {
    pub fn is_nonconstant(&self) -> bool {
        self.max_excursion > 1e-6 * self.max_radius
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitSolution {
    #[serde(rename = "T")]
    pub period: f64,
    pub h: f64,
    pub f_star: f64,
    #[serde(rename = "loop")]
    pub unit_loop: AntiperiodicLoop,
    pub orbit_samples: Vec<OrbitSample>,
    pub diagnostics: Diagnostics,
}

/// Acceptance limits on [`Diagnostics`]. Relative limits scale with `1 + max |V'|` or `1 + |h|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub ode_residual_rel: f64,
    pub energy_rel: f64,
    pub closure: f64,
    pub drift_rel: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { ode_residual_rel: 1e-6, energy_rel: 1e-8, closure: 1e-5, drift_rel: 1e-6 }
    }
}

impl Thresholds {
    /// Names of the violated limits; empty when every diagnostic is within bounds.
    pub fn breaches(&self, d: &Diagnostics, h: f64) -> Vec<String> {
        let mut out = Vec::new();
        let mut check = |name: &str, value: f64, limit: f64| {
            if !(value <= limit) {
                out.push(format!("{name} = {value:e} exceeds {limit:e}"));
            }
        };
        check("ode_residual_inf", d.ode_residual_inf, self.ode_residual_rel * (1.0 + d.max_force));
        check("energy_err_inf", d.energy_err_inf, self.energy_rel * (1.0 + h.abs()));
        check("closure_error", d.closure_error.unwrap_or(f64::NAN), self.closure);
        check(
            "integrator_energy_drift",
            d.integrator_energy_drift.unwrap_or(f64::NAN),
            self.drift_rel * (1.0 + h.abs()),
        );
        if !d.is_nonconstant() {
            out.push("orbit is constant".into());
        }
        out
    }
}

/// Samples `q(t) = u(t/T)` at `t_i = i T / out_samples` and fills the spectral diagnostics.
pub fn rescale<P: Potential + ?Sized>(
    lp: &AntiperiodicLoop,
    period: f64,
    h: f64,
    model: &P,
    out_samples: usize,
) -> Result<OrbitSolution> {
    if !(period > 0.0 && period.is_finite()) {
        return Err(Error::InvalidParameter(format!("period must be positive and finite, got {period}")));
    }
    if out_samples < 2 {
        return Err(Error::InvalidParameter("out_samples must be at least 2".into()));
    }
    if lp.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: lp.dim() });
    }
    let dim = lp.dim();
    let mut samples = Vec::with_capacity(out_samples);
    let mut acc = vec![0.0; dim];
    let mut force = vec![0.0; dim];
    let mut d = Diagnostics {
        ode_residual_inf: 0.0,
        energy_err_inf: 0.0,
        energy_err_initial: 0.0,
        max_force: 0.0,
        max_speed: 0.0,
        max_radius: 0.0,
        max_excursion: 0.0,
        antiperiodicity_error: 0.0,
        dominant_harmonic: 1,
        possibly_non_minimal: false,
        closure_error: None,
        integrator_energy_drift: None,
        integrator: None,
        steps: None,
    };
    let inv_t = 1.0 / period;
    for i in 0..out_samples {
        let s = i as f64 / out_samples as f64;
        let mut q = vec![0.0; dim];
        let mut v = vec![0.0; dim];
        lp.eval(s, &mut q);
        lp.eval_velocity(s, &mut v);
        lp.eval_acceleration(s, &mut acc);
        v.iter_mut().for_each(|x| *x *= inv_t);
        model.gradient(&q, &mut force);
        let residual = acc.iter().zip(&force).map(|(a, f)| (a * inv_t * inv_t + f).powi(2)).sum::<f64>().sqrt();
        let energy_err = (0.5 * dot(&v, &v) + model.value(&q) - h).abs();
        if i == 0 {
            d.energy_err_initial = energy_err;
        }
        d.ode_residual_inf = d.ode_residual_inf.max(residual);
        d.energy_err_inf = d.energy_err_inf.max(energy_err);
        d.max_force = d.max_force.max(dot(&force, &force).sqrt());
        d.max_speed = d.max_speed.max(dot(&v, &v).sqrt());
        d.max_radius = d.max_radius.max(dot(&q, &q).sqrt());
        samples.push(OrbitSample { t: s * period, q, v });
    }
    let q0 = samples[0].q.clone();
    let mut half = vec![0.0; dim];
    for smp in &samples {
        d.max_excursion = d.max_excursion.max(distance(&smp.q, &q0));
        lp.eval(smp.t * inv_t + 0.5, &mut half);
        let anti = half.iter().zip(&smp.q).map(|(a, b)| (a + b).powi(2)).sum::<f64>().sqrt();
        d.antiperiodicity_error = d.antiperiodicity_error.max(anti);
    }
    let shares = lp.kinetic_by_harmonic();
    let dominant = (0..shares.len()).fold(0, |best, i| if shares[i] > shares[best] { i } else { best });
    d.dominant_harmonic = AntiperiodicLoop::wavenumber(dominant);
    d.possibly_non_minimal = d.dominant_harmonic > 1;

    let kinetic = kinetic_norm(lp);
    Ok(OrbitSolution {
        period,
        h,
        f_star: kinetic * kinetic * inv_t * inv_t / 4.0,
        unit_loop: lp.clone(),
        orbit_samples: samples,
        diagnostics: d,
    })
}

/// [`recover_period`] followed by [`rescale`].
pub fn orbit_from_loop<P: Potential + ?Sized>(
    lp: &AntiperiodicLoop,
    h: f64,
    model: &P,
    grid: &SampleGrid,
    out_samples: usize,
) -> Result<OrbitSolution> {
    let period = recover_period(lp, model, grid)?;
    rescale(lp, period, h, model, out_samples)
}

fn distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
}

/// Integrates `q'' = -V'(q)` over one period from the orbit's initial state
/// with Stormer-Verlet and returns the diagnostics with closure and drift filled.
pub fn verify_by_integration<P: Potential + ?Sized>(
    orbit: &OrbitSolution,
    model: &P,
    steps: usize,
) -> Result<Diagnostics> {
    verify_with(orbit, model, steps, Integrator::StormerVerlet)
}

pub fn verify_with<P: Potential + ?Sized>(
    orbit: &OrbitSolution,
    model: &P,
    steps: usize,
    integrator: Integrator,
) -> Result<Diagnostics> {
    if steps < MIN_STEPS {
        return Err(Error::InvalidParameter(format!("steps must be at least {MIN_STEPS}, got {steps}")));
    }
    let first = orbit.orbit_samples.first().ok_or_else(|| Error::InvalidParameter("orbit has no samples".into()))?;
    if first.q.len() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: first.q.len() });
    }
    let dt = orbit.period / steps as f64;
    let mut state = Phase::new(first.q.clone(), first.v.clone());
    let energy = |s: &Phase| (0.5 * dot(&s.v, &s.v) + model.value(&s.q) - orbit.h).abs();
    let mut drift = energy(&state);
    for step in 1..=steps {
        match integrator {
            Integrator::StormerVerlet => state.verlet(model, dt),
            Integrator::Rk4 => state.rk4(model, dt),
        }
        let norm = dot(&state.q, &state.q).sqrt();
        if !(norm <= BLOWUP_RADIUS) {
            return Err(Error::IntegratorBlowup { step, norm });
        }
        drift = drift.max(energy(&state));
    }
    let mut d = orbit.diagnostics.clone();
    d.closure_error = Some(distance(&state.q, &first.q) + distance(&state.v, &first.v));
    d.integrator_energy_drift = Some(drift);
    d.integrator = Some(integrator);
    d.steps = Some(steps);
    Ok(d)
}

impl OrbitSolution {
    /// Runs [`verify_with`] and stores the result.
    pub fn verify<P: Potential + ?Sized>(&mut self, model: &P, steps: usize, integrator: Integrator) -> Result<()> {
        self.diagnostics = verify_with(self, model, steps, integrator)?;
        Ok(())
    }

    /// Writes `t,q1..qn,v1..vn` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let dim = self.unit_loop.dim();
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain((1..=dim).map(|i| format!("q{i}")))
            .chain((1..=dim).map(|i| format!("v{i}")))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for s in &self.orbit_samples {
            let row: Vec<String> =
                std::iter::once(s.t).chain(s.q.iter().copied()).chain(s.v.iter().copied()).map(sig17).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Scientific notation with 17 significant digits, enough to round-trip any `f64`.
pub fn sig17(x: f64) -> String {
    format!("{x:.16e}")
}

struct Phase {
    q: Vec<f64>,
    v: Vec<f64>,
    force: Vec<f64>,
}

impl Phase {
    fn new(q: Vec<f64>, v: Vec<f64>) -> Self {
        let force = vec![0.0; q.len()];
        Phase { q, v, force }
    }

    fn verlet<P: Potential + ?Sized>(&mut self, model: &P, dt: f64) {
        model.gradient(&self.q, &mut self.force);
        for (v, f) in self.v.iter_mut().zip(&self.force) {
            *v -= 0.5 * dt * f;
        }
        for (q, v) in self.q.iter_mut().zip(&self.v) {
            *q += dt * v;
        }
        model.gradient(&self.q, &mut self.force);
        for (v, f) in self.v.iter_mut().zip(&self.force) {
            *v -= 0.5 * dt * f;
        }
    }

    fn rk4<P: Potential + ?Sized>(&mut self, model: &P, dt: f64) {
        let n = self.q.len();
        let accel = |q: &[f64], out: &mut [f64]| {
            model.gradient(q, out);
            out.iter_mut().for_each(|x| *x = -*x);
        };
        let shifted =
            |base: &[f64], d: &[f64], s: f64| -> Vec<f64> { base.iter().zip(d).map(|(b, x)| b + s * x).collect() };
        let mut a = vec![0.0; n];

        let k1q = self.v.clone();
        accel(&self.q, &mut a);
        let k1v = a.clone();
        let k2q = shifted(&self.v, &k1v, 0.5 * dt);
        accel(&shifted(&self.q, &k1q, 0.5 * dt), &mut a);
        let k2v = a.clone();
        let k3q = shifted(&self.v, &k2v, 0.5 * dt);
        accel(&shifted(&self.q, &k2q, 0.5 * dt), &mut a);
        let k3v = a.clone();
        let k4q = shifted(&self.v, &k3v, dt);
        accel(&shifted(&self.q, &k3q, dt), &mut a);
        let k4v = a;
        for i in 0..n {
            self.q[i] += dt / 6.0 * (k1q[i] + 2.0 * k2q[i] + 2.0 * k3q[i] + k4q[i]);
            self.v[i] += dt / 6.0 * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i]);
        }
    }
}
