//! Potential functions `V: R^n -> R` with closed-form first and second
//! derivatives, plus the growth constants used to decide which energies are
//! admissible.
//!
//! Three families are built in: the power law `a|q|^{2n}`, the exponential
//! well `exp(-1/|q|)` (extended by `V(0) = 0`), and their sum.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Below this radius the exponential well and all its derivatives are zero.
const EXP_WELL_CUTOFF: f64 = 1e-300;

/// A smooth potential on `R^dim`.
///
/// Implementors must be pure: the same input always yields the same output,
/// and evaluation may happen concurrently from several threads.
pub trait Potential: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, q: &[f64]) -> f64;

    /// Writes `V'(q)` into `out`.
    fn gradient(&self, q: &[f64], out: &mut [f64]);

    /// Writes `V''(q) v` into `out`.
    fn hess_vec(&self, q: &[f64], v: &[f64], out: &mut [f64]);

    fn label(&self) -> String;

    /// Growth constants certified for this potential, if known.
    fn growth_params(&self) -> Option<GrowthParams> {
        None
    }

    /// `V'(q) . q`.
    fn radial_force(&self, q: &[f64]) -> f64 {
        let mut g = vec![0.0; q.len()];
        self.gradient(q, &mut g);
        dot(&g, q)
    }
}

impl<P: Potential + ?Sized> Potential for Box<P> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, q: &[f64]) -> f64 {
        (**self).value(q)
    }
    fn gradient(&self, q: &[f64], out: &mut [f64]) {
        (**self).gradient(q, out)
    }
    fn hess_vec(&self, q: &[f64], v: &[f64], out: &mut [f64]) {
        (**self).hess_vec(q, v, out)
    }
    fn label(&self) -> String {
        (**self).label()
    }
    fn growth_params(&self) -> Option<GrowthParams> {
        (**self).growth_params()
    }
}

/// Constants `(mu1, mu2, A)` with `V'(q).q >= mu1 V(q) - mu2` and
/// `limsup_{|q|->inf} V(q) + V'(q).q / 2 <= A`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthParams {
    pub mu1: f64,
    pub mu2: f64,
    /// May be `f64::INFINITY`; serialized as the string `"inf"` in that case.
    #[serde(rename = "A", serialize_with = "ser_extended", deserialize_with = "de_extended")]
    pub ceiling: f64,
}

impl GrowthParams {
    pub fn new(mu1: f64, mu2: f64, ceiling: f64) -> Result<Self> {
        if !(mu1 > 0.0) || !mu1.is_finite() {
            return Err(Error::InvalidParameter(format!("mu1 must be positive, got {mu1}")));
        }
        if !(mu2 >= 0.0) || !mu2.is_finite() {
            return Err(Error::InvalidParameter(format!("mu2 must be non-negative, got {mu2}")));
        }
        if ceiling.is_nan() {
            return Err(Error::InvalidParameter("A must not be NaN".into()));
        }
        Ok(Self { mu1, mu2, ceiling })
    }

    /// Lower end of the admissible energy window, `mu2 / mu1`.
    pub fn energy_floor(&self) -> f64 {
        self.mu2 / self.mu1
    }

    /// Open window `(mu2/mu1, A)`; `None` when empty.
    pub fn energy_window(&self) -> Option<(f64, f64)> {
        let lo = self.energy_floor();
        (lo < self.ceiling).then_some((lo, self.ceiling))
    }

    pub fn admits(&self, h: f64) -> bool {
        self.energy_floor() < h && h < self.ceiling
    }

    /// Lower bound on `int V'(u).u` for any loop on the level set `g = h`.
    pub fn force_lower_bound(&self, h: f64) -> f64 {
        (h - self.energy_floor()) / (0.5 + 1.0 / self.mu1)
    }
}

pub(crate) fn ser_extended<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
    } else {
        s.serialize_f64(*v)
    }
}

pub(crate) fn de_extended<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }
    match Repr::deserialize(d)? {
        Repr::Num(v) => Ok(v),
        Repr::Text(s) => match s.trim() {
            "inf" | "+inf" | "infinity" | "+infinity" => Ok(f64::INFINITY),
            "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
            other => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got {other:?}"))),
        },
    }
}

pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn norm_sq(q: &[f64]) -> f64 {
    dot(q, q)
}

/// `V(q) = a |q|^{2n}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerLaw {
    pub a: f64,
    pub n_exp: u32,
    dim: usize,
}

pub fn make_power_law(a: f64, n_exp: u32, dim: usize) -> Result<PowerLaw> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::InvalidParameter(format!("power law coefficient a must be positive, got {a}")));
    }
    if n_exp < 1 {
        return Err(Error::InvalidParameter("power law exponent n_exp must be at least 1".into()));
    }
    if dim < 1 {
        return Err(Error::InvalidParameter("dim must be at least 1".into()));
    }
    Ok(PowerLaw { a, n_exp, dim })
}

impl Potential for PowerLaw {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, q: &[f64]) -> f64 {
        self.a * norm_sq(q).powi(self.n_exp as i32)
    }

    fn gradient(&self, q: &[f64], out: &mut [f64]) {
        let n = self.n_exp as i32;
        let c = 2.0 * n as f64 * self.a * norm_sq(q).powi(n - 1);
        for (o, qi) in out.iter_mut().zip(q) {
            *o = c * qi;
        }
    }

    fn hess_vec(&self, q: &[f64], v: &[f64], out: &mut [f64]) {
        // 2na [ r^{2n-2} v + (2n-2) r^{2n-4} (q.v) q ]
        let n = self.n_exp as i32;
        let r2 = norm_sq(q);
        let scale = 2.0 * n as f64 * self.a;
        let iso = scale * r2.powi(n - 1);
        let aniso = if n >= 2 { scale * (2 * n - 2) as f64 * r2.powi(n - 2) * dot(q, v) } else { 0.0 };
        for ((o, vi), qi) in out.iter_mut().zip(v).zip(q) {
            *o = iso * vi + aniso * qi;
        }
    }

    fn label(&self) -> String {
        format!("power_law(a={}, n_exp={}, dim={})", self.a, self.n_exp, self.dim)
    }

    /// `V'(q).q = 2n V(q)` exactly, so `mu1 = 2n`, `mu2 = 0`; unbounded at infinity.
    fn growth_params(&self) -> Option<GrowthParams> {
        Some(GrowthParams { mu1: 2.0 * self.n_exp as f64, mu2: 0.0, ceiling: f64::INFINITY })
    }
}

/// `V(q) = exp(-1/|q|)` for `q != 0`, `V(0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpWell {
    dim: usize,
}

pub fn make_exp_well(dim: usize) -> Result<ExpWell> {
    if dim < 1 {
        return Err(Error::InvalidParameter("dim must be at least 1".into()));
    }
    Ok(ExpWell { dim })
}

impl ExpWell {
    /// `(|q|, exp(-1/|q|))`, or `None` inside the cutoff where everything vanishes.
    fn radial(q: &[f64]) -> Option<(f64, f64)> {
        let r = norm_sq(q).sqrt();
        if r < EXP_WELL_CUTOFF {
            return None;
        }
        let e = (-1.0 / r).exp();
        (e > 0.0).then_some((r, e))
    }
}

impl Potential for ExpWell {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, q: &[f64]) -> f64 {
        Self::radial(q).map_or(0.0, |(_, e)| e)
    }

    fn gradient(&self, q: &[f64], out: &mut [f64]) {
        let c = Self::radial(q).map_or(0.0, |(r, e)| e / (r * r * r));
        for (o, qi) in out.iter_mut().zip(q) {
            *o = c * qi;
        }
    }

    fn hess_vec(&self, q: &[f64], v: &[f64], out: &mut [f64]) {
        // e/r^3 v + e (1 - 3r)/r^6 (q.v) q
        let (iso, aniso) = match Self::radial(q) {
            Some((r, e)) => {
                let r3 = r * r * r;
                (e / r3, e * (1.0 - 3.0 * r) / (r3 * r3) * dot(q, v))
            }
            None => (0.0, 0.0),
        };
        for ((o, vi), qi) in out.iter_mut().zip(v).zip(q) {
            *o = iso * vi + aniso * qi;
        }
    }

    fn label(&self) -> String {
        format!("exp_well(dim={})", self.dim)
    }

    fn growth_params(&self) -> Option<GrowthParams> {
        Some(GrowthParams { mu1: 1.0, mu2: 1.0, ceiling: 1.0 })
    }
}

/// `a|q|^{2n} + exp(-1/|q|)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Combined {
    pub power: PowerLaw,
    pub well: ExpWell,
}

pub fn make_combined(a: f64, n_exp: u32, dim: usize) -> Result<Combined> {
    Ok(Combined { power: make_power_law(a, n_exp, dim)?, well: make_exp_well(dim)? })
}

impl Potential for Combined {
    fn dim(&self) -> usize {
        self.power.dim
    }

    fn value(&self, q: &[f64]) -> f64 {
        self.power.value(q) + self.well.value(q)
    }

    fn gradient(&self, q: &[f64], out: &mut [f64]) {
        let mut tmp = vec![0.0; q.len()];
        self.power.gradient(q, out);
        self.well.gradient(q, &mut tmp);
        for (o, t) in out.iter_mut().zip(&tmp) {
            *o += t;
        }
    }

    fn hess_vec(&self, q: &[f64], v: &[f64], out: &mut [f64]) {
        let mut tmp = vec![0.0; q.len()];
        self.power.hess_vec(q, v, out);
        self.well.hess_vec(q, v, &mut tmp);
        for (o, t) in out.iter_mut().zip(&tmp) {
            *o += t;
        }
    }

    fn label(&self) -> String {
        format!("combined(a={}, n_exp={}, dim={})", self.power.a, self.power.n_exp, self.power.dim)
    }

    /// The well's certificate `mu1 = mu2 = 1` also covers the power term,
    /// since `V'q = 2nV >= V` there; the power term makes `A` infinite.
    fn growth_params(&self) -> Option<GrowthParams> {
        Some(GrowthParams { mu1: 1.0, mu2: 1.0, ceiling: f64::INFINITY })
    }
}

/// Name-based selection of a builtin, as used by configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_exp: Option<u32>,
    pub dim: usize,
}

impl PotentialSpec {
    pub fn build(&self) -> Result<Box<dyn Potential>> {
        let need_a = || {
            self.a.ok_or_else(|| Error::InvalidParameter(format!("potential '{}' requires parameter 'a'", self.name)))
        };
        let need_n = || {
            self.n_exp
                .ok_or_else(|| Error::InvalidParameter(format!("potential '{}' requires parameter 'n_exp'", self.name)))
        };
        Ok(match self.name.as_str() {
            "power_law" => Box::new(make_power_law(need_a()?, need_n()?, self.dim)?),
            "exp_well" => Box::new(make_exp_well(self.dim)?),
            "combined" => Box::new(make_combined(need_a()?, need_n()?, self.dim)?),
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown potential '{other}' (expected power_law, exp_well or combined)"
                )))
            }
        })
    }
}
