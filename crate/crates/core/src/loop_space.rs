//! Unit-period loops with `u(t + 1/2) = -u(t)`, stored as truncated
//! trigonometric series over odd harmonics only:
//!
//! `u(t) = sum_{k odd <= K} a_k cos(2 pi k t) + b_k sin(2 pi k t)`.
//!
//! Dropping every even harmonic (including the mean) builds the symmetry in
//! exactly, so no penalty or projection is needed to stay in the class.
//!
//! Gradients of functionals over loops are returned as [`AntiperiodicLoop`]
//! values too; they share the coefficient layout.

use std::f64::consts::TAU;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Anti-aliasing floor: a grid needs at least `4 (K + 1)` nodes.
pub fn min_nodes(k_max: usize) -> usize {
    4 * (k_max + 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LoopRepr", into = "LoopRepr")]
pub struct AntiperiodicLoop {
    dim: usize,
    k_max: usize,
    /// Harmonic `k = 2i + 1` occupies `[a_k | b_k]` at offset `2 dim i`.
    coeffs: Vec<f64>,
}

impl AntiperiodicLoop {
    pub fn zeros(dim: usize, k_max: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("loop dimension must be positive".into()));
        }
        if k_max.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!("highest harmonic K must be odd and positive, got {k_max}")));
        }
        Ok(Self { dim, k_max, coeffs: vec![0.0; dim * (k_max + 1)] })
    }

    pub fn from_coeffs(dim: usize, k_max: usize, coeffs: Vec<f64>) -> Result<Self> {
        let mut out = Self::zeros(dim, k_max)?;
        if coeffs.len() != out.coeffs.len() {
            return Err(Error::DimensionMismatch { expected: out.coeffs.len(), got: coeffs.len() });
        }
        out.coeffs = coeffs;
        Ok(out)
    }

    /// `u(t) = a cos(2 pi t) + b sin(2 pi t)`.
    pub fn fundamental(a: &[f64], b: &[f64]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch { expected: a.len(), got: b.len() });
        }
        let mut out = Self::zeros(a.len(), 1)?;
        out.a_mut(0).copy_from_slice(a);
        out.b_mut(0).copy_from_slice(b);
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Highest harmonic `K`.
    pub fn k_max(&self) -> usize {
        self.k_max
    }

    /// Number of odd harmonics `1, 3, ..., K`.
    pub fn harmonics(&self) -> usize {
        self.k_max.div_ceil(2)
    }

    /// Wavenumber of harmonic slot `i`.
    pub fn wavenumber(i: usize) -> usize {
        2 * i + 1
    }

    pub fn a(&self, i: usize) -> &[f64] {
        let o = 2 * self.dim * i;
        &self.coeffs[o..o + self.dim]
    }

    pub fn b(&self, i: usize) -> &[f64] {
        let o = 2 * self.dim * i + self.dim;
        &self.coeffs[o..o + self.dim]
    }

    pub fn a_mut(&mut self, i: usize) -> &mut [f64] {
        let o = 2 * self.dim * i;
        &mut self.coeffs[o..o + self.dim]
    }

    pub fn b_mut(&mut self, i: usize) -> &mut [f64] {
        let o = 2 * self.dim * i + self.dim;
        &mut self.coeffs[o..o + self.dim]
    }

    /// The `[a_k | b_k]` block of slot `i`.
    pub fn block(&self, i: usize) -> &[f64] {
        let o = 2 * self.dim * i;
        &self.coeffs[o..o + 2 * self.dim]
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.dim == other.dim && self.k_max == other.k_max
    }

    pub fn dot(&self, other: &Self) -> f64 {
        debug_assert!(self.same_shape(other));
        self.coeffs.iter().zip(&other.coeffs).map(|(x, y)| x * y).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|c| *c *= s);
        out
    }

    /// `self += alpha * x`.
    pub fn axpy(&mut self, alpha: f64, x: &Self) {
        debug_assert!(self.same_shape(x));
        for (c, xi) in self.coeffs.iter_mut().zip(&x.coeffs) {
            *c += alpha * xi;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    /// Copy with highest harmonic `k_max`, truncating or zero-padding.
    pub fn with_k_max(&self, k_max: usize) -> Result<Self> {
        let mut out = Self::zeros(self.dim, k_max)?;
        let n = out.coeffs.len().min(self.coeffs.len());
        out.coeffs[..n].copy_from_slice(&self.coeffs[..n]);
        Ok(out)
    }

    /// Per-harmonic share `(2 pi k)^2 (|a_k|^2 + |b_k|^2) / 2` of the kinetic norm.
    pub fn kinetic_by_harmonic(&self) -> Vec<f64> {
        (0..self.harmonics())
            .map(|i| {
                let w = TAU * Self::wavenumber(i) as f64;
                0.5 * w * w * self.block(i).iter().map(|c| c * c).sum::<f64>()
            })
            .collect()
    }

    fn eval_with(&self, t: f64, out: &mut [f64], order: u32) {
        out.fill(0.0);
        for i in 0..self.harmonics() {
            let k = Self::wavenumber(i) as f64;
            let w = TAU * k;
            let (s, c) = (w * t).sin_cos();
            // d^m/dt^m of (a cos + b sin): rotate by m quarter turns and scale by w^m
            let (ca, cb) = match order % 4 {
                0 => (c, s),
                1 => (-s, c),
                2 => (-c, -s),
                _ => (s, -c),
            };
            let scale = w.powi(order as i32);
            for ((o, a), b) in out.iter_mut().zip(self.a(i)).zip(self.b(i)) {
                *o += scale * (a * ca + b * cb);
            }
        }
    }

    /// `u(t)` at an arbitrary time.
    pub fn eval(&self, t: f64, out: &mut [f64]) {
        self.eval_with(t, out, 0)
    }

    /// `u'(t)`.
    pub fn eval_velocity(&self, t: f64, out: &mut [f64]) {
        self.eval_with(t, out, 1)
    }

    /// `u''(t)`.
    pub fn eval_acceleration(&self, t: f64, out: &mut [f64]) {
        self.eval_with(t, out, 2)
    }
}

#[derive(Serialize, Deserialize)]
struct HarmonicRepr {
    k: usize,
    a: Vec<f64>,
    b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct LoopRepr {
    dim: usize,
    #[serde(rename = "K")]
    k_max: usize,
    coeffs: Vec<HarmonicRepr>,
}

impl From<AntiperiodicLoop> for LoopRepr {
    fn from(l: AntiperiodicLoop) -> Self {
        let coeffs = (0..l.harmonics())
            .map(|i| HarmonicRepr { k: AntiperiodicLoop::wavenumber(i), a: l.a(i).to_vec(), b: l.b(i).to_vec() })
            .collect();
        LoopRepr { dim: l.dim, k_max: l.k_max, coeffs }
    }
}

impl TryFrom<LoopRepr> for AntiperiodicLoop {
    type Error = Error;

    fn try_from(r: LoopRepr) -> Result<Self> {
        let mut out = AntiperiodicLoop::zeros(r.dim, r.k_max)?;
        for h in r.coeffs {
            if h.k % 2 == 0 || h.k > r.k_max {
                return Err(Error::InvalidParameter(format!(
                    "harmonic k = {} not representable with K = {}",
                    h.k, r.k_max
                )));
            }
            if h.a.len() != r.dim || h.b.len() != r.dim {
                return Err(Error::DimensionMismatch { expected: r.dim, got: h.a.len().max(h.b.len()) });
            }
            let i = (h.k - 1) / 2;
            out.a_mut(i).copy_from_slice(&h.a);
            out.b_mut(i).copy_from_slice(&h.b);
        }
        Ok(out)
    }
}

/// Uniform nodes `t_j = j / N` with weight `1/N`, plus cached trig tables.
#[derive(Debug, Clone)]
pub struct SampleGrid {
    n: usize,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl SampleGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("grid needs at least one node".into()));
        }
        let (sin, cos) = (0..n).map(|m| (TAU * m as f64 / n as f64).sin_cos()).unzip();
        Ok(Self { n, cos, sin })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn node(&self, j: usize) -> f64 {
        j as f64 / self.n as f64
    }

    pub fn check(&self, k_max: usize) -> Result<()> {
        let required = min_nodes(k_max);
        if self.n < required {
            return Err(Error::GridTooCoarse { n: self.n, k_max, required });
        }
        Ok(())
    }

    /// `(cos, sin)(2 pi k t_j)`.
    #[inline]
    fn trig(&self, k: usize, j: usize) -> (f64, f64) {
        let m = (k * j) % self.n;
        (self.cos[m], self.sin[m])
    }
}

/// `N x dim` samples stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSamples {
    dim: usize,
    data: Vec<f64>,
}

impl GridSamples {
    pub fn zeros(n: usize, dim: usize) -> Self {
        Self { dim, data: vec![0.0; n * dim] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.data[j * self.dim..(j + 1) * self.dim]
    }

    pub fn row_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.dim..(j + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

fn synthesize_order(lp: &AntiperiodicLoop, grid: &SampleGrid, order: u32) -> Result<GridSamples> {
    grid.check(lp.k_max)?;
    let mut out = GridSamples::zeros(grid.n, lp.dim);
    for i in 0..lp.harmonics() {
        let k = AntiperiodicLoop::wavenumber(i);
        let w = TAU * k as f64;
        let scale = w.powi(order as i32);
        let (a, b) = (lp.a(i), lp.b(i));
        for j in 0..grid.n {
            let (c, s) = grid.trig(k, j);
            let (ca, cb) = match order {
                0 => (c, s),
                1 => (-s, c),
                _ => (-c, -s),
            };
            for ((o, ai), bi) in out.row_mut(j).iter_mut().zip(a).zip(b) {
                *o += scale * (ai * ca + bi * cb);
            }
        }
    }
    Ok(out)
}

/// `u(t_j)` for all nodes.
pub fn synthesize(lp: &AntiperiodicLoop, grid: &SampleGrid) -> Result<GridSamples> {
    synthesize_order(lp, grid, 0)
}

/// `u'(t_j)` for all nodes.
pub fn synthesize_velocity(lp: &AntiperiodicLoop, grid: &SampleGrid) -> Result<GridSamples> {
    synthesize_order(lp, grid, 1)
}

/// `u''(t_j)` for all nodes.
pub fn synthesize_acceleration(lp: &AntiperiodicLoop, grid: &SampleGrid) -> Result<GridSamples> {
    synthesize_order(lp, grid, 2)
}

/// `int_0^1 |u'|^2 dt`, exactly, by Parseval.
pub fn kinetic_norm(lp: &AntiperiodicLoop) -> f64 {
    lp.kinetic_by_harmonic().iter().sum()
}

/// Exact gradient of [`kinetic_norm`]: `(2 pi k)^2 a_k`, `(2 pi k)^2 b_k`.
pub fn kinetic_gradient(lp: &AntiperiodicLoop) -> AntiperiodicLoop {
    let mut g = lp.clone();
    for i in 0..lp.harmonics() {
        let w = TAU * AntiperiodicLoop::wavenumber(i) as f64;
        let o = 2 * lp.dim * i;
        g.coeffs[o..o + 2 * lp.dim].iter_mut().for_each(|c| *c *= w * w);
    }
    g
}

/// `(1/N) sum_j values[j]`.
pub fn quadrature(values: &[f64], grid: &SampleGrid) -> f64 {
    debug_assert_eq!(values.len(), grid.n);
    values.iter().sum::<f64>() / grid.n as f64
}

/// Adjoint of [`synthesize`]: the coefficient gradient of
/// `v -> quadrature(<w, v(t_j)>)`. Since `(1/N) sum cos^2 = 1/2`, applying it
/// to the samples of a loop returns half that loop's coefficients.
pub fn coefficient_adjoint(w: &GridSamples, grid: &SampleGrid, k_max: usize) -> Result<AntiperiodicLoop> {
    grid.check(k_max)?;
    if w.len() != grid.n {
        return Err(Error::DimensionMismatch { expected: grid.n, got: w.len() });
    }
    let dim = w.dim();
    let mut g = AntiperiodicLoop::zeros(dim, k_max)?;
    let inv_n = 1.0 / grid.n as f64;
    for i in 0..g.harmonics() {
        let k = AntiperiodicLoop::wavenumber(i);
        let o = 2 * dim * i;
        let block = &mut g.coeffs[o..o + 2 * dim];
        for j in 0..grid.n {
            let (c, s) = grid.trig(k, j);
            for (d, wd) in w.row(j).iter().enumerate() {
                block[d] += wd * c;
                block[dim + d] += wd * s;
            }
        }
        block.iter_mut().for_each(|x| *x *= inv_n);
    }
    Ok(g)
}

/// Standard normal coefficients, harmonic `k` scaled by `decay^((k-1)/2)`.
pub fn random_loop(seed: u64, k_max: usize, dim: usize, decay: f64) -> Result<AntiperiodicLoop> {
    if !(decay > 0.0 && decay <= 1.0) {
        return Err(Error::InvalidParameter(format!("decay must lie in (0, 1], got {decay}")));
    }
    let mut out = AntiperiodicLoop::zeros(dim, k_max)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..out.harmonics() {
        let s = decay.powi(i as i32);
        let o = 2 * dim * i;
        for c in &mut out.coeffs[o..o + 2 * dim] {
            let z: f64 = StandardNormal.sample(&mut rng);
            *c = s * z;
        }
    }
    Ok(out)
}
