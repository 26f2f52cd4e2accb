#![allow(dead_code)]

use energy_orbit::loop_space::AntiperiodicLoop;
use energy_orbit::potentials::{make_combined, make_exp_well, make_power_law, Potential};

/// A builtin together with an energy its level set can reach.
pub struct Fixture {
    pub name: &'static str,
    pub model: Box<dyn Potential>,
    pub h: f64,
}

pub fn builtins(dim: usize) -> Vec<Fixture> {
    vec![
        Fixture { name: "power_law", model: Box::new(make_power_law(1.0, 2, dim).unwrap()), h: 3.0 },
        Fixture { name: "exp_well", model: Box::new(make_exp_well(dim).unwrap()), h: 0.5 },
        Fixture { name: "combined", model: Box::new(make_combined(1.0, 1, dim).unwrap()), h: 2.0 },
    ]
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let (mut inv, mut f) = (0.0, 1.0 / base as f64);
    while i > 0 {
        inv += f * (i % base) as f64;
        i /= base;
        f /= base as f64;
    }
    inv
}

/// Halton points in the cube `[-r, r]^dim` (dim <= 6).
pub fn halton_points(count: usize, dim: usize, r: f64) -> Vec<Vec<f64>> {
    const PRIMES: [u64; 6] = [2, 3, 5, 7, 11, 13];
    (1..=count as u64).map(|i| (0..dim).map(|d| r * (2.0 * radical_inverse(i, PRIMES[d]) - 1.0)).collect()).collect()
}

/// Central difference of `f` along each coordinate of `x`.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            let hstep = step * x[i].abs().max(1.0);
            y[i] = x[i] + hstep;
            let up = f(&y);
            y[i] = x[i] - hstep;
            let down = f(&y);
            y[i] = x[i];
            (up - down) / (2.0 * hstep)
        })
        .collect()
}

/// Fourth-order central difference, used where second order is too noisy.
pub fn fd_gradient4(f: impl Fn(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            let hs = step * x[i].abs().max(1.0);
            let mut at = |s: f64| {
                y[i] = x[i] + s * hs;
                let v = f(&y);
                y[i] = x[i];
                v
            };
            (8.0 * (at(1.0) - at(-1.0)) - (at(2.0) - at(-2.0))) / (12.0 * hs)
        })
        .collect()
}

pub fn loop_with(template: &AntiperiodicLoop, coeffs: &[f64]) -> AntiperiodicLoop {
    AntiperiodicLoop::from_coeffs(template.dim(), template.k_max(), coeffs.to_vec()).unwrap()
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(f64::MIN_POSITIVE)
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}
