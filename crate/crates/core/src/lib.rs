//! Non-constant periodic orbits of `q'' + V'(q) = 0` with prescribed energy
//! `|q'|^2/2 + V(q) = h`.
//!
//! The orbit is found as a minimizer of
//! `f(u) = 1/4 int |u'|^2 dt * int V'(u).u dt` over unit-period loops with the
//! half-period antisymmetry `u(t + 1/2) = -u(t)`, restricted to the level set
//! `int V(u) + V'(u).u/2 dt = h`. The period is recovered from
//! `T^2 = int |u'|^2 / int V'(u).u`, and `q(t) = u(t/T)`.
//!
//! Module map:
//! - [`potentials`]: potential trait and the builtin families.
//! - [`conditions`]: sampling checks of the structural hypotheses on `V`.
//! - [`loop_space`]: odd-harmonic trigonometric loops and their quadrature.
//! - [`variational`]: the functional, the constraint and the scaling projection.
//! - [`optimizer`]: projected gradient descent with multi-start.
//! - [`orbit`]: period recovery, rescaling and independent verification.
//! - [`cli`]: the command-line front end.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod conditions;
pub mod error;
pub mod loop_space;
pub mod optimizer;
pub mod orbit;
pub mod potentials;
pub mod variational;

pub use error::{Error, Result};
