//! Projected gradient descent on the constraint level set `g(u) = h`.
//!
//! Each iteration projects the gradient of `f` onto the tangent space of the
//! level set, takes an Armijo backtracking step along it, and retracts the
//! trial point back onto the level set by the radial scaling `u -> a(u) u`.
//! Independent random starts can be run in parallel; the best converged
//! minimum is reported.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loop_space::{kinetic_norm, min_nodes, random_loop, AntiperiodicLoop, SampleGrid};
use crate::potentials::Potential;
use crate::variational::{evaluate, project_to_constraint, tangent_project_in, ConstraintSpec, Evaluation, Metric};
use crate::variational::{ProjectionResult, DEFAULT_PROJECTION_TOL};

/// Kinetic norm above which a run is declared divergent.
const DIVERGENCE_KINETIC: f64 = 1e12;
/// Random starts whose kinetic norm falls below this are redrawn.
const DEGENERATE_START: f64 = 1e-12;
const MAX_REDRAWS: u64 = 16;
const MIN_SPECTRAL_STEP: f64 = 1e-10;
const MAX_SPECTRAL_STEP: f64 = 1e10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Gradient,
    /// Polak-Ribiere+ nonlinear conjugate gradient with restarts.
    ConjugateGradient,
}

fn d_k() -> usize {
    15
}
fn d_n() -> usize {
    128
}
fn d_h() -> f64 {
    1.0
}
fn d_grad_tol() -> f64 {
    1e-8
}
fn d_max_iters() -> usize {
    5000
}
fn d_armijo() -> f64 {
    1e-4
}
fn d_backtrack() -> f64 {
    0.5
}
fn d_step() -> f64 {
    1.0
}
fn d_starts() -> usize {
    8
}
fn d_decay() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// Highest (odd) harmonic.
    #[serde(rename = "K", default = "d_k")]
    pub k_max: usize,
    /// Quadrature nodes.
    #[serde(rename = "N", default = "d_n")]
    pub nodes: usize,
    #[serde(default = "d_h")]
    pub h: f64,
    #[serde(default = "d_grad_tol")]
    pub grad_tol: f64,
    #[serde(default = "d_max_iters")]
    pub max_iters: usize,
    #[serde(default = "d_armijo")]
    pub armijo_c: f64,
    #[serde(default = "d_backtrack")]
    pub backtrack: f64,
    #[serde(default = "d_step")]
    pub step_init: f64,
    #[serde(default = "d_starts")]
    pub starts: usize,
    #[serde(default)]
    pub seed: u64,
    /// Use the Sobolev metric instead of the Euclidean one.
    #[serde(default)]
    pub precondition: bool,
    #[serde(default)]
    pub method: Method,
    /// Geometric decay of random initial coefficients per harmonic.
    #[serde(default = "d_decay")]
    pub init_decay: f64,
    /// Absolute tolerance on `|g - h|`; defaults to `1e-12 max(1, |h|)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projection_tol: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            k_max: d_k(),
            nodes: d_n(),
            h: d_h(),
            grad_tol: d_grad_tol(),
            max_iters: d_max_iters(),
            armijo_c: d_armijo(),
            backtrack: d_backtrack(),
            step_init: d_step(),
            starts: d_starts(),
            seed: 0,
            precondition: false,
            method: Method::Gradient,
            init_decay: d_decay(),
            projection_tol: None,
        }
    }
}

impl SolverConfig {
    /// Config for harmonics up to `k_max` with the default `8 (K + 1)` nodes.
    pub fn with_harmonics(h: f64, k_max: usize) -> Self {
        Self { h, k_max, nodes: 8 * (k_max + 1), ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.k_max.is_multiple_of(2) {
            return bad(format!("K must be odd and positive, got {}", self.k_max));
        }
        if self.nodes < min_nodes(self.k_max) {
            return Err(Error::GridTooCoarse { n: self.nodes, k_max: self.k_max, required: min_nodes(self.k_max) });
        }
        if !self.h.is_finite() {
            return bad(format!("h must be finite, got {}", self.h));
        }
        if !(self.grad_tol > 0.0) {
            return bad(format!("grad_tol must be positive, got {}", self.grad_tol));
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return bad(format!("armijo_c must lie in (0, 1), got {}", self.armijo_c));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return bad(format!("backtrack must lie in (0, 1), got {}", self.backtrack));
        }
        if !(self.step_init > 0.0) {
            return bad(format!("step_init must be positive, got {}", self.step_init));
        }
        if self.starts < 1 {
            return bad("starts must be at least 1".into());
        }
        if !(self.init_decay > 0.0 && self.init_decay <= 1.0) {
            return bad(format!("init_decay must lie in (0, 1], got {}", self.init_decay));
        }
        if let Some(tol) = self.projection_tol {
            if !(tol > 0.0) {
                return bad(format!("projection_tol must be positive, got {tol}"));
            }
        }
        Ok(())
    }

    pub fn constraint(&self) -> ConstraintSpec {
        let tol = self.projection_tol.unwrap_or(DEFAULT_PROJECTION_TOL * self.h.abs().max(1.0));
        ConstraintSpec { h: self.h, tol }
    }

    pub fn metric(&self) -> Metric {
        if self.precondition {
            Metric::Sobolev
        } else {
            Metric::Euclidean
        }
    }

    pub fn grid(&self) -> Result<SampleGrid> {
        SampleGrid::new(self.nodes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    MaxIterations,
    /// Line search could not make progress at machine-level step size.
    Stalled,
    /// Kinetic norm grew without bound.
    Diverged,
    /// Final loop has `f <= 0` or is numerically constant.
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub f: f64,
    pub grad_norm: f64,
    /// Step accepted to leave this iterate (0 for the last one).
    pub step: f64,
    pub g_residual: f64,
    pub kinetic: f64,
    /// `int V'(u).u`
    pub force: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub converged: bool,
    pub status: Status,
    pub iterations: usize,
    pub f_star: f64,
    #[serde(rename = "loop")]
    pub minimizer: AntiperiodicLoop,
    pub grad_norm: f64,
    pub g_residual: f64,
    pub kinetic: f64,
    pub force: f64,
    pub start_seed: u64,
    pub last_projection: ProjectionResult,
    pub history: Vec<HistoryEntry>,
}

fn at(iteration: usize) -> impl FnOnce(Error) -> Error {
    move |e| Error::AtIteration { iteration, source: Box::new(e) }
}

/// Random start with seed `seed`, redrawn if numerically zero.
fn initial_loop(config: &SolverConfig, dim: usize, seed: u64) -> Result<AntiperiodicLoop> {
    for redraw in 0..MAX_REDRAWS {
        let lp = random_loop(seed.wrapping_add(redraw << 32), config.k_max, dim, config.init_decay)?;
        if kinetic_norm(&lp) >= DEGENERATE_START {
            return Ok(lp);
        }
    }
    Err(Error::DegenerateLoop)
}

/// Runs one start from the random loop seeded with `config.seed`.
pub fn minimize<P: Potential + ?Sized>(config: &SolverConfig, model: &P) -> Result<SolverReport> {
    config.validate()?;
    let start = initial_loop(config, model.dim(), config.seed)?;
    minimize_from(config, model, start)
}

struct Iterate {
    u: AntiperiodicLoop,
    eval: Evaluation,
    dir: AntiperiodicLoop,
    grad_norm: f64,
    projection: ProjectionResult,
}

/// Barzilai-Borwein length `<s, s> / <s, y>` in the descent metric, where `s` is
/// the last displacement and `y` the change in the projected gradient.
fn spectral_step(metric: Metric, prev: &Iterate, next: &Iterate) -> Option<f64> {
    let mut s = next.u.clone();
    s.axpy(-1.0, &prev.u);
    let mut y = next.dir.clone();
    y.axpy(-1.0, &prev.dir);
    let sy = metric.inner(&s, &y);
    let ss = metric.inner(&s, &s);
    let t = ss / sy;
    (sy > 0.0 && t.is_finite()).then(|| t.clamp(MIN_SPECTRAL_STEP, MAX_SPECTRAL_STEP))
}

/// Runs one start from an explicit initial loop (projected onto the level set first).
pub fn minimize_from<P: Potential + ?Sized>(
    config: &SolverConfig,
    model: &P,
    start: AntiperiodicLoop,
) -> Result<SolverReport> {
    config.validate()?;
    let start = if start.k_max() == config.k_max { start } else { start.with_k_max(config.k_max)? };
    let grid = config.grid()?;
    let spec = config.constraint();
    let metric = config.metric();

    let make_iterate = |u: AntiperiodicLoop, projection: ProjectionResult, iteration: usize| -> Result<Iterate> {
        let eval = evaluate(&u, model, &grid).map_err(at(iteration))?;
        let dir = tangent_project_in(metric, &eval.grad_f, &eval.grad_g).map_err(at(iteration))?;
        let grad_norm = metric.norm(&dir);
        Ok(Iterate { u, eval, dir, grad_norm, projection })
    };

    let p0 = project_to_constraint(&start, model, &spec, &grid).map_err(at(0))?;
    let mut cur = make_iterate(start.scaled(p0.a), p0, 0)?;
    let mut history = Vec::new();
    let mut search = cur.dir.clone();
    let mut trial_step = config.step_init;
    let noise = |f: f64| 64.0 * f64::EPSILON * f.abs().max(1.0);

    let mut iteration = 0;
    let status = loop {
        let entry = HistoryEntry {
            f: cur.eval.f,
            grad_norm: cur.grad_norm,
            step: 0.0,
            g_residual: (cur.eval.g - spec.h).abs(),
            kinetic: cur.eval.kinetic,
            force: cur.eval.force,
        };
        history.push(entry);
        if cur.grad_norm <= config.grad_tol * cur.eval.f.abs().max(1.0) {
            break Status::Converged;
        }
        if cur.eval.kinetic > DIVERGENCE_KINETIC {
            break Status::Diverged;
        }
        if iteration >= config.max_iters {
            break Status::MaxIterations;
        }
        iteration += 1;

        let mut slope = cur.eval.grad_f.dot(&search);
        if !(slope > 0.0) {
            search = cur.dir.clone();
            slope = cur.grad_norm * cur.grad_norm;
        }

        let mut t = trial_step;
        let accepted = loop {
            if t * search.norm() <= f64::EPSILON * cur.u.norm() {
                if search == cur.dir {
                    break None;
                }
                // a failed conjugate direction falls back to steepest descent
                search = cur.dir.clone();
                slope = cur.grad_norm * cur.grad_norm;
                t = trial_step;
                continue;
            }
            let mut cand = cur.u.clone();
            cand.axpy(-t, &search);
            match project_to_constraint(&cand, model, &spec, &grid) {
                Ok(p) => {
                    let next = make_iterate(cand.scaled(p.a), p, iteration)?;
                    let decrease = cur.eval.f - next.eval.f;
                    if decrease >= config.armijo_c * t * slope {
                        break Some(next);
                    }
                    // Below the rounding floor of f the Armijo test is meaningless;
                    // accept steps that still shrink the projected gradient.
                    if decrease.abs() <= noise(cur.eval.f) && next.grad_norm < cur.grad_norm {
                        break Some(next);
                    }
                }
                Err(e @ Error::NonMonotoneScaling { .. }) => return Err(at(iteration)(e)),
                Err(_) => {}
            }
            t *= config.backtrack;
        };
        let Some(next) = accepted else {
            break Status::Stalled;
        };
        history.last_mut().unwrap().step = t;
        trial_step = spectral_step(metric, &cur, &next).unwrap_or(t / config.backtrack);

        search = match config.method {
            Method::Gradient => next.dir.clone(),
            Method::ConjugateGradient => {
                // PR+ in the descent metric, previous direction moved to the new tangent space
                let raised_g = metric.raise(&next.eval.grad_g);
                let mut moved = search.clone();
                moved.axpy(-next.eval.grad_g.dot(&moved) / next.eval.grad_g.dot(&raised_g), &raised_g);
                let prev_sq = cur.grad_norm * cur.grad_norm;
                let overlap = next.eval.grad_f.dot(&cur.dir);
                let beta = ((next.grad_norm * next.grad_norm - overlap) / prev_sq).max(0.0);
                let mut s = next.dir.clone();
                s.axpy(beta, &moved);
                s
            }
        };
        cur = next;
    };

    let degenerate = !(cur.eval.f > 0.0) || cur.eval.kinetic <= 1e-8;
    let status = if degenerate { Status::Degenerate } else { status };
    Ok(SolverReport {
        converged: status == Status::Converged,
        status,
        iterations: iteration,
        f_star: cur.eval.f,
        grad_norm: cur.grad_norm,
        g_residual: (cur.eval.g - spec.h).abs(),
        kinetic: cur.eval.kinetic,
        force: cur.eval.force,
        start_seed: config.seed,
        last_projection: cur.projection,
        minimizer: cur.u,
        history,
    })
}

#[derive(Debug)]
pub struct StartOutcome {
    pub index: usize,
    pub seed: u64,
    pub result: Result<SolverReport>,
}

#[derive(Debug)]
pub struct MultiStartReport {
    pub outcomes: Vec<StartOutcome>,
    /// Index into `outcomes` of the lowest converged `f_star`.
    pub best: Option<usize>,
}

impl MultiStartReport {
    pub fn best(&self) -> Result<&SolverReport> {
        match self.best {
            Some(i) => Ok(self.outcomes[i].result.as_ref().expect("best start converged")),
            None => Err(Error::NoConvergedStart { starts: self.outcomes.len() }),
        }
    }

    pub fn converged(&self) -> impl Iterator<Item = &SolverReport> {
        self.outcomes.iter().filter_map(|o| o.result.as_ref().ok()).filter(|r| r.converged)
    }

    /// True when every start failed because the energy cannot be reached.
    pub fn all_infeasible(&self) -> bool {
        self.outcomes.iter().all(|o| matches!(&o.result, Err(e) if e.is_infeasible_energy()))
    }
}

/// Runs `config.starts` independent starts with seeds `seed, seed + 1, ...`.
///
/// Starts run in parallel; the result does not depend on scheduling.
pub fn multi_start<P: Potential + ?Sized>(config: &SolverConfig, model: &P) -> Result<MultiStartReport> {
    config.validate()?;
    let outcomes: Vec<StartOutcome> = (0..config.starts)
        .into_par_iter()
        .map(|index| {
            let seed = config.seed.wrapping_add(index as u64);
            let cfg = SolverConfig { seed, ..config.clone() };
            StartOutcome { index, seed, result: minimize(&cfg, model) }
        })
        .collect();
    let mut best: Option<usize> = None;
    for (i, o) in outcomes.iter().enumerate() {
        if let Ok(r) = &o.result {
            if !r.converged {
                continue;
            }
            let better = match best {
                None => true,
                Some(b) => r.f_star < outcomes[b].result.as_ref().unwrap().f_star,
            };
            if better {
                best = Some(i);
            }
        }
    }
    Ok(MultiStartReport { outcomes, best })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    #[serde(rename = "K")]
    pub k_max: usize,
    pub f_star: f64,
    #[serde(rename = "K_refined")]
    pub k_refined: usize,
    pub f_star_refined: f64,
    pub converged_refined: bool,
    /// `|f_refined - f| / max(1, |f|)`
    pub drift: f64,
}

/// Re-solves with `2K + 1` harmonics and twice the nodes, warm-started from
/// `report`'s minimizer, and reports how much `f_star` moves.
pub fn convergence_study<P: Potential + ?Sized>(
    config: &SolverConfig,
    model: &P,
    report: &SolverReport,
) -> Result<ConvergenceStudy> {
    let refined = SolverConfig { k_max: 2 * config.k_max + 1, nodes: 2 * config.nodes, ..config.clone() };
    let start = report.minimizer.with_k_max(refined.k_max)?;
    let r = minimize_from(&refined, model, start)?;
    Ok(ConvergenceStudy {
        k_max: config.k_max,
        f_star: report.f_star,
        k_refined: refined.k_max,
        f_star_refined: r.f_star,
        converged_refined: r.converged,
        drift: (r.f_star - report.f_star).abs() / report.f_star.abs().max(1.0),
    })
}
