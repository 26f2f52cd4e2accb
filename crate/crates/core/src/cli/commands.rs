//! The four subcommands. Each returns an [`Outcome`] instead of exiting, so they
//! can be driven from tests.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::config::{ConfigError, RunConfig};
use super::json;
use crate::conditions::{check_conditions, ConditionReport};
use crate::loop_space::AntiperiodicLoop;
use crate::optimizer::{
    convergence_study, multi_start, ConvergenceStudy, HistoryEntry, MultiStartReport, SolverConfig, Status,
};
use crate::orbit::{
    orbit_from_loop, recover_period, rescale, sig17, verify_with, Diagnostics, OrbitSolution, Thresholds,
};
use crate::potentials::Potential;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NO_CONVERGENCE: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_HYPOTHESIS: i32 = 4;

pub const SUMMARY_FILE: &str = "summary.json";
pub const ORBIT_FILE: &str = "orbit.csv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const CHECK_FILE: &str = "conditions.json";

/// Exit code plus the text shown to the user (stdout on success, stderr otherwise).
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub code: i32,
    pub message: String,
}

impl Outcome {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Outcome { code, message: message.into() }
    }
}

impl From<ConfigError> for Outcome {
    fn from(e: ConfigError) -> Self {
        Outcome::new(EXIT_CONFIG, format!("config error: {e}"))
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Outcome {
    Outcome::new(EXIT_CONFIG, format!("cannot write {}: {e}", path.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestSummary {
    pub f_star: f64,
    #[serde(rename = "T")]
    pub period: f64,
    pub h: f64,
    pub grad_norm: f64,
    pub g_residual: f64,
    pub iterations: usize,
    pub start_seed: u64,
    #[serde(rename = "loop")]
    pub unit_loop: AntiperiodicLoop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartSummary {
    pub index: usize,
    pub seed: u64,
    pub status: Option<Status>,
    pub iterations: Option<usize>,
    pub f_star: Option<f64>,
    pub grad_norm: Option<f64>,
    pub g_residual: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config: RunConfig,
    pub condition_report: ConditionReport,
    pub best: Option<BestSummary>,
    pub diagnostics: Option<Diagnostics>,
    pub thresholds: Thresholds,
    pub breaches: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence_study: Option<ConvergenceStudy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub history: Option<Vec<HistoryEntry>>,
    pub all_starts: Vec<StartSummary>,
    /// Seconds since the Unix epoch; the only field that differs between identical runs.
    pub timestamp: u64,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn start_summaries(ms: &MultiStartReport) -> Vec<StartSummary> {
    ms.outcomes
        .iter()
        .map(|o| match &o.result {
            Ok(r) => StartSummary {
                index: o.index,
                seed: o.seed,
                status: Some(r.status),
                iterations: Some(r.iterations),
                f_star: Some(r.f_star),
                grad_norm: Some(r.grad_norm),
                g_residual: Some(r.g_residual),
                error: None,
            },
            Err(e) => StartSummary {
                index: o.index,
                seed: o.seed,
                status: None,
                iterations: None,
                f_star: None,
                grad_norm: None,
                g_residual: None,
                error: Some(e.to_string()),
            },
        })
        .collect()
}

/// Result of solving and verifying at one energy.
struct Solved {
    ms: MultiStartReport,
    orbit: Option<OrbitSolution>,
    breaches: Vec<String>,
    code: i32,
    message: String,
}

fn solve_one(cfg: &RunConfig, solver: &SolverConfig, model: &dyn Potential) -> Result<Solved, Outcome> {
    let ms = multi_start(solver, model).map_err(|e| Outcome::new(EXIT_CONFIG, format!("config error: {e}")))?;
    let best = match ms.best() {
        Ok(b) => b,
        Err(e) => {
            let (code, why) = if ms.all_infeasible() {
                (EXIT_INFEASIBLE, "energy h is not attainable on any start".to_string())
            } else {
                (EXIT_NO_CONVERGENCE, e.to_string())
            };
            let first =
                ms.outcomes.iter().find_map(|o| o.result.as_ref().err()).map(|e| format!(" ({e})")).unwrap_or_default();
            return Ok(Solved {
                ms,
                orbit: None,
                breaches: vec![],
                code,
                message: format!("h = {}: {why}{first}", solver.h),
            });
        }
    };
    let grid = solver.grid().map_err(|e| Outcome::new(EXIT_CONFIG, format!("config error: {e}")))?;
    let built = orbit_from_loop(&best.minimizer, solver.h, model, &grid, cfg.verify.out_samples).and_then(|mut o| {
        o.verify(model, cfg.verify.steps, cfg.verify.integrator)?;
        Ok(o)
    });
    let orbit = match built {
        Ok(o) => o,
        Err(e) => {
            let message = format!("h = {}: verification failed: {e}", solver.h);
            return Ok(Solved { ms, orbit: None, breaches: vec![e.to_string()], code: EXIT_NO_CONVERGENCE, message });
        }
    };
    let breaches = Thresholds::default().breaches(&orbit.diagnostics, solver.h);
    let (code, message) = if breaches.is_empty() {
        (EXIT_OK, format!("h = {}: T = {}, f_star = {}", solver.h, sig17(orbit.period), sig17(orbit.f_star)))
    } else {
        (EXIT_NO_CONVERGENCE, format!("h = {}: diagnostics out of bounds: {}", solver.h, breaches.join("; ")))
    };
    Ok(Solved { ms, orbit: Some(orbit), breaches, code, message })
}

/// Multi-start solve, period recovery, verification and artifact output.
pub fn cmd_solve(cfg: &RunConfig) -> Outcome {
    match solve_inner(cfg) {
        Ok(o) | Err(o) => o,
    }
}

fn solve_inner(cfg: &RunConfig) -> Result<Outcome, Outcome> {
    cfg.validate_common()?;
    let model = cfg.model()?;
    let h = cfg.scalar_energy()?;
    let solver = cfg.solver_for(h)?;
    let params = cfg.conditions.growth_params(model.as_ref())?;
    let c = &cfg.conditions;
    let condition_report = check_conditions(model.as_ref(), &params, h, c.box_radius, c.samples, c.seed);

    let solved = solve_one(cfg, &solver, model.as_ref())?;
    let best_report = solved.ms.best().ok();
    let best = match (best_report, &solved.orbit) {
        (Some(r), Some(o)) => Some(BestSummary {
            f_star: r.f_star,
            period: o.period,
            h,
            grad_norm: r.grad_norm,
            g_residual: r.g_residual,
            iterations: r.iterations,
            start_seed: r.start_seed,
            unit_loop: r.minimizer.clone(),
        }),
        _ => None,
    };
    let study = match (cfg.output.convergence_study, best_report) {
        (true, Some(r)) => convergence_study(&solver, model.as_ref(), r).ok(),
        _ => None,
    };
    let summary = Summary {
        config: RunConfig { solver: solver.clone(), ..cfg.clone() },
        condition_report,
        best,
        diagnostics: solved.orbit.as_ref().map(|o| o.diagnostics.clone()),
        thresholds: Thresholds::default(),
        breaches: solved.breaches.clone(),
        convergence_study: study,
        history: if cfg.output.emit_history { best_report.map(|r| r.history.clone()) } else { None },
        all_starts: start_summaries(&solved.ms),
        timestamp: now(),
    };

    let dir = &cfg.output.dir;
    let text = json::to_string(&summary).map_err(|e| Outcome::new(EXIT_CONFIG, e.to_string()))?;
    let path = dir.join(SUMMARY_FILE);
    json::write_atomic(&path, text.as_bytes()).map_err(|e| io_failure(&path, e))?;
    if let (true, Some(o)) = (cfg.output.emit_orbit_csv, &solved.orbit) {
        let mut buf = Vec::new();
        o.write_csv(&mut buf).expect("writing to memory");
        let path = dir.join(ORBIT_FILE);
        json::write_atomic(&path, &buf).map_err(|e| io_failure(&path, e))?;
    }
    Ok(Outcome::new(solved.code, solved.message))
}

/// Hypothesis report at `energy.h`: table on stdout, JSON in the output directory.
pub fn cmd_check(cfg: &RunConfig) -> Outcome {
    match check_inner(cfg) {
        Ok(o) | Err(o) => o,
    }
}

fn check_inner(cfg: &RunConfig) -> Result<Outcome, Outcome> {
    cfg.validate_common()?;
    let model = cfg.model()?;
    let h = cfg.scalar_energy()?;
    let params = cfg.conditions.growth_params(model.as_ref())?;
    let c = &cfg.conditions;
    let report = check_conditions(model.as_ref(), &params, h, c.box_radius, c.samples, c.seed);
    let text = json::to_string(&report).map_err(|e| Outcome::new(EXIT_CONFIG, e.to_string()))?;
    let path = cfg.output.dir.join(CHECK_FILE);
    json::write_atomic(&path, text.as_bytes()).map_err(|e| io_failure(&path, e))?;
    let code = if report.any_fail() { EXIT_HYPOTHESIS } else { EXIT_OK };
    Ok(Outcome::new(code, report.table()))
}

/// One solve per energy in `energy.list`, tabulated in `sweep.csv`.
pub fn cmd_sweep(cfg: &RunConfig) -> Outcome {
    match sweep_inner(cfg) {
        Ok(o) | Err(o) => o,
    }
}

fn sweep_inner(cfg: &RunConfig) -> Result<Outcome, Outcome> {
    cfg.validate_common()?;
    let model = cfg.model()?;
    let energies = cfg.energy_list()?;
    let mut rows = vec![
        "h,T,f_star,converged,verified,grad_norm,ode_residual_inf,energy_err_inf,closure_error,integrator_energy_drift"
            .to_string(),
    ];
    let mut messages = Vec::new();
    let mut worst = EXIT_OK;
    for &h in &energies {
        let solver = cfg.solver_for(h)?;
        let solved = solve_one(cfg, &solver, model.as_ref())?;
        let best = solved.ms.best().ok();
        let nan = f64::NAN;
        let d = solved.orbit.as_ref().map(|o| &o.diagnostics);
        let cells = [
            sig17(h),
            sig17(solved.orbit.as_ref().map_or(nan, |o| o.period)),
            sig17(best.map_or(nan, |r| r.f_star)),
            best.is_some().to_string(),
            (solved.code == EXIT_OK).to_string(),
            sig17(best.map_or(nan, |r| r.grad_norm)),
            sig17(d.map_or(nan, |d| d.ode_residual_inf)),
            sig17(d.map_or(nan, |d| d.energy_err_inf)),
            sig17(d.and_then(|d| d.closure_error).unwrap_or(nan)),
            sig17(d.and_then(|d| d.integrator_energy_drift).unwrap_or(nan)),
        ];
        rows.push(cells.join(","));
        messages.push(solved.message);
        worst = match (worst, solved.code) {
            (EXIT_OK, c) => c,
            (w, EXIT_OK) => w,
            (EXIT_INFEASIBLE, EXIT_INFEASIBLE) => EXIT_INFEASIBLE,
            _ => EXIT_NO_CONVERGENCE,
        };
    }
    let path = cfg.output.dir.join(SWEEP_FILE);
    let mut text = rows.join("\n");
    text.push('\n');
    json::write_atomic(&path, text.as_bytes()).map_err(|e| io_failure(&path, e))?;
    Ok(Outcome::new(worst, messages.join("\n")))
}

/// Re-derives the orbit stored in a summary and integrates it again.
pub fn cmd_verify(summary_path: &Path, steps: Option<usize>) -> Outcome {
    match verify_inner(summary_path, steps) {
        Ok(o) | Err(o) => o,
    }
}

fn verify_inner(summary_path: &Path, steps: Option<usize>) -> Result<Outcome, Outcome> {
    let text = std::fs::read_to_string(summary_path)
        .map_err(|e| Outcome::new(EXIT_CONFIG, format!("cannot read {}: {e}", summary_path.display())))?;
    let summary: Summary = serde_json::from_str(&text)
        .map_err(|e| Outcome::new(EXIT_CONFIG, format!("malformed summary {}: {e}", summary_path.display())))?;
    let cfg = &summary.config;
    let model = cfg.model()?;
    let Some(best) = &summary.best else {
        return Ok(Outcome::new(EXIT_NO_CONVERGENCE, "summary holds no orbit"));
    };
    let steps = steps.unwrap_or(cfg.verify.steps);
    if steps < crate::orbit::MIN_STEPS {
        return Err(ConfigError::Invalid {
            key: "steps".into(),
            message: format!("must be at least {}", crate::orbit::MIN_STEPS),
        }
        .into());
    }
    let grid = cfg.solver_for(best.h)?.grid().map_err(|e| Outcome::new(EXIT_CONFIG, e.to_string()))?;

    let fail = |e: crate::Error| Outcome::new(EXIT_NO_CONVERGENCE, format!("verification failed: {e}"));
    let period = recover_period(&best.unit_loop, model.as_ref(), &grid).map_err(fail)?;
    let mut orbit = rescale(&best.unit_loop, period, best.h, model.as_ref(), cfg.verify.out_samples).map_err(fail)?;
    orbit.diagnostics = verify_with(&orbit, model.as_ref(), steps, cfg.verify.integrator).map_err(fail)?;

    let mut breaches = Thresholds::default().breaches(&orbit.diagnostics, best.h);
    let drift = (period - best.period).abs() / best.period.abs();
    if !(drift <= 1e-9) {
        breaches.push(format!("recomputed T = {} differs from stored T = {}", sig17(period), sig17(best.period)));
    }
    let report = json::to_string(&orbit.diagnostics).map_err(|e| Outcome::new(EXIT_CONFIG, e.to_string()))?;
    if breaches.is_empty() {
        Ok(Outcome::new(EXIT_OK, format!("T = {}\n{report}", sig17(period))))
    } else {
        Ok(Outcome::new(EXIT_NO_CONVERGENCE, format!("{}\n{report}", breaches.join("\n"))))
    }
}

/// `--out` beats the environment override, which beats `output.dir`.
pub fn resolve_out_dir(config_dir: &Path, flag: Option<&Path>, env: Option<PathBuf>) -> PathBuf {
    flag.map(Path::to_path_buf).or(env).unwrap_or_else(|| config_dir.to_path_buf())
}
