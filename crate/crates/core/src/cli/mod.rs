//! Command-line front end: `solve`, `check`, `sweep` and `verify`.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 no converged or
//! verified orbit, 3 energy not attainable, 4 a hypothesis fails.

pub mod commands;
pub mod config;
pub mod json;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::optimizer::Method;
use crate::orbit::Integrator;
pub use commands::{cmd_check, cmd_solve, cmd_sweep, cmd_verify, Outcome, Summary};
pub use config::{RunConfig, OUT_DIR_ENV};

#[derive(Debug, Parser)]
#[command(name = "energy-orbit", version, about = "Periodic orbits of q'' + V'(q) = 0 at prescribed energy")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Find and verify an orbit at `energy.h`.
    Solve(RunArgs),
    /// Test the hypotheses on the potential at `energy.h`.
    Check(RunArgs),
    /// Solve at every energy of `energy.list`.
    Sweep(RunArgs),
    /// Re-verify the orbit stored in a summary file.
    Verify {
        summary: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum MethodArg {
    Gradient,
    Cg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum IntegratorArg {
    Verlet,
    Rk4,
}

/// A run file plus overrides; flags win over the file.
#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// TOML run file.
    #[arg(short, long)]
    pub config: PathBuf,
    #[arg(long)]
    pub h: Option<f64>,
    /// Comma-separated energies for `sweep`.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub energies: Option<Vec<f64>>,
    #[arg(short = 'K', long = "harmonics")]
    pub k_max: Option<usize>,
    #[arg(short = 'N', long = "nodes")]
    pub nodes: Option<usize>,
    #[arg(long)]
    pub starts: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub grad_tol: Option<f64>,
    #[arg(long)]
    pub precondition: bool,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub out_samples: Option<usize>,
    #[arg(long, value_enum)]
    pub integrator: Option<IntegratorArg>,
    #[arg(long)]
    pub mu1: Option<f64>,
    #[arg(long)]
    pub mu2: Option<f64>,
    /// Ceiling `A`; accepts `inf`.
    #[arg(long = "ceiling")]
    pub ceiling: Option<f64>,
    #[arg(long)]
    pub box_radius: Option<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
    /// Output directory; beats the environment override and the file.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub no_orbit_csv: bool,
    #[arg(long)]
    pub history: bool,
    /// Re-solve with doubled resolution and report the change in `f`.
    #[arg(long)]
    pub convergence_study: bool,
}

impl RunArgs {
    /// Loads the run file and applies every given flag.
    pub fn resolve(&self, env_out: Option<PathBuf>) -> Result<RunConfig, config::ConfigError> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(h) = self.h {
            cfg.energy.h = Some(h);
            cfg.energy.list = None;
        }
        if let Some(list) = &self.energies {
            cfg.energy.list = Some(list.clone());
            cfg.energy.h = None;
        }
        let s = &mut cfg.solver;
        set(&mut s.k_max, self.k_max);
        set(&mut s.nodes, self.nodes);
        set(&mut s.starts, self.starts);
        set(&mut s.seed, self.seed);
        set(&mut s.max_iters, self.max_iters);
        set(&mut s.grad_tol, self.grad_tol);
        s.precondition |= self.precondition;
        if let Some(m) = self.method {
            s.method = match m {
                MethodArg::Gradient => Method::Gradient,
                MethodArg::Cg => Method::ConjugateGradient,
            };
        }
        let v = &mut cfg.verify;
        set(&mut v.steps, self.steps);
        set(&mut v.out_samples, self.out_samples);
        if let Some(i) = self.integrator {
            v.integrator = match i {
                IntegratorArg::Verlet => Integrator::StormerVerlet,
                IntegratorArg::Rk4 => Integrator::Rk4,
            };
        }
        let c = &mut cfg.conditions;
        c.mu1 = self.mu1.or(c.mu1);
        c.mu2 = self.mu2.or(c.mu2);
        c.ceiling = self.ceiling.or(c.ceiling);
        set(&mut c.box_radius, self.box_radius);
        set(&mut c.samples, self.samples);
        let o = &mut cfg.output;
        o.dir = commands::resolve_out_dir(&o.dir, self.out.as_deref(), env_out);
        o.emit_orbit_csv &= !self.no_orbit_csv;
        o.emit_history |= self.history;
        o.convergence_study |= self.convergence_study;
        Ok(cfg)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

/// Parses `args`, runs the command and returns its outcome. Usage errors map to exit code 1.
pub fn run<I, T>(args: I, env_out: Option<PathBuf>) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { commands::EXIT_CONFIG } else { commands::EXIT_OK };
            return Outcome { code, message: e.to_string() };
        }
    };
    let (run_args, which) = match &cli.command {
        Command::Verify { summary, steps } => return cmd_verify(summary, *steps),
        Command::Solve(a) => (a, cmd_solve as fn(&RunConfig) -> Outcome),
        Command::Check(a) => (a, cmd_check as fn(&RunConfig) -> Outcome),
        Command::Sweep(a) => (a, cmd_sweep as fn(&RunConfig) -> Outcome),
    };
    match run_args.resolve(env_out) {
        Ok(cfg) => which(&cfg),
        Err(e) => e.into(),
    }
}
