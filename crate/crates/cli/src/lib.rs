//! Command-line front end for `elig-core`: `score`, `solve`, `critval` and
//! `simulate`, driven by a TOML run config with flag overrides.

pub mod commands;
pub mod config;
pub mod error;
pub mod ingest;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use elig_core::GridSpec;

use config::{DgpName, Mode, RuleName, RunConfig};
use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "elig", version, about = "Select budget-constrained eligibility policies")]
pub struct Cli {
    /// Worker threads for simulations.
    #[arg(long, global = true, env = "ELIG_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turn experimental records into benefit and excess-cost scores.
    Score(ScoreArgs),
    /// Pick a policy from scored records.
    Solve(SolveArgs),
    /// Simulate the critical value for a moment table.
    Critval(CritvalArgs),
    /// Measure rule performance on a synthetic population.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    /// TOML run config; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Uniform grid step (cutoffs start, start + step, ..., stop).
    #[arg(long)]
    pub grid_step: Option<f64>,
    #[arg(long, requires = "grid_step", default_value_t = 3)]
    pub grid_groups: usize,
    #[arg(long, requires = "grid_step", default_value_t = 0.0)]
    pub grid_start: f64,
    #[arg(long, requires = "grid_step", default_value_t = 500.0)]
    pub grid_stop: f64,
    /// Allow grids above 5000 policies.
    #[arg(long)]
    pub allow_large_grid: bool,
}

impl GridArgs {
    fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        if let Some(step) = self.grid_step {
            let spec = GridSpec::uniform(self.grid_groups, self.grid_start, self.grid_stop, step)
                .map_err(|e| CliError::Config(format!("grid: {e}")))?;
            cfg.grid = Some(spec);
        }
        cfg.allow_large_grid |= self.allow_large_grid;
        Ok(())
    }
}

#[derive(Debug, Args)]
pub struct CritArgs {
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Gaussian draws for the critical value.
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub sigma_floor: Option<f64>,
}

impl CritArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        set(&mut cfg.alpha, self.alpha);
        set(&mut cfg.draws, self.draws);
        set(&mut cfg.seed, self.seed);
        if self.sigma_floor.is_some() {
            cfg.sigma_floor = self.sigma_floor;
        }
    }
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Records CSV (y, c, m, d, income, group, v_*).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Scores CSV to write.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Status-quo spend per enrollee.
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Known treatment probability for every cell (ipw mode).
    #[arg(long)]
    pub propensity: Option<f64>,
    /// Propensity clip for estimated propensities (aipw mode).
    #[arg(long)]
    pub clip: Option<f64>,
    /// Number of groups; larger group values fall into the top bucket.
    #[arg(long)]
    pub groups: Option<usize>,
    /// JSON summary; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Scores CSV (gamma_star, r_star, income, group).
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub rule: Option<RuleName>,
    /// Per-capita budget threshold.
    #[arg(long, allow_hyphen_values = true)]
    pub k: Option<f64>,
    #[arg(long)]
    pub lambda_bar: Option<f64>,
    #[command(flatten)]
    pub crit: CritArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Per-policy curves CSV to write.
    #[arg(long)]
    pub curves: Option<PathBuf>,
    /// Moment table JSON to write.
    #[arg(long)]
    pub moments: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CritvalArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Moment table JSON written by `solve --moments`.
    #[arg(long)]
    pub moments: Option<PathBuf>,
    /// Scores CSV, used when no moment table is given.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[command(flatten)]
    pub crit: CritArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long, value_enum)]
    pub dgp: Option<DgpName>,
    /// Population CSV (weight, gamma, r, income, group) for `--dgp custom`.
    #[arg(long)]
    pub population: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    /// Rules to compare; repeat or separate with commas.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub rule: Vec<RuleName>,
    #[arg(long, allow_hyphen_values = true)]
    pub k: Option<f64>,
    #[arg(long)]
    pub lambda_bar: Option<f64>,
    /// Shrink alpha with the sample size.
    #[arg(long)]
    pub schedule: bool,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Treatment probability of the simulated experiment.
    #[arg(long)]
    pub propensity: Option<f64>,
    #[arg(long)]
    pub eps_w: Option<f64>,
    #[arg(long)]
    pub shortfall: Option<f64>,
    #[command(flatten)]
    pub crit: CritArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Per-iteration CSV to write.
    #[arg(long)]
    pub iterations: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_path(slot: &mut Option<PathBuf>, value: &Option<PathBuf>) {
    if value.is_some() {
        slot.clone_from(value);
    }
}

/// Runs one subcommand and writes its report.
pub fn run(command: &Command) -> Result<()> {
    let (text, out) = match command {
        Command::Score(a) => {
            let mut cfg = RunConfig::load(a.config.config.as_deref())?;
            set_path(&mut cfg.paths.data, &a.data);
            set_path(&mut cfg.paths.scores, &a.scores);
            set_path(&mut cfg.paths.out, &a.out);
            set(&mut cfg.score_mode, a.mode);
            set(&mut cfg.kappa, a.kappa);
            set(&mut cfg.clip, a.clip);
            if a.propensity.is_some() {
                cfg.propensity.default = a.propensity;
            }
            if let Some(g) = a.groups {
                let spec = GridSpec::uniform(g, 0.0, 500.0, 50.0)
                    .map_err(|e| CliError::Config(format!("groups: {e}")))?;
                cfg.grid = Some(spec);
            }
            (commands::score(&mut cfg)?, cfg.paths.out)
        }
        Command::Solve(a) => {
            let mut cfg = RunConfig::load(a.config.config.as_deref())?;
            set_path(&mut cfg.paths.scores, &a.scores);
            set_path(&mut cfg.paths.curves, &a.curves);
            set_path(&mut cfg.paths.moments, &a.moments);
            set_path(&mut cfg.paths.out, &a.out);
            set(&mut cfg.rule, a.rule);
            set(&mut cfg.k, a.k);
            set(&mut cfg.lambda_bar, a.lambda_bar);
            a.crit.apply(&mut cfg);
            a.grid.apply(&mut cfg)?;
            (commands::solve(&mut cfg)?, cfg.paths.out)
        }
        Command::Critval(a) => {
            let mut cfg = RunConfig::load(a.config.config.as_deref())?;
            set_path(&mut cfg.paths.moments, &a.moments);
            set_path(&mut cfg.paths.scores, &a.scores);
            set_path(&mut cfg.paths.out, &a.out);
            a.crit.apply(&mut cfg);
            a.grid.apply(&mut cfg)?;
            (commands::critval(&mut cfg)?, cfg.paths.out)
        }
        Command::Simulate(a) => {
            let mut cfg = RunConfig::load(a.config.config.as_deref())?;
            set_path(&mut cfg.paths.population, &a.population);
            set_path(&mut cfg.paths.iterations, &a.iterations);
            set_path(&mut cfg.paths.out, &a.out);
            let s = &mut cfg.simulate;
            set(&mut s.dgp, a.dgp);
            set(&mut s.n, a.n);
            set(&mut s.iters, a.iters);
            if !a.rule.is_empty() {
                s.rules.clone_from(&a.rule);
            }
            s.schedule |= a.schedule;
            if a.eps_w.is_some() {
                s.eps_w = a.eps_w;
            }
            set(&mut s.shortfall, a.shortfall);
            set(&mut cfg.k, a.k);
            set(&mut cfg.lambda_bar, a.lambda_bar);
            set(&mut cfg.score_mode, a.mode);
            if a.propensity.is_some() {
                cfg.propensity.default = a.propensity;
            }
            a.crit.apply(&mut cfg);
            a.grid.apply(&mut cfg)?;
            (commands::simulate(&mut cfg)?, cfg.paths.out)
        }
    };
    output::emit(out.as_deref(), &text)
}

/// Configures the global thread pool, runs the command, and maps the outcome
/// to a process exit code.
pub fn main_with(cli: Cli) -> i32 {
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("elig: config error: threads must be at least 1");
            return 2;
        }
        // Fails only if a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match run(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("elig: {e}");
            e.exit_code()
        }
    }
}
