//! The four subcommands. Each takes a resolved [`RunConfig`], writes its
//! artifacts, and returns the JSON report text.

use std::path::Path;

use elig_core::critical::{critical_value, CritValOutcome, CritValRequest};
use elig_core::simlab::{
    run_monte_carlo, DgpSpec, MixtureParams, MonteCarloConfig, MonteCarloReport, Prop1Params,
    RuleSpec,
};
use elig_core::{
    aipw_scores, enumerate_grid, ipw_scores, mistake_control_rule, moment_table, sample_analog_rule,
    tradeoff_rule, CritValSettings, MomentOptions, MomentTable, RuleOutcome, ScoredRecord,
    TradeoffConfig,
};
use serde::Serialize;

use crate::config::{default_grid, require_input, DgpName, Mode, RuleName, RunConfig};
use crate::error::{CliError, Result};
use crate::ingest::{read_population, read_records, read_scores};
use crate::output::{emit, to_json, write_curves, write_iterations, write_scores};

#[derive(Serialize)]
struct Report<'a, T> {
    command: &'static str,
    version: &'static str,
    config: &'a RunConfig,
    result: T,
}

fn report<T: Serialize>(command: &'static str, config: &RunConfig, result: T) -> String {
    to_json(&Report {
        command,
        version: env!("CARGO_PKG_VERSION"),
        config,
        result,
    })
}

#[derive(Debug, Serialize)]
pub struct CellSummary {
    pub key: String,
    pub records: usize,
    pub treated: usize,
}

#[derive(Debug, Serialize)]
pub struct ScoreResult {
    pub n: usize,
    pub cells: Vec<CellSummary>,
    pub mean_gamma_star: f64,
    pub mean_r_star: f64,
}

/// Scores the records at `paths.data` and writes them to `paths.scores`.
pub fn score(cfg: &mut RunConfig) -> Result<String> {
    cfg.validate()?;
    let data = require_input(&cfg.paths.data, "data")?;
    let out = cfg
        .paths
        .scores
        .clone()
        .ok_or_else(|| CliError::Config("missing scores output path".into()))?;
    let groups = cfg.grid_or(default_grid).groups();
    let ds = read_records(&data, groups)?;
    let scores = match cfg.score_mode {
        Mode::Ipw => ipw_scores(&ds.records, &ds.propensity(&cfg.propensity)?, cfg.kappa, cfg.clip)?,
        Mode::Aipw => aipw_scores(&ds.records, cfg.kappa, cfg.clip)?,
    };
    write_scores(&out, &scores)?;

    let cells = ds
        .cells
        .iter()
        .enumerate()
        .map(|(id, key)| {
            let in_cell = ds.records.iter().filter(|r| r.v.0 as usize == id);
            let (records, treated) = in_cell.fold((0, 0), |(n, t), r| (n + 1, t + usize::from(r.d)));
            CellSummary {
                key: key.clone(),
                records,
                treated,
            }
        })
        .collect();
    let n = scores.len() as f64;
    let result = ScoreResult {
        n: scores.len(),
        cells,
        mean_gamma_star: scores.iter().map(|s| s.gamma_star).sum::<f64>() / n,
        mean_r_star: scores.iter().map(|s| s.r_star).sum::<f64>() / n,
    };
    Ok(report("score", cfg, result))
}

fn load_table(cfg: &mut RunConfig, scores: &[ScoredRecord]) -> Result<MomentTable> {
    let grid = enumerate_grid(&cfg.grid_or(default_grid))?;
    Ok(moment_table(
        scores,
        &grid,
        MomentOptions {
            allow_large_grid: cfg.allow_large_grid,
        },
    )?)
}

#[derive(Debug, Serialize)]
pub struct SolveResult {
    pub n: usize,
    pub grid_size: usize,
    pub outcome: RuleOutcome,
}

/// Moment table for the scores at `paths.scores` on the configured grid.
pub fn moments_from_scores(cfg: &mut RunConfig) -> Result<MomentTable> {
    let path = require_input(&cfg.paths.scores, "scores")?;
    let groups = cfg.grid_or(default_grid).groups();
    let scores = read_scores(&path, groups)?;
    load_table(cfg, &scores)
}

/// Applies the configured rule to the scores at `paths.scores`.
pub fn solve(cfg: &mut RunConfig) -> Result<String> {
    cfg.validate()?;
    let table = moments_from_scores(cfg)?;
    let outcome = match cfg.rule {
        RuleName::SampleAnalog => sample_analog_rule(&table, cfg.k)?,
        RuleName::MistakeControl => {
            let settings = CritValSettings {
                n_draws: cfg.draws,
                seed: cfg.seed,
                sigma_floor: cfg.sigma_floor,
            };
            mistake_control_rule(&table, cfg.k, cfg.alpha, &settings)?
        }
        RuleName::Tradeoff => tradeoff_rule(&table, &TradeoffConfig::new(cfg.lambda_bar, cfg.k)?)?,
    };
    if let Some(p) = &cfg.paths.curves {
        write_curves(p, &table)?;
    }
    if let Some(p) = &cfg.paths.moments {
        emit(Some(p), &to_json(&table))?;
    }
    let result = SolveResult {
        n: table.n,
        grid_size: table.len(),
        outcome,
    };
    Ok(report("solve", cfg, result))
}

#[derive(Debug, Serialize)]
pub struct CritValResult {
    pub grid_size: usize,
    #[serde(flatten)]
    pub outcome: CritValOutcome,
}

fn read_moments(path: &Path) -> Result<MomentTable> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let table: MomentTable = serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    table
        .validate()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(table)
}

/// Critical value for the moment table at `paths.moments`, or for the scores
/// at `paths.scores` when no table is given.
pub fn critval(cfg: &mut RunConfig) -> Result<String> {
    cfg.validate()?;
    let table = match &cfg.paths.moments {
        Some(_) => read_moments(&require_input(&cfg.paths.moments, "moments")?)?,
        None => moments_from_scores(cfg)?,
    };
    let outcome = critical_value(&CritValRequest {
        cov_b: &table.cov_b,
        alpha: cfg.alpha,
        n_draws: cfg.draws,
        seed: cfg.seed,
        sigma_floor: cfg.sigma_floor,
    })?;
    let result = CritValResult {
        grid_size: table.len(),
        outcome,
    };
    Ok(report("critval", cfg, result))
}

fn dgp(cfg: &RunConfig) -> Result<DgpSpec> {
    let mut spec = match cfg.simulate.dgp {
        DgpName::Prop1 => DgpSpec::prop1(Prop1Params::default())?,
        DgpName::CalibratedMixture => DgpSpec::calibrated_mixture(MixtureParams::default())?,
        DgpName::Custom => {
            let path = require_input(&cfg.paths.population, "population")?;
            DgpSpec::custom_table(read_population(&path)?)
                .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        }
    };
    if let Some(p) = cfg.propensity.default {
        spec.propensity = p;
        spec.validate()?;
    }
    Ok(spec)
}

/// Runs the Monte Carlo protocol on a stock or custom population.
pub fn simulate(cfg: &mut RunConfig) -> Result<String> {
    cfg.validate()?;
    let spec = dgp(cfg)?;
    let grid_spec = match cfg.simulate.dgp {
        DgpName::Prop1 => cfg.grid_or(|| Prop1Params::grid(100).expect("valid prop1 grid")),
        _ => cfg.grid_or(default_grid),
    };
    let grid = enumerate_grid(&grid_spec)?;
    let rules = cfg
        .simulate
        .rules
        .iter()
        .map(|r| match r {
            RuleName::SampleAnalog => RuleSpec::SampleAnalog,
            RuleName::MistakeControl => RuleSpec::MistakeControl {
                alpha: cfg.alpha,
                schedule: cfg.simulate.schedule,
                n_draws: cfg.draws,
                sigma_floor: cfg.sigma_floor,
            },
            RuleName::Tradeoff => RuleSpec::Tradeoff {
                lambda_bar: cfg.lambda_bar,
            },
        })
        .collect();
    let mut mc = MonteCarloConfig::new(cfg.simulate.n, cfg.simulate.iters, cfg.seed, cfg.k, rules);
    mc.eps_w = cfg.simulate.eps_w;
    mc.shortfall = cfg.simulate.shortfall;
    mc.score_mode = cfg.score_mode.into();
    mc.clip = cfg.clip;
    mc.allow_large_grid = cfg.allow_large_grid;
    let run = run_monte_carlo(&spec, &grid, &mc)?;
    if let Some(p) = &cfg.paths.iterations {
        write_iterations(p, grid.groups(), &run.iterations)?;
    }
    Ok(report::<&MonteCarloReport>("simulate", cfg, &run.report))
}
