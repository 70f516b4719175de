use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dgp::{constrained_optimum, draw_sample, population_moments, DgpSpec, PopulationOptimum};
use crate::error::{Error, Result};
use crate::moments::{moment_table, MomentOptions, MomentTable};
use crate::policy::{PolicyGrid, ThresholdPolicy};
use crate::rng::derive_seed;
use crate::rules::{
    alpha_schedule, mistake_control_rule, sample_analog_rule, tradeoff_rule, CritValSettings,
    TradeoffConfig,
};
use crate::scoring::{aipw_scores, ipw_scores, Propensity, ScoredRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum RuleSpec {
    SampleAnalog,
    MistakeControl {
        alpha: f64,
        /// Use `alpha_schedule(n, alpha)` instead of `alpha`.
        schedule: bool,
        n_draws: usize,
        sigma_floor: Option<f64>,
    },
    Tradeoff {
        lambda_bar: f64,
    },
    /// Always returns the population constrained optimum.
    Oracle,
}

impl RuleSpec {
    pub fn name(&self) -> &'static str {
        match self {
            RuleSpec::SampleAnalog => "sample-analog",
            RuleSpec::MistakeControl { .. } => "mistake-control",
            RuleSpec::Tradeoff { .. } => "tradeoff",
            RuleSpec::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMode {
    Ipw,
    Aipw,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloConfig {
    pub n: usize,
    pub iters: usize,
    pub master_seed: u64,
    pub k: f64,
    pub rules: Vec<RuleSpec>,
    /// Suboptimality tolerance; `None` means `1e-9 * |W(g*)|`.
    pub eps_w: Option<f64>,
    /// Relative welfare shortfall counted by `prob_shortfall`.
    pub shortfall: f64,
    pub score_mode: ScoreMode,
    pub clip: f64,
    pub allow_large_grid: bool,
}

impl MonteCarloConfig {
    pub fn new(n: usize, iters: usize, master_seed: u64, k: f64, rules: Vec<RuleSpec>) -> Self {
        Self {
            n,
            iters,
            master_seed,
            k,
            rules,
            eps_w: None,
            shortfall: 0.1,
            score_mode: ScoreMode::Ipw,
            clip: 0.01,
            allow_large_grid: false,
        }
    }
}

/// Repeated-sampling performance of one rule.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuleReport {
    pub rule: RuleSpec,
    /// Share of iterations with `B(g_hat) > k`.
    pub prob_infeasible: f64,
    /// Share with `B(g_hat) > k + eps_b`.
    pub prob_infeasible_strict: f64,
    /// Share with `W(g_hat) < W(g*) - eps_w`.
    pub prob_suboptimal: f64,
    /// Share with `W(g_hat) < W(g*) - shortfall * |W(g*)|`.
    pub prob_shortfall: f64,
    /// Mean of `(W(g*) - W(g_hat)) / W(g*)`, or of the absolute gap when `W(g*) <= 0`.
    pub avg_welfare_loss: f64,
    pub loss_is_relative: bool,
    pub avg_cost: f64,
    pub fallback_rate: f64,
    pub mean_c_alpha: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloReport {
    pub dgp: DgpSpec,
    pub n: usize,
    pub iters: usize,
    pub seed: u64,
    pub k: f64,
    pub eps_w: f64,
    pub eps_b: f64,
    pub shortfall: f64,
    pub score_mode: ScoreMode,
    pub grid_size: usize,
    pub optimum: PopulationOptimum,
    pub rules: Vec<RuleReport>,
}

/// The policy one rule picked in one iteration, evaluated in the population.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub seed: u64,
    pub rule: &'static str,
    pub policy: ThresholdPolicy,
    pub welfare: f64,
    pub budget: f64,
    pub feasible: bool,
    pub fell_back_to_null: bool,
    pub c_alpha: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloRun {
    pub report: MonteCarloReport,
    pub iterations: Vec<IterationRecord>,
}

fn score(dgp: &DgpSpec, cfg: &MonteCarloConfig, seed: u64) -> Result<Vec<ScoredRecord>> {
    let sample = draw_sample(dgp, cfg.n, seed)?;
    match cfg.score_mode {
        ScoreMode::Ipw => ipw_scores(&sample, &Propensity::Constant(dgp.propensity), dgp.kappa, cfg.clip),
        ScoreMode::Aipw => aipw_scores(&sample, dgp.kappa, cfg.clip),
    }
}

fn run_iteration(
    dgp: &DgpSpec,
    grid: &PolicyGrid,
    cfg: &MonteCarloConfig,
    optimum: &PopulationOptimum,
    index: usize,
) -> Result<Vec<IterationRecord>> {
    let seed = derive_seed(cfg.master_seed, index as u64);
    iteration_body(dgp, grid, cfg, optimum, index, seed).map_err(|e| Error::Iteration {
        index,
        seed,
        source: Box::new(e),
    })
}

fn iteration_body(
    dgp: &DgpSpec,
    grid: &PolicyGrid,
    cfg: &MonteCarloConfig,
    optimum: &PopulationOptimum,
    index: usize,
    seed: u64,
) -> Result<Vec<IterationRecord>> {
    let scores = score(dgp, cfg, seed)?;
    let table: MomentTable = moment_table(
        &scores,
        grid,
        MomentOptions {
            allow_large_grid: cfg.allow_large_grid,
        },
    )?;
    cfg.rules
        .iter()
        .enumerate()
        .map(|(r, rule)| {
            let (policy, fell_back, c_alpha) = match *rule {
                RuleSpec::SampleAnalog => {
                    let o = sample_analog_rule(&table, cfg.k)?;
                    (o.policy, o.fell_back_to_null, None)
                }
                RuleSpec::MistakeControl { alpha, schedule, n_draws, sigma_floor } => {
                    let alpha = if schedule { alpha_schedule(cfg.n, alpha) } else { alpha };
                    let settings = CritValSettings {
                        n_draws,
                        seed: derive_seed(seed, 1 + r as u64),
                        sigma_floor,
                    };
                    let o = mistake_control_rule(&table, cfg.k, alpha, &settings)?;
                    (o.policy, o.fell_back_to_null, o.c_alpha_used)
                }
                RuleSpec::Tradeoff { lambda_bar } => {
                    let o = tradeoff_rule(&table, &TradeoffConfig::new(lambda_bar, cfg.k)?)?;
                    (o.policy, o.fell_back_to_null, None)
                }
                RuleSpec::Oracle => (optimum.policy.clone(), false, None),
            };
            let (welfare, budget) = population_moments(dgp, &policy)?;
            Ok(IterationRecord {
                iteration: index,
                seed,
                rule: rule.name(),
                policy,
                welfare,
                budget,
                feasible: budget <= cfg.k,
                fell_back_to_null: fell_back,
                c_alpha,
            })
        })
        .collect()
}

/// Draws `iters` samples, applies every configured rule to each, and scores the
/// selected policies against the population optimum on `grid`.
///
/// Iterations use seeds derived from `(master_seed, index)`, run in parallel,
/// and are reduced in index order, so results do not depend on thread count.
pub fn run_monte_carlo(dgp: &DgpSpec, grid: &PolicyGrid, cfg: &MonteCarloConfig) -> Result<MonteCarloRun> {
    dgp.validate()?;
    if cfg.iters == 0 {
        return Err(Error::InvalidInput("need at least one iteration".into()));
    }
    if cfg.rules.is_empty() {
        return Err(Error::InvalidInput("no rules configured".into()));
    }
    if !(cfg.shortfall >= 0.0) {
        return Err(Error::InvalidInput(format!("shortfall must be >= 0, got {}", cfg.shortfall)));
    }
    if grid.groups() != dgp.groups() {
        return Err(Error::InvalidInput(format!(
            "grid has {} groups, population has {}",
            grid.groups(),
            dgp.groups()
        )));
    }
    let optimum = constrained_optimum(dgp, grid, cfg.k)?;
    let w_star = optimum.welfare;
    let eps_w = cfg.eps_w.unwrap_or(1e-9 * w_star.abs());
    let eps_b = 1e-9 * cfg.k.abs().max(1.0);

    let per_iter: Vec<Result<Vec<IterationRecord>>> = (0..cfg.iters)
        .into_par_iter()
        .map(|i| run_iteration(dgp, grid, cfg, &optimum, i))
        .collect();
    let mut iterations = Vec::with_capacity(cfg.iters * cfg.rules.len());
    for result in per_iter {
        iterations.extend(result?);
    }

    let iters = cfg.iters as f64;
    let loss_is_relative = w_star > 0.0;
    let rules = cfg
        .rules
        .iter()
        .enumerate()
        .map(|(r, rule)| {
            let picks = iterations.iter().skip(r).step_by(cfg.rules.len());
            let (mut inf, mut inf_strict, mut sub, mut short, mut fallback) = (0usize, 0usize, 0usize, 0usize, 0usize);
            let (mut loss, mut cost) = (0.0, 0.0);
            let mut c_sum = 0.0;
            let mut c_count = 0usize;
            for rec in picks {
                inf += usize::from(rec.budget > cfg.k);
                inf_strict += usize::from(rec.budget > cfg.k + eps_b);
                sub += usize::from(rec.welfare < w_star - eps_w);
                short += usize::from(rec.welfare < w_star - cfg.shortfall * w_star.abs());
                fallback += usize::from(rec.fell_back_to_null);
                let gap = w_star - rec.welfare;
                loss += if loss_is_relative { gap / w_star } else { gap };
                cost += rec.budget;
                if let Some(c) = rec.c_alpha {
                    c_sum += c;
                    c_count += 1;
                }
            }
            RuleReport {
                rule: *rule,
                prob_infeasible: inf as f64 / iters,
                prob_infeasible_strict: inf_strict as f64 / iters,
                prob_suboptimal: sub as f64 / iters,
                prob_shortfall: short as f64 / iters,
                avg_welfare_loss: loss / iters,
                loss_is_relative,
                avg_cost: cost / iters,
                fallback_rate: fallback as f64 / iters,
                mean_c_alpha: (c_count > 0).then(|| c_sum / c_count as f64),
            }
        })
        .collect();

    Ok(MonteCarloRun {
        report: MonteCarloReport {
            dgp: dgp.clone(),
            n: cfg.n,
            iters: cfg.iters,
            seed: cfg.master_seed,
            k: cfg.k,
            eps_w,
            eps_b,
            shortfall: cfg.shortfall,
            score_mode: cfg.score_mode,
            grid_size: grid.len(),
            optimum,
            rules,
        },
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::enumerate_grid;
    use crate::simlab::dgp::{MixtureParams, Prop1Params};

    #[test]
    fn oracle_rule_is_a_fixed_point() {
        let dgp = DgpSpec::prop1(Prop1Params::default()).unwrap();
        let grid = enumerate_grid(&Prop1Params::grid(50).unwrap()).unwrap();
        let cfg = MonteCarloConfig::new(200, 20, 3, 0.2, vec![RuleSpec::Oracle]);
        let run = run_monte_carlo(&dgp, &grid, &cfg).unwrap();
        let r = &run.report.rules[0];
        assert_eq!(r.prob_infeasible, 0.0);
        assert_eq!(r.prob_suboptimal, 0.0);
        assert_eq!(r.avg_welfare_loss, 0.0);
        assert!(r.loss_is_relative);
        assert_eq!(run.iterations.len(), 20);
    }

    #[test]
    fn reruns_are_identical() {
        let dgp = DgpSpec::calibrated_mixture(MixtureParams::default()).unwrap();
        let grid = enumerate_grid(&crate::policy::GridSpec::uniform(3, 0.0, 500.0, 250.0).unwrap()).unwrap();
        let rules = vec![
            RuleSpec::SampleAnalog,
            RuleSpec::MistakeControl { alpha: 0.05, schedule: false, n_draws: 500, sigma_floor: None },
            RuleSpec::Tradeoff { lambda_bar: 1.0 / 6e4 },
        ];
        let cfg = MonteCarloConfig::new(300, 8, 17, 0.0, rules);
        let a = run_monte_carlo(&dgp, &grid, &cfg).unwrap();
        let b = run_monte_carlo(&dgp, &grid, &cfg).unwrap();
        assert_eq!(a.report, b.report);
        assert_eq!(a.iterations, b.iterations);
        assert_eq!(a.iterations.len(), 24);
        assert_eq!(a.iterations[1].rule, "mistake-control");
    }

    #[test]
    fn group_mismatch_is_rejected() {
        let dgp = DgpSpec::prop1(Prop1Params::default()).unwrap();
        let grid = enumerate_grid(&crate::policy::GridSpec::uniform(2, 0.0, 1.0, 0.5).unwrap()).unwrap();
        let cfg = MonteCarloConfig::new(10, 1, 0, 0.2, vec![RuleSpec::SampleAnalog]);
        assert!(run_monte_carlo(&dgp, &grid, &cfg).is_err());
    }

    #[test]
    fn iteration_failures_carry_index_and_seed() {
        let mut dgp = DgpSpec::prop1(Prop1Params::default()).unwrap();
        dgp.propensity = 0.2;
        let grid = enumerate_grid(&Prop1Params::grid(10).unwrap()).unwrap();
        let mut cfg = MonteCarloConfig::new(50, 3, 0, 0.2, vec![RuleSpec::SampleAnalog]);
        // known propensity 0.2 is outside [0.3, 0.7] in every iteration
        cfg.clip = 0.3;
        let err = run_monte_carlo(&dgp, &grid, &cfg).unwrap_err();
        match err {
            Error::Iteration { index, seed, .. } => {
                assert_eq!(index, 0);
                assert_eq!(seed, derive_seed(0, 0));
            }
            other => panic!("unexpected {other}"),
        }
    }
}
