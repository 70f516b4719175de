//! Selecting a policy from a [`MomentTable`].
//!
//! * [`sample_analog_rule`]: maximize sample welfare subject to the sample budget.
//! * [`mistake_control_rule`]: maximize sample welfare over the policies whose
//!   studentized budget excess lies below a simulated critical value.
//! * [`tradeoff_rule`]: maximize sample welfare minus a hinge penalty on budget excess.
//!
//! Ties go to the lexicographically smallest threshold vector. When a rule
//! admits no policy it falls back to assigning nobody.

use serde::Serialize;

use crate::critical::{critical_value, resolve_sigma_floor, survives_floor, CritValRequest};
use crate::error::{Error, Result};
use crate::moments::MomentTable;
use crate::policy::ThresholdPolicy;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuleOutcome {
    pub policy: ThresholdPolicy,
    /// Row of the selected policy; `None` after a fallback to the null policy.
    pub policy_index: Option<usize>,
    pub objective: f64,
    pub w_hat: f64,
    pub b_hat: f64,
    pub feasible_set_size: usize,
    pub c_alpha_used: Option<f64>,
    pub lambda_bar_used: Option<f64>,
    pub fell_back_to_null: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TradeoffConfig {
    /// Welfare units given up per unit of budget excess.
    pub lambda_bar: f64,
    pub k: f64,
}

impl TradeoffConfig {
    pub fn new(lambda_bar: f64, k: f64) -> Result<Self> {
        if !(lambda_bar >= 0.0 && lambda_bar.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "lambda_bar must be finite and nonnegative, got {lambda_bar}"
            )));
        }
        check_k(k)?;
        Ok(Self { lambda_bar, k })
    }
}

/// Gaussian simulation settings for the mistake-controlling rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CritValSettings {
    pub n_draws: usize,
    pub seed: u64,
    pub sigma_floor: Option<f64>,
}

fn check_k(k: f64) -> Result<()> {
    if k.is_nan() {
        return Err(Error::InvalidInput("budget threshold k is NaN".into()));
    }
    Ok(())
}

fn check_table(table: &MomentTable) -> Result<()> {
    if table.is_empty() {
        return Err(Error::InvalidInput("moment table is empty".into()));
    }
    Ok(())
}

/// Index-ordered argmax over admitted rows with lexicographic tie-breaking.
fn argmax(
    table: &MomentTable,
    admitted: impl Fn(usize) -> bool,
    objective: impl Fn(usize) -> f64,
) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for i in (0..table.len()).filter(|&i| admitted(i)) {
        let v = objective(i);
        best = match best {
            Some((b, bv)) if bv > v || (bv == v && table.policies[b] <= table.policies[i]) => {
                Some((b, bv))
            }
            _ => Some((i, v)),
        };
    }
    best
}

fn outcome(table: &MomentTable, pick: Option<(usize, f64)>, feasible_set_size: usize) -> Result<RuleOutcome> {
    Ok(match pick {
        Some((i, objective)) => RuleOutcome {
            policy: table.policies[i].clone(),
            policy_index: Some(i),
            objective,
            w_hat: table.w_hat[i],
            b_hat: table.b_hat[i],
            feasible_set_size,
            c_alpha_used: None,
            lambda_bar_used: None,
            fell_back_to_null: false,
        },
        None => RuleOutcome {
            policy: ThresholdPolicy::null(table.policies[0].groups())?,
            policy_index: None,
            objective: 0.0,
            w_hat: 0.0,
            b_hat: 0.0,
            feasible_set_size,
            c_alpha_used: None,
            lambda_bar_used: None,
            fell_back_to_null: true,
        },
    })
}

/// Maximizes `w_hat` over `{g : b_hat(g) <= k}`.
pub fn sample_analog_rule(table: &MomentTable, k: f64) -> Result<RuleOutcome> {
    check_table(table)?;
    check_k(k)?;
    let feasible = |i: usize| table.b_hat[i] <= k;
    let size = (0..table.len()).filter(|&i| feasible(i)).count();
    outcome(table, argmax(table, feasible, |i| table.w_hat[i]), size)
}

/// Rows admitted by the studentized budget test at critical value `c_alpha`.
///
/// Policies whose sigma does not clear `sigma_floor` are admitted iff `b_hat <= k`.
pub fn admitted_set(table: &MomentTable, k: f64, c_alpha: f64, sigma_floor: f64) -> Vec<bool> {
    let root_n = (table.n as f64).sqrt();
    (0..table.len())
        .map(|i| {
            let sigma = table.sigma_b[i];
            if survives_floor(sigma, sigma_floor) {
                root_n * (table.b_hat[i] - k) / sigma <= c_alpha
            } else {
                table.b_hat[i] <= k
            }
        })
        .collect()
}

/// Maximizes `w_hat` over the policies that pass the one-sided budget test at level `alpha`.
pub fn mistake_control_rule(
    table: &MomentTable,
    k: f64,
    alpha: f64,
    settings: &CritValSettings,
) -> Result<RuleOutcome> {
    check_table(table)?;
    check_k(k)?;
    let crit = critical_value(&CritValRequest {
        cov_b: &table.cov_b,
        alpha,
        n_draws: settings.n_draws,
        seed: settings.seed,
        sigma_floor: settings.sigma_floor,
    })?;
    let floor = resolve_sigma_floor(&table.sigma_b, settings.sigma_floor);
    let admitted = admitted_set(table, k, crit.c_alpha, floor);
    let size = admitted.iter().filter(|a| **a).count();
    let mut out = outcome(table, argmax(table, |i| admitted[i], |i| table.w_hat[i]), size)?;
    out.c_alpha_used = Some(crit.c_alpha);
    Ok(out)
}

/// Maximizes `w_hat(g) - lambda_bar * max(b_hat(g) - k, 0)` over the whole grid.
pub fn tradeoff_rule(table: &MomentTable, cfg: &TradeoffConfig) -> Result<RuleOutcome> {
    check_table(table)?;
    let cfg = TradeoffConfig::new(cfg.lambda_bar, cfg.k)?;
    let size = (0..table.len()).filter(|&i| table.b_hat[i] <= cfg.k).count();
    let objective = |i: usize| table.w_hat[i] - cfg.lambda_bar * (table.b_hat[i] - cfg.k).max(0.0);
    let mut out = outcome(table, argmax(table, |_| true, objective), size)?;
    out.lambda_bar_used = Some(cfg.lambda_bar);
    Ok(out)
}

/// `min(base_alpha, 1 / ln(max(n, 3)))`: a level that vanishes slowly enough
/// for the critical value to stay `o(sqrt(n))`.
pub fn alpha_schedule(n: usize, base_alpha: f64) -> f64 {
    base_alpha.min(1.0 / (n.max(3) as f64).ln())
}
