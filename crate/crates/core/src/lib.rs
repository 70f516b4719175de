//! Selection of budget-constrained eligibility policies from randomized
//! experiments.
//!
//! The pipeline runs from experimental records to a chosen policy:
//!
//! 1. [`scoring`] turns records into per-unit benefit and excess-cost scores.
//! 2. [`moments`] evaluates sample welfare, sample budget and the budget
//!    covariance over a grid of [`policy::ThresholdPolicy`] values.
//! 3. [`rules`] picks a policy: the plain sample-analog rule, the
//!    mistake-controlling rule (with critical values from [`critical`]), or the
//!    trade-off rule.
//!
//! [`simlab`] measures how often each rule overspends or leaves welfare on the
//! table on synthetic populations with known answers.

pub mod critical;
pub mod error;
pub mod linalg;
pub mod moments;
pub mod policy;
pub mod rng;
pub mod rules;
pub mod scoring;
pub mod simlab;

pub use critical::{critical_value, psd_factor, CritValOutcome, CritValRequest, PsdFactor};
pub use error::{Error, Result};
pub use linalg::Matrix;
pub use moments::{budget_hat, moment_table, welfare_hat, MomentOptions, MomentTable};
pub use policy::{enumerate_grid, Covariates, GridSpec, PolicyGrid, ThresholdPolicy};
pub use rules::{
    alpha_schedule, mistake_control_rule, sample_analog_rule, tradeoff_rule, CritValSettings,
    RuleOutcome, TradeoffConfig,
};
pub use scoring::{
    aipw_scores, excess_cost_transform, fit_saturated, ipw_scores, CellId, Propensity, RawRecord,
    SaturatedFit, ScoredRecord,
};
