//! Synthetic populations with known welfare and budget functions, and the
//! repeated-sampling protocol that scores the selection rules against them.

mod dgp;
mod montecarlo;

pub use dgp::{
    constrained_optimum, draw_sample, population_moments, tradeoff_optimum, DgpKind, DgpSpec,
    MixtureGroup, MixtureParams, PopulationOptimum, PopulationRow, Prop1Params,
};
pub use montecarlo::{
    run_monte_carlo, IterationRecord, MonteCarloConfig, MonteCarloReport, MonteCarloRun,
    RuleReport, RuleSpec, ScoreMode,
};
