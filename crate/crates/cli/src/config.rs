//! Run configuration: TOML file, then command-line overrides, then validation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use elig_core::simlab::ScoreMode;
use elig_core::GridSpec;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const DEFAULT_LAMBDA_BAR: f64 = 1.0 / 60_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum RuleName {
    SampleAnalog,
    MistakeControl,
    Tradeoff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum DgpName {
    Prop1,
    CalibratedMixture,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Ipw,
    Aipw,
}

impl From<Mode> for ScoreMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Ipw => ScoreMode::Ipw,
            Mode::Aipw => ScoreMode::Aipw,
        }
    }
}

/// Known assignment probabilities for ipw scoring, by confounder cell.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropensityConfig {
    pub default: Option<f64>,
    #[serde(default)]
    pub cells: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub dgp: DgpName,
    pub n: usize,
    pub iters: usize,
    pub rules: Vec<RuleName>,
    /// Shrink alpha with n for the mistake-controlling rule.
    pub schedule: bool,
    pub eps_w: Option<f64>,
    pub shortfall: f64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            dgp: DgpName::Prop1,
            n: 4000,
            iters: 500,
            rules: vec![RuleName::SampleAnalog, RuleName::MistakeControl, RuleName::Tradeoff],
            schedule: false,
            eps_w: None,
            shortfall: 0.1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// Raw experimental records.
    pub data: Option<PathBuf>,
    /// Scored records.
    pub scores: Option<PathBuf>,
    /// Moment table (JSON).
    pub moments: Option<PathBuf>,
    /// Finite population for the custom simulation.
    pub population: Option<PathBuf>,
    /// JSON report; stdout when absent.
    pub out: Option<PathBuf>,
    /// Per-policy curves CSV.
    pub curves: Option<PathBuf>,
    /// Per-iteration simulation CSV.
    pub iterations: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFile {
    cutoffs: Option<Vec<Vec<f64>>>,
    groups: Option<usize>,
    start: Option<f64>,
    stop: Option<f64>,
    step: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    k: Option<f64>,
    alpha: Option<f64>,
    lambda_bar: Option<f64>,
    kappa: Option<f64>,
    score_mode: Option<Mode>,
    clip: Option<f64>,
    rule: Option<RuleName>,
    seed: Option<u64>,
    draws: Option<usize>,
    sigma_floor: Option<f64>,
    allow_large_grid: Option<bool>,
    grid: Option<GridFile>,
    propensity: Option<PropensityConfig>,
    simulate: Option<SimulateConfig>,
    paths: Option<Paths>,
}

/// Fully resolved settings. Every report embeds this verbatim.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    /// `None` until a command picks its default.
    pub grid: Option<GridSpec>,
    pub k: f64,
    pub alpha: f64,
    pub lambda_bar: f64,
    pub kappa: f64,
    pub score_mode: Mode,
    pub clip: f64,
    pub propensity: PropensityConfig,
    pub rule: RuleName,
    pub seed: u64,
    pub draws: usize,
    pub sigma_floor: Option<f64>,
    pub allow_large_grid: bool,
    pub simulate: SimulateConfig,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            grid: None,
            k: 0.0,
            alpha: 0.05,
            lambda_bar: DEFAULT_LAMBDA_BAR,
            kappa: 6000.0,
            score_mode: Mode::Ipw,
            clip: 0.01,
            propensity: PropensityConfig::default(),
            rule: RuleName::MistakeControl,
            seed: 0,
            draws: 10_000,
            sigma_floor: None,
            allow_large_grid: false,
            simulate: SimulateConfig::default(),
            paths: Paths::default(),
        }
    }
}

/// Cutoffs 0, 50, ..., 500 for each of three groups.
pub fn default_grid() -> GridSpec {
    GridSpec::uniform(3, 0.0, 500.0, 50.0).expect("default grid is valid")
}

fn grid_from_file(g: GridFile) -> Result<GridSpec> {
    let spec = match g {
        GridFile {
            cutoffs: Some(c),
            groups: None,
            start: None,
            stop: None,
            step: None,
        } => GridSpec::new(c),
        GridFile { cutoffs: None, step: Some(step), .. } => GridSpec::uniform(
            g.groups.unwrap_or(3),
            g.start.unwrap_or(0.0),
            g.stop.unwrap_or(500.0),
            step,
        ),
        _ => {
            return Err(CliError::Config(
                "grid: give either `cutoffs` or `step` (with optional groups/start/stop)".into(),
            ))
        }
    };
    spec.map_err(|e| CliError::Config(format!("grid: {e}")))
}

fn rebase(base: &Path, p: Option<PathBuf>) -> Option<PathBuf> {
    p.map(|p| if p.is_relative() { base.join(p) } else { p })
}

impl RunConfig {
    /// Defaults overlaid with the file at `path`, if any. Relative paths in the
    /// file are taken relative to the file's directory.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut cfg = Self::default();
        let Some(path) = path else { return Ok(cfg) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let file: ConfigFile = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));

        macro_rules! take {
            ($($f:ident),*) => { $( if let Some(v) = file.$f { cfg.$f = v; } )* };
        }
        take!(k, alpha, lambda_bar, kappa, score_mode, clip, rule, seed, draws, allow_large_grid);
        cfg.sigma_floor = file.sigma_floor;
        if let Some(p) = file.propensity {
            cfg.propensity = p;
        }
        if let Some(s) = file.simulate {
            cfg.simulate = s;
        }
        if let Some(g) = file.grid {
            cfg.grid = Some(grid_from_file(g)?);
        }
        if let Some(p) = file.paths {
            cfg.paths = Paths {
                data: rebase(base, p.data),
                scores: rebase(base, p.scores),
                moments: rebase(base, p.moments),
                population: rebase(base, p.population),
                out: rebase(base, p.out),
                curves: rebase(base, p.curves),
                iterations: rebase(base, p.iterations),
            };
        }
        Ok(cfg)
    }

    /// Range checks with field-level messages.
    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, msg: String| Err(CliError::Config(format!("{field}: {msg}")));
        if !self.k.is_finite() {
            return fail("k", format!("must be finite, got {}", self.k));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return fail("alpha", format!("must lie in (0, 1), got {}", self.alpha));
        }
        if !(self.lambda_bar >= 0.0 && self.lambda_bar.is_finite()) {
            return fail("lambda_bar", format!("must be finite and >= 0, got {}", self.lambda_bar));
        }
        if !self.kappa.is_finite() {
            return fail("kappa", format!("must be finite, got {}", self.kappa));
        }
        if !(0.0..0.5).contains(&self.clip) {
            return fail("clip", format!("must lie in [0, 0.5), got {}", self.clip));
        }
        if self.draws == 0 {
            return fail("draws", "must be at least 1".into());
        }
        if let Some(f) = self.sigma_floor {
            if !(f >= 0.0 && f.is_finite()) {
                return fail("sigma_floor", format!("must be finite and >= 0, got {f}"));
            }
        }
        let p_ok = |p: f64| p > 0.0 && p < 1.0;
        if let Some(p) = self.propensity.default {
            if !p_ok(p) {
                return fail("propensity.default", format!("must lie in (0, 1), got {p}"));
            }
        }
        for (cell, p) in &self.propensity.cells {
            if !p_ok(*p) {
                return fail(&format!("propensity.cells.{cell}"), format!("must lie in (0, 1), got {p}"));
            }
        }
        let s = &self.simulate;
        if s.n == 0 {
            return fail("simulate.n", "must be at least 1".into());
        }
        if s.iters == 0 {
            return fail("simulate.iters", "must be at least 1".into());
        }
        if s.rules.is_empty() {
            return fail("simulate.rules", "need at least one rule".into());
        }
        if let Some(e) = s.eps_w {
            if !(e >= 0.0 && e.is_finite()) {
                return fail("simulate.eps_w", format!("must be finite and >= 0, got {e}"));
            }
        }
        if !(s.shortfall >= 0.0 && s.shortfall.is_finite()) {
            return fail("simulate.shortfall", format!("must be finite and >= 0, got {}", s.shortfall));
        }
        Ok(())
    }

    /// The configured grid, or `default` when none was given.
    pub fn grid_or(&mut self, default: impl FnOnce() -> GridSpec) -> GridSpec {
        self.grid.get_or_insert_with(default).clone()
    }
}

/// Fails with a config error unless `path` is set and names an existing file.
pub fn require_input(path: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    match path {
        None => Err(CliError::Config(format!("missing {what} path"))),
        Some(p) if !p.is_file() => Err(CliError::Config(format!(
            "{what} file {} does not exist",
            p.display()
        ))),
        Some(p) => Ok(p.clone()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig> {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, text).unwrap();
        RunConfig::load(Some(&path))
    }

    #[test]
    fn defaults() {
        let c = RunConfig::default();
        assert_eq!(c.alpha, 0.05);
        assert_eq!(c.kappa, 6000.0);
        assert_eq!(c.lambda_bar, 1.0 / 60_000.0);
        assert_eq!(default_grid().size(), 1331);
        c.validate().unwrap();
    }

    #[test]
    fn file_values_and_grids() {
        let c = parse("k = -5.0\nseed = 7\n[grid]\ncutoffs = [[100, 200], [100, 200]]\n").unwrap();
        assert_eq!(c.k, -5.0);
        assert_eq!(c.seed, 7);
        assert_eq!(c.grid.unwrap().size(), 4);
        let c = parse("[grid]\nstep = 100\ngroups = 2\n").unwrap();
        assert_eq!(c.grid.unwrap().size(), 36);
    }

    #[test]
    fn rejects_unknown_and_conflicting_fields() {
        assert!(matches!(parse("alpah = 0.1\n"), Err(CliError::Config(_))));
        assert!(parse("[grid]\ncutoffs = [[1]]\nstep = 2\n").is_err());
        assert!(parse("[grid]\ncutoffs = [[2, 1]]\n").is_err());
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let c = parse("[paths]\ndata = \"records.csv\"\n").unwrap();
        let p = c.paths.data.unwrap();
        assert!(p.is_absolute() && p.ends_with("records.csv"));
    }

    #[test]
    fn validation_names_the_field() {
        let mut c = RunConfig::default();
        c.alpha = 1.5;
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("alpha"), "{msg}");
        let mut c = RunConfig::default();
        c.propensity.cells.insert("a".into(), 0.0);
        assert!(c.validate().unwrap_err().to_string().contains("propensity.cells.a"));
    }

    #[test]
    fn missing_inputs_are_config_errors() {
        let e = require_input(&Some("/nonexistent/file.csv".into()), "data").unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert_eq!(require_input(&None, "data").unwrap_err().exit_code(), 2);
    }
}
