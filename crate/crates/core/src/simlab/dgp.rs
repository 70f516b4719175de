use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{Covariates, GridSpec, PolicyGrid, ThresholdPolicy};
use crate::scoring::{CellId, RawRecord};

/// Threshold class on a scalar characteristic uniform on `[0, 1]`, with unit
/// benefit and a binary cost that is zero inside `[t_low, t_high]` and
/// Bernoulli(`q`) outside it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prop1Params {
    pub t_low: f64,
    pub t_high: f64,
    pub q: f64,
}

impl Default for Prop1Params {
    fn default() -> Self {
        Self {
            t_low: 0.4,
            t_high: 0.6,
            q: 0.5,
        }
    }
}

impl Prop1Params {
    /// The budget at which the constraint binds exactly on `[t_low, t_high]`.
    pub fn binding_k(&self) -> f64 {
        self.q * self.t_low
    }

    /// `steps + 1` evenly spaced cutoffs on `[0, 1]`, each the correctly rounded `i / steps`.
    pub fn grid(steps: usize) -> Result<GridSpec> {
        GridSpec::new(vec![(0..=steps).map(|i| i as f64 / steps as f64).collect()])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureGroup {
    pub weight: f64,
    pub benefit_mean: f64,
    pub benefit_sd: f64,
    pub cost_mean: f64,
    pub cost_sd: f64,
}

/// Groups with normal benefit and excess cost, independent of income, and
/// income uniform on `[0, income_max]` within every group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureParams {
    pub groups: Vec<MixtureGroup>,
    pub income_max: f64,
}

impl Default for MixtureParams {
    /// Group shares and mean benefit / excess cost by number of children
    /// (0, 1, 2+) of the Oregon experiment sample; the spreads and the income
    /// law are synthetic.
    fn default() -> Self {
        let group = |weight, benefit_mean, cost_mean| MixtureGroup {
            weight,
            benefit_mean,
            benefit_sd: 0.5,
            cost_mean,
            cost_sd: 2000.0,
        };
        Self {
            groups: vec![
                group(0.568, 0.031, 651.0),
                group(0.171, 0.103, 348.0),
                group(0.261, 0.015, -275.0),
            ],
            income_max: 500.0,
        }
    }
}

/// One support point of a finite population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationRow {
    pub weight: f64,
    pub gamma: f64,
    pub r: f64,
    pub income: f64,
    pub group: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DgpKind {
    Prop1(Prop1Params),
    CalibratedMixture(MixtureParams),
    /// Units drawn with replacement from a weighted table.
    CustomTable { rows: Vec<PopulationRow> },
}

/// A synthetic population together with the experiment run on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    #[serde(flatten)]
    pub kind: DgpKind,
    /// Probability of assignment to the treatment arm.
    pub propensity: f64,
    /// Status-quo spend per enrollee added to every treated unit's observed cost.
    pub kappa: f64,
}

impl DgpSpec {
    pub fn prop1(params: Prop1Params) -> Result<Self> {
        Self::new(DgpKind::Prop1(params), 0.5, 0.0)
    }

    pub fn calibrated_mixture(params: MixtureParams) -> Result<Self> {
        Self::new(DgpKind::CalibratedMixture(params), 0.5, 6000.0)
    }

    pub fn custom_table(rows: Vec<PopulationRow>) -> Result<Self> {
        Self::new(DgpKind::CustomTable { rows }, 0.5, 0.0)
    }

    pub fn new(kind: DgpKind, propensity: f64, kappa: f64) -> Result<Self> {
        let spec = Self {
            kind,
            propensity,
            kappa,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if !(self.propensity > 0.0 && self.propensity < 1.0) {
            return bad(format!("propensity must lie in (0, 1), got {}", self.propensity));
        }
        if !self.kappa.is_finite() {
            return bad("kappa must be finite".into());
        }
        match &self.kind {
            DgpKind::Prop1(p) => {
                if !(0.0 < p.t_low && p.t_low < p.t_high && p.t_high < 1.0) {
                    return bad(format!(
                        "need 0 < t_low < t_high < 1, got t_low {} t_high {}",
                        p.t_low, p.t_high
                    ));
                }
                if !(p.q > 0.0 && p.q < 1.0) {
                    return bad(format!("q must lie in (0, 1), got {}", p.q));
                }
            }
            DgpKind::CalibratedMixture(m) => {
                if m.groups.is_empty() {
                    return bad("mixture needs at least one group".into());
                }
                let total: f64 = m.groups.iter().map(|g| g.weight).sum();
                if (total - 1.0).abs() > 1e-9 {
                    return bad(format!("group weights sum to {total}, not 1"));
                }
                for (j, g) in m.groups.iter().enumerate() {
                    let finite = [g.weight, g.benefit_mean, g.benefit_sd, g.cost_mean, g.cost_sd]
                        .iter()
                        .all(|v| v.is_finite());
                    if !finite || g.weight < 0.0 || g.benefit_sd < 0.0 || g.cost_sd < 0.0 {
                        return bad(format!("group {j}: weights and spreads must be finite and nonnegative"));
                    }
                }
                if !(m.income_max > 0.0 && m.income_max.is_finite()) {
                    return bad(format!("income_max must be positive, got {}", m.income_max));
                }
            }
            DgpKind::CustomTable { rows } => {
                if rows.is_empty() {
                    return bad("population table is empty".into());
                }
                for (i, r) in rows.iter().enumerate() {
                    let finite = [r.weight, r.gamma, r.r, r.income].iter().all(|v| v.is_finite());
                    if !finite || r.weight < 0.0 || r.income < 0.0 {
                        return bad(format!("population row {i} has invalid values"));
                    }
                }
                if rows.iter().map(|r| r.weight).sum::<f64>() <= 0.0 {
                    return bad("population weights sum to zero".into());
                }
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            DgpKind::Prop1(_) => "prop1",
            DgpKind::CalibratedMixture(_) => "calibrated_mixture",
            DgpKind::CustomTable { .. } => "custom_table",
        }
    }

    pub fn groups(&self) -> usize {
        match &self.kind {
            DgpKind::Prop1(_) => 1,
            DgpKind::CalibratedMixture(m) => m.groups.len(),
            DgpKind::CustomTable { rows } => rows.iter().map(|r| r.group + 1).max().unwrap_or(1),
        }
    }
}

/// Welfare `W(g)` and budget `B(g)` of a policy in the population.
pub fn population_moments(dgp: &DgpSpec, policy: &ThresholdPolicy) -> Result<(f64, f64)> {
    let t = policy.thresholds();
    match &dgp.kind {
        DgpKind::Prop1(p) => {
            if t.len() != 1 {
                return Err(Error::InvalidInput(format!(
                    "prop1 has one group, policy has {}",
                    t.len()
                )));
            }
            let t = t[0].min(1.0);
            Ok((t, p.q * t.min(p.t_low) + p.q * (t - p.t_high).max(0.0)))
        }
        DgpKind::CalibratedMixture(m) => {
            if t.len() != m.groups.len() {
                return Err(Error::InvalidInput(format!(
                    "mixture has {} groups, policy has {}",
                    m.groups.len(),
                    t.len()
                )));
            }
            let (mut w, mut b) = (0.0, 0.0);
            for (g, &tj) in m.groups.iter().zip(t) {
                let share = g.weight * tj.min(m.income_max) / m.income_max;
                w += share * g.benefit_mean;
                b += share * g.cost_mean;
            }
            Ok((w, b))
        }
        DgpKind::CustomTable { rows } => {
            let total: f64 = rows.iter().map(|r| r.weight).sum();
            let (mut w, mut b) = (0.0, 0.0);
            for r in rows {
                if policy.assign(&Covariates { income: r.income, group: r.group })? {
                    w += r.weight * r.gamma;
                    b += r.weight * r.r;
                }
            }
            Ok((w / total, b / total))
        }
    }
}

/// A population-level optimum over a grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PopulationOptimum {
    pub policy: ThresholdPolicy,
    /// Grid row, or `None` for a null policy outside the grid.
    pub index: Option<usize>,
    pub welfare: f64,
    pub budget: f64,
    /// Value of the maximized objective.
    pub objective: f64,
}

fn grid_moments(dgp: &DgpSpec, grid: &PolicyGrid) -> Result<Vec<(f64, f64)>> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty policy grid".into()));
    }
    grid.policies().iter().map(|p| population_moments(dgp, p)).collect()
}

fn best_by<F: Fn(f64, f64) -> Option<f64>>(
    grid: &PolicyGrid,
    moments: &[(f64, f64)],
    objective: F,
) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &(w, b)) in moments.iter().enumerate() {
        let Some(v) = objective(w, b) else { continue };
        best = match best {
            Some((j, bv)) if bv > v || (bv == v && grid.policies()[j] <= grid.policies()[i]) => {
                Some((j, bv))
            }
            _ => Some((i, v)),
        };
    }
    best
}

fn null_optimum(grid: &PolicyGrid) -> Result<PopulationOptimum> {
    Ok(PopulationOptimum {
        policy: ThresholdPolicy::null(grid.groups())?,
        index: grid.null_index(),
        welfare: 0.0,
        budget: 0.0,
        objective: 0.0,
    })
}

/// Brute-force `argmax W(g)` over `{g in grid : B(g) <= k}`; the null policy if none qualifies.
pub fn constrained_optimum(dgp: &DgpSpec, grid: &PolicyGrid, k: f64) -> Result<PopulationOptimum> {
    let moments = grid_moments(dgp, grid)?;
    match best_by(grid, &moments, |w, b| (b <= k).then_some(w)) {
        Some((i, w)) => Ok(PopulationOptimum {
            policy: grid.policies()[i].clone(),
            index: Some(i),
            welfare: w,
            budget: moments[i].1,
            objective: w,
        }),
        None => null_optimum(grid),
    }
}

/// Brute-force `argmax W(g) - lambda_bar (B(g) - k)+` over the grid and the null policy.
///
/// Fails with [`Error::Invariant`] unless both the objective and the welfare of
/// the result are at least the constrained optimum's welfare.
pub fn tradeoff_optimum(
    dgp: &DgpSpec,
    grid: &PolicyGrid,
    k: f64,
    lambda_bar: f64,
) -> Result<PopulationOptimum> {
    if !(lambda_bar >= 0.0) {
        return Err(Error::InvalidInput(format!("lambda_bar must be >= 0, got {lambda_bar}")));
    }
    let moments = grid_moments(dgp, grid)?;
    let hinge = |w: f64, b: f64| {
        let excess = (b - k).max(0.0);
        if excess == 0.0 {
            w
        } else {
            w - lambda_bar * excess
        }
    };
    let mut best = match best_by(grid, &moments, |w, b| Some(hinge(w, b))) {
        Some((i, v)) => PopulationOptimum {
            policy: grid.policies()[i].clone(),
            index: Some(i),
            welfare: moments[i].0,
            budget: moments[i].1,
            objective: v,
        },
        None => null_optimum(grid)?,
    };
    let null_value = hinge(0.0, 0.0);
    if grid.null_index().is_none() && null_value >= best.objective {
        best = null_optimum(grid)?;
        best.objective = null_value;
    }
    // Only a feasible constrained optimum is a valid comparison point.
    let constrained = constrained_optimum(dgp, grid, k)?;
    if constrained.budget <= k
        && (best.objective < constrained.welfare || best.welfare < constrained.welfare)
    {
        return Err(Error::Invariant(format!(
            "trade-off optimum (objective {}, welfare {}) below constrained optimum welfare {}",
            best.objective, best.welfare, constrained.welfare
        )));
    }
    Ok(best)
}

/// `n` i.i.d. experimental records.
///
/// Treatment is Bernoulli(`propensity`) independent of everything else. The
/// control outcome is zero and the treated outcome is the unit's benefit, so
/// `y = d * benefit`. Every treated unit enrolls and costs `excess + kappa`.
pub fn draw_sample(dgp: &DgpSpec, n: usize, seed: u64) -> Result<Vec<RawRecord>> {
    dgp.validate()?;
    if n == 0 {
        return Err(Error::InvalidInput("sample size must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut emit = |rng: &mut ChaCha8Rng, income: f64, group: usize, gamma: f64, r: f64| {
        let d = rng.gen_bool(dgp.propensity);
        let x = Covariates::new(income, group)?;
        let (y, c) = if d { (gamma, r + dgp.kappa) } else { (0.0, 0.0) };
        out.push(RawRecord::new(y, c, d, d, x, CellId(0))?);
        Ok::<(), Error>(())
    };
    match &dgp.kind {
        DgpKind::Prop1(p) => {
            for _ in 0..n {
                let x: f64 = rng.gen();
                let costly = !(p.t_low..=p.t_high).contains(&x) && rng.gen_bool(p.q);
                emit(&mut rng, x, 0, 1.0, f64::from(u8::from(costly)))?;
            }
        }
        DgpKind::CalibratedMixture(m) => {
            let pick = WeightedIndex::new(m.groups.iter().map(|g| g.weight))
                .map_err(|e| Error::InvalidInput(format!("group weights: {e}")))?;
            let benefit: Vec<Normal<f64>> = m
                .groups
                .iter()
                .map(|g| Normal::new(g.benefit_mean, g.benefit_sd))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::InvalidInput(format!("benefit law: {e}")))?;
            let cost: Vec<Normal<f64>> = m
                .groups
                .iter()
                .map(|g| Normal::new(g.cost_mean, g.cost_sd))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::InvalidInput(format!("cost law: {e}")))?;
            for _ in 0..n {
                let j = pick.sample(&mut rng);
                let income = rng.gen::<f64>() * m.income_max;
                let gamma = benefit[j].sample(&mut rng);
                let r = cost[j].sample(&mut rng);
                emit(&mut rng, income, j, gamma, r)?;
            }
        }
        DgpKind::CustomTable { rows } => {
            let pick = WeightedIndex::new(rows.iter().map(|r| r.weight))
                .map_err(|e| Error::InvalidInput(format!("population weights: {e}")))?;
            for _ in 0..n {
                let row = rows[pick.sample(&mut rng)];
                emit(&mut rng, row.income, row.group, row.gamma, row.r)?;
            }
        }
    }
    Ok(out)
}
