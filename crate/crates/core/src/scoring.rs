//! Per-unit benefit and excess-cost scores from randomized experimental records.
//!
//! Two constructions are provided. [`ipw_scores`] weights by a known assignment
//! probability. [`aipw_scores`] estimates the propensity and the conditional
//! means of the outcome and of the excess cost with a saturated model on the
//! discrete confounder cells, then augments the weighted residuals.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::Covariates;

/// Opaque id of a discrete confounder cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CellId(pub u32);

impl std::fmt::Display for CellId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

/// One experimental unit.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub y: f64,
    /// Observed cost to the government; zero outside the treatment arm.
    pub c: f64,
    /// Enrolled in the program.
    pub m: bool,
    /// Assigned to the treatment arm.
    pub d: bool,
    pub x: Covariates,
    pub v: CellId,
}

impl RawRecord {
    pub fn new(y: f64, c: f64, m: bool, d: bool, x: Covariates, v: CellId) -> Result<Self> {
        if !y.is_finite() || !c.is_finite() {
            return Err(Error::InvalidInput("y and c must be finite".into()));
        }
        if m && !d {
            return Err(Error::InvalidInput(
                "enrollment requires assignment (m = 1 with d = 0)".into(),
            ));
        }
        if !d && c != 0.0 {
            return Err(Error::InvalidInput(format!(
                "cost must be zero outside the treatment arm, got {c}"
            )));
        }
        Ok(Self { y, c, m, d, x, v })
    }

    /// Cost in excess of the status-quo spend on an enrollee.
    pub fn excess_cost(&self, kappa: f64) -> f64 {
        excess_cost_transform(self.c, self.m, kappa)
    }
}

/// Estimated benefit and excess cost of treating one unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredRecord {
    pub gamma_star: f64,
    pub r_star: f64,
    pub x: Covariates,
}

/// `c - kappa * m`: observed cost net of what an enrollee already costs.
pub fn excess_cost_transform(c: f64, m: bool, kappa: f64) -> f64 {
    c - kappa * f64::from(u8::from(m))
}

/// Known assignment probabilities.
#[derive(Debug, Clone, PartialEq)]
pub enum Propensity {
    Constant(f64),
    ByCell(BTreeMap<CellId, f64>),
}

impl Propensity {
    fn get(&self, v: CellId) -> Result<f64> {
        match self {
            Propensity::Constant(p) => Ok(*p),
            Propensity::ByCell(map) => map
                .get(&v)
                .copied()
                .ok_or_else(|| Error::InvalidInput(format!("no propensity given for cell {v}"))),
        }
    }
}

fn check_clip(clip: f64) -> Result<()> {
    if !(0.0..0.5).contains(&clip) {
        return Err(Error::InvalidInput(format!(
            "propensity clip must lie in [0, 0.5), got {clip}"
        )));
    }
    Ok(())
}

/// Inverse-propensity scores with a known assignment probability.
///
/// Known propensities are never clipped: a probability outside
/// `[clip, 1 - clip]` (or outside the open unit interval) is an overlap error.
pub fn ipw_scores(
    records: &[RawRecord],
    propensity: &Propensity,
    kappa: f64,
    clip: f64,
) -> Result<Vec<ScoredRecord>> {
    check_clip(clip)?;
    records
        .iter()
        .map(|r| {
            let p = propensity.get(r.v)?;
            if !(p > 0.0 && p < 1.0 && p >= clip && p <= 1.0 - clip) {
                return Err(Error::OverlapViolation {
                    cell: r.v.0,
                    propensity: p,
                    lower: clip,
                    upper: 1.0 - clip,
                });
            }
            let weight = if r.d { 1.0 / p } else { -1.0 / (1.0 - p) };
            let r_star = if r.d { r.excess_cost(kappa) / p } else { 0.0 };
            Ok(ScoredRecord {
                gamma_star: weight * r.y,
                r_star,
                x: r.x,
            })
        })
        .collect()
}

/// Which variable a saturated fit averages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Variable {
    Outcome,
    ExcessCost { kappa: f64 },
}

impl Variable {
    fn of(&self, r: &RawRecord) -> f64 {
        match self {
            Variable::Outcome => r.y,
            Variable::ExcessCost { kappa } => r.excess_cost(*kappa),
        }
    }
}

/// Saturated-model estimates for one confounder cell. Arrays are indexed by `d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellFit {
    pub mean: [f64; 2],
    pub count: [usize; 2],
    /// Treated share of the cell, after clipping.
    pub propensity: f64,
}

impl CellFit {
    /// `d / p - (1 - d) / (1 - p)`.
    pub fn weight(&self, d: bool) -> f64 {
        if d {
            1.0 / self.propensity
        } else {
            -1.0 / (1.0 - self.propensity)
        }
    }
}

/// Cell means by `(v, d)` and cell propensities by `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct SaturatedFit {
    cells: BTreeMap<CellId, CellFit>,
}

impl SaturatedFit {
    /// Assembles a fit from precomputed cells, e.g. to force particular nuisance values.
    pub fn from_cells(cells: impl IntoIterator<Item = (CellId, CellFit)>) -> Self {
        Self {
            cells: cells.into_iter().collect(),
        }
    }

    pub fn cell(&self, v: CellId) -> Result<&CellFit> {
        self.cells
            .get(&v)
            .ok_or_else(|| Error::InvalidInput(format!("cell {v} was not fitted")))
    }

    pub fn mean(&self, v: CellId, d: bool) -> Result<f64> {
        Ok(self.cell(v)?.mean[usize::from(d)])
    }

    pub fn propensity(&self, v: CellId) -> Result<f64> {
        Ok(self.cell(v)?.propensity)
    }

    pub fn cells(&self) -> impl Iterator<Item = (&CellId, &CellFit)> {
        self.cells.iter()
    }
}

/// Fits cell means of `variable` by `(v, d)` and treated shares by `v`.
///
/// Every cell needs both arms; the treated share is clipped to `[clip, 1 - clip]`.
pub fn fit_saturated(records: &[RawRecord], variable: Variable, clip: f64) -> Result<SaturatedFit> {
    check_clip(clip)?;
    if records.is_empty() {
        return Err(Error::InvalidInput("no records to fit".into()));
    }
    let mut sums: BTreeMap<CellId, ([f64; 2], [usize; 2])> = BTreeMap::new();
    for r in records {
        let entry = sums.entry(r.v).or_insert(([0.0; 2], [0; 2]));
        let arm = usize::from(r.d);
        entry.0[arm] += variable.of(r);
        entry.1[arm] += 1;
    }
    let mut cells = BTreeMap::new();
    for (v, (sum, count)) in sums {
        if let Some(arm) = (0..2).find(|&a| count[a] == 0) {
            return Err(Error::DegenerateCell {
                cell: v.0,
                missing_arm: arm as u8,
            });
        }
        let share = count[1] as f64 / (count[0] + count[1]) as f64;
        cells.insert(
            v,
            CellFit {
                mean: [sum[0] / count[0] as f64, sum[1] / count[1] as f64],
                count,
                propensity: share.clamp(clip, 1.0 - clip),
            },
        );
    }
    Ok(SaturatedFit { cells })
}

/// Augmented scores with saturated-model nuisance estimates.
pub fn aipw_scores(records: &[RawRecord], kappa: f64, clip: f64) -> Result<Vec<ScoredRecord>> {
    let y_fit = fit_saturated(records, Variable::Outcome, clip)?;
    let z_fit = fit_saturated(records, Variable::ExcessCost { kappa }, clip)?;
    aipw_from_fits(records, &y_fit, &z_fit, kappa)
}

/// Augmented scores from given fits. Propensities are read from `y_fit`.
///
/// ```text
/// gamma* = m_y(v,1) - m_y(v,0) + a(v,d) (y - m_y(v,d)),  a = d/p - (1-d)/(1-p)
/// r*     = m_z(v,1) + (d/p) (z - m_z(v,d))
/// ```
pub fn aipw_from_fits(
    records: &[RawRecord],
    y_fit: &SaturatedFit,
    z_fit: &SaturatedFit,
    kappa: f64,
) -> Result<Vec<ScoredRecord>> {
    records
        .iter()
        .map(|r| {
            let cy = y_fit.cell(r.v)?;
            let cz = z_fit.cell(r.v)?;
            let arm = usize::from(r.d);
            let gamma_star = cy.mean[1] - cy.mean[0] + cy.weight(r.d) * (r.y - cy.mean[arm]);
            let r_star = if r.d {
                cz.mean[1] + (r.excess_cost(kappa) - cz.mean[1]) / cy.propensity
            } else {
                cz.mean[1]
            };
            Ok(ScoredRecord {
                gamma_star,
                r_star,
                x: r.x,
            })
        })
        .collect()
}
