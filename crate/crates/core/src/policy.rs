//! Group-wise income threshold policies and the finite grids they are searched over.
//!
//! A policy assigns eligibility to a unit iff its income is at or below the
//! cutoff for its group. Groups are dense 0-based indices; any top-coding of
//! raw categories (e.g. "two or more children") happens at ingestion.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Observed characteristics used by a policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Covariates {
    /// Income as a percentage of the poverty line.
    pub income: f64,
    pub group: usize,
}

impl Covariates {
    pub fn new(income: f64, group: usize) -> Result<Self> {
        if !income.is_finite() || income < 0.0 {
            return Err(Error::InvalidInput(format!(
                "income must be finite and nonnegative, got {income}"
            )));
        }
        Ok(Self { income, group })
    }
}

/// One income cutoff per group.
#[derive(Debug, Clone, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ThresholdPolicy {
    thresholds: Vec<f64>,
}

impl ThresholdPolicy {
    pub fn new(thresholds: Vec<f64>) -> Result<Self> {
        if thresholds.is_empty() {
            return Err(Error::InvalidInput("policy needs at least one group".into()));
        }
        if let Some(t) = thresholds.iter().find(|t| !t.is_finite() || **t < 0.0) {
            return Err(Error::InvalidInput(format!(
                "thresholds must be finite and nonnegative, got {t}"
            )));
        }
        Ok(Self { thresholds })
    }

    /// The policy that assigns nobody.
    pub fn null(groups: usize) -> Result<Self> {
        if groups == 0 {
            return Err(Error::InvalidInput("group count must be at least 1".into()));
        }
        Ok(Self {
            thresholds: vec![0.0; groups],
        })
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn groups(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_null(&self) -> bool {
        self.thresholds.iter().all(|t| *t == 0.0)
    }

    /// Eligibility of `x`: `income <= thresholds[group]`.
    pub fn assign(&self, x: &Covariates) -> Result<bool> {
        let cutoff = self.thresholds.get(x.group).ok_or_else(|| {
            Error::InvalidInput(format!(
                "group {} out of range for a {}-group policy",
                x.group,
                self.thresholds.len()
            ))
        })?;
        Ok(x.income <= *cutoff)
    }

    /// Component-wise `self <= other`.
    pub fn is_nested_in(&self, other: &ThresholdPolicy) -> bool {
        self.thresholds.len() == other.thresholds.len()
            && self
                .thresholds
                .iter()
                .zip(&other.thresholds)
                .all(|(a, b)| a <= b)
    }
}

/// Candidate cutoffs for each group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct GridSpec {
    cutoffs: Vec<Vec<f64>>,
}

impl GridSpec {
    pub fn new(cutoffs: Vec<Vec<f64>>) -> Result<Self> {
        if cutoffs.is_empty() {
            return Err(Error::InvalidSpec("grid needs at least one group".into()));
        }
        for (j, list) in cutoffs.iter().enumerate() {
            if list.is_empty() {
                return Err(Error::InvalidSpec(format!("group {j} has no cutoffs")));
            }
            if let Some(t) = list.iter().find(|t| !t.is_finite() || **t < 0.0) {
                return Err(Error::InvalidSpec(format!(
                    "group {j}: cutoff {t} is not a finite nonnegative number"
                )));
            }
            if list.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidSpec(format!(
                    "group {j}: cutoffs must be strictly increasing"
                )));
            }
        }
        Ok(Self { cutoffs })
    }

    /// The same evenly spaced cutoffs `start, start + step, ..., <= stop` for every group.
    pub fn uniform(groups: usize, start: f64, stop: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || !(stop >= start) {
            return Err(Error::InvalidSpec(format!(
                "need step > 0 and stop >= start (start {start}, stop {stop}, step {step})"
            )));
        }
        let span = (stop - start) / step;
        let intervals = (span + 1e-9).floor();
        // When the step divides the range, interpolate so that decimal steps
        // land on correctly rounded values (0.6 rather than 6 * 0.1).
        let list: Vec<f64> = if (span - span.round()).abs() <= 1e-9 && intervals > 0.0 {
            (0..=intervals as usize)
                .map(|i| start + (stop - start) * i as f64 / intervals)
                .collect()
        } else {
            (0..=intervals as usize).map(|i| start + step * i as f64).collect()
        };
        Self::new(vec![list; groups])
    }

    pub fn groups(&self) -> usize {
        self.cutoffs.len()
    }

    pub fn cutoffs(&self, group: usize) -> &[f64] {
        &self.cutoffs[group]
    }

    pub fn size(&self) -> usize {
        self.cutoffs
            .iter()
            .try_fold(1usize, |acc, l| acc.checked_mul(l.len()))
            .unwrap_or(usize::MAX)
    }
}

impl TryFrom<Vec<Vec<f64>>> for GridSpec {
    type Error = Error;
    fn try_from(cutoffs: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(cutoffs)
    }
}

impl From<GridSpec> for Vec<Vec<f64>> {
    fn from(spec: GridSpec) -> Self {
        spec.cutoffs
    }
}

/// The full Cartesian product of a [`GridSpec`], in lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyGrid {
    spec: GridSpec,
    policies: Vec<ThresholdPolicy>,
}

impl PolicyGrid {
    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn policies(&self) -> &[ThresholdPolicy] {
        &self.policies
    }

    pub fn len(&self) -> usize {
        self.policies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.policies.is_empty()
    }

    pub fn groups(&self) -> usize {
        self.spec.groups()
    }

    /// Position of `policy`'s cutoff for `group` within that group's cutoff list.
    pub fn cutoff_index(&self, policy: usize, group: usize) -> usize {
        let mut rem = policy;
        for j in (group + 1..self.spec.groups()).rev() {
            rem /= self.spec.cutoffs[j].len();
        }
        rem % self.spec.cutoffs[group].len()
    }

    /// Index of the null policy, if the grid contains it.
    pub fn null_index(&self) -> Option<usize> {
        self.policies.iter().position(ThresholdPolicy::is_null)
    }
}

/// Enumerates every combination of per-group cutoffs, last group varying fastest.
pub fn enumerate_grid(spec: &GridSpec) -> Result<PolicyGrid> {
    let size = spec.size();
    if size == usize::MAX {
        return Err(Error::InvalidSpec("grid size overflows".into()));
    }
    let groups = spec.groups();
    let mut policies = Vec::with_capacity(size);
    let mut digits = vec![0usize; groups];
    for _ in 0..size {
        let thresholds = digits
            .iter()
            .enumerate()
            .map(|(j, &d)| spec.cutoffs[j][d])
            .collect();
        policies.push(ThresholdPolicy { thresholds });
        for j in (0..groups).rev() {
            digits[j] += 1;
            if digits[j] < spec.cutoffs[j].len() {
                break;
            }
            digits[j] = 0;
        }
    }
    Ok(PolicyGrid {
        spec: spec.clone(),
        policies,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(income: f64, group: usize) -> Covariates {
        Covariates::new(income, group).unwrap()
    }

    #[test]
    fn uniform_cutoff_assigns_below() {
        let p = ThresholdPolicy::new(vec![138.0; 3]).unwrap();
        assert!(p.assign(&x(100.0, 0)).unwrap());
        assert!(p.assign(&x(138.0, 2)).unwrap());
        assert!(!p.assign(&x(138.5, 1)).unwrap());
    }

    #[test]
    fn decimal_steps_land_on_rounded_values() {
        let g = GridSpec::uniform(1, 0.0, 1.0, 0.1).unwrap();
        assert_eq!(g.cutoffs(0).len(), 11);
        assert_eq!(g.cutoffs(0)[3], 0.3);
        assert_eq!(g.cutoffs(0)[6], 0.6);
        // a step that does not divide the range stops below `stop`
        assert_eq!(GridSpec::uniform(1, 0.0, 1.0, 0.3).unwrap().cutoffs(0).len(), 4);
    }

    #[test]
    fn null_policy_assigns_nobody() {
        let p = ThresholdPolicy::null(3).unwrap();
        assert_eq!(p.thresholds(), &[0.0, 0.0, 0.0]);
        for g in 0..3 {
            assert!(!p.assign(&x(1.0, g)).unwrap());
            assert!(!p.assign(&x(450.0, g)).unwrap());
        }
        assert!(ThresholdPolicy::null(0).is_err());
    }

    #[test]
    fn group_specific_cutoffs() {
        let p = ThresholdPolicy::new(vec![75.0, 343.0, 160.0]).unwrap();
        assert!(p.assign(&x(200.0, 1)).unwrap());
        assert!(!p.assign(&x(200.0, 2)).unwrap());
    }

    #[test]
    fn out_of_range_group_is_an_error() {
        let p = ThresholdPolicy::new(vec![100.0, 100.0]).unwrap();
        assert!(matches!(p.assign(&x(10.0, 2)), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn rejects_bad_values() {
        assert!(ThresholdPolicy::new(vec![-1.0]).is_err());
        assert!(ThresholdPolicy::new(vec![f64::INFINITY]).is_err());
        assert!(Covariates::new(-0.5, 0).is_err());
        assert!(Covariates::new(f64::NAN, 0).is_err());
    }

    #[test]
    fn default_grid_has_1331_policies() {
        let spec = GridSpec::uniform(3, 0.0, 500.0, 50.0).unwrap();
        assert_eq!(spec.cutoffs(0).len(), 11);
        assert_eq!(*spec.cutoffs(2).last().unwrap(), 500.0);
        let grid = enumerate_grid(&spec).unwrap();
        assert_eq!(grid.len(), 1331);
        assert_eq!(grid.null_index(), Some(0));
    }

    #[test]
    fn single_zero_cutoff_gives_null_grid() {
        let grid = enumerate_grid(&GridSpec::new(vec![vec![0.0]]).unwrap()).unwrap();
        assert_eq!(grid.len(), 1);
        assert!(grid.policies()[0].is_null());
    }

    #[test]
    fn lexicographic_order() {
        let spec = GridSpec::new(vec![vec![100.0, 200.0], vec![100.0, 200.0]]).unwrap();
        let grid = enumerate_grid(&spec).unwrap();
        let got: Vec<&[f64]> = grid.policies().iter().map(|p| p.thresholds()).collect();
        assert_eq!(
            got,
            vec![
                &[100.0, 100.0][..],
                &[100.0, 200.0][..],
                &[200.0, 100.0][..],
                &[200.0, 200.0][..],
            ]
        );
        assert!(grid.policies().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn cutoff_index_decodes_position() {
        let spec = GridSpec::new(vec![vec![0.0, 1.0, 2.0], vec![5.0, 6.0], vec![7.0, 8.0, 9.0, 10.0]])
            .unwrap();
        let grid = enumerate_grid(&spec).unwrap();
        for (i, p) in grid.policies().iter().enumerate() {
            for j in 0..3 {
                assert_eq!(spec.cutoffs(j)[grid.cutoff_index(i, j)], p.thresholds()[j]);
            }
        }
    }

    #[test]
    fn spec_validation() {
        assert!(matches!(GridSpec::new(vec![vec![0.0], vec![]]), Err(Error::InvalidSpec(_))));
        assert!(GridSpec::new(vec![vec![10.0, 10.0]]).is_err());
        assert!(GridSpec::new(vec![vec![20.0, 10.0]]).is_err());
        assert!(GridSpec::new(vec![vec![-5.0, 10.0]]).is_err());
        assert!(GridSpec::new(vec![]).is_err());
    }

    #[test]
    fn nestedness_is_componentwise() {
        let a = ThresholdPolicy::new(vec![50.0, 100.0]).unwrap();
        let b = ThresholdPolicy::new(vec![50.0, 150.0]).unwrap();
        assert!(a.is_nested_in(&b));
        assert!(!b.is_nested_in(&a));
    }
}
