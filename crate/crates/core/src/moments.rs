//! Sample welfare and budget over a policy grid, and the covariance of the
//! per-unit budget contributions across policies.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::policy::{PolicyGrid, ThresholdPolicy};
use crate::scoring::ScoredRecord;

/// Grids above this size need [`MomentOptions::allow_large_grid`].
pub const MAX_GRID_POLICIES: usize = 5000;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MomentOptions {
    pub allow_large_grid: bool,
}

/// Per-policy sample moments aligned with grid order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentTable {
    pub n: usize,
    pub policies: Vec<ThresholdPolicy>,
    pub w_hat: Vec<f64>,
    pub b_hat: Vec<f64>,
    /// Per-unit standard deviation of `r* g(x)`.
    pub sigma_b: Vec<f64>,
    /// Per-unit covariance of `r* g(x)` across policies.
    pub cov_b: Matrix,
}

impl MomentTable {
    pub fn len(&self) -> usize {
        self.policies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.policies.is_empty()
    }

    /// Structural checks for tables read from disk.
    pub fn validate(&self) -> Result<()> {
        let m = self.policies.len();
        if m == 0 {
            return Err(Error::InvalidInput("moment table has no policies".into()));
        }
        if self.n == 0 {
            return Err(Error::InvalidInput("moment table has n = 0".into()));
        }
        if self.w_hat.len() != m || self.b_hat.len() != m || self.sigma_b.len() != m {
            return Err(Error::InvalidInput(
                "moment table columns differ in length".into(),
            ));
        }
        if self.cov_b.dim() != m || self.cov_b.as_slice().len() != m * m {
            return Err(Error::InvalidInput(format!(
                "covariance is {0}x{0} for {m} policies",
                self.cov_b.dim()
            )));
        }
        let scale = self.cov_b.diagonal().iter().fold(0.0, |a: f64, b| a.max(b.abs()));
        if !self.cov_b.is_symmetric(1e-12 * scale.max(1.0)) {
            return Err(Error::InvalidInput("covariance is not symmetric".into()));
        }
        let groups = self.policies[0].groups();
        if self.policies.iter().any(|p| p.groups() != groups) {
            return Err(Error::InvalidInput("policies differ in group count".into()));
        }
        Ok(())
    }
}

fn check_scores(scores: &[ScoredRecord]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::InvalidInput("no scored records".into()));
    }
    Ok(())
}

/// `(1/n) sum_i gamma*_i g(x_i)`.
pub fn welfare_hat(scores: &[ScoredRecord], policy: &ThresholdPolicy) -> Result<f64> {
    check_scores(scores)?;
    let mut sum = 0.0;
    for s in scores {
        if policy.assign(&s.x)? {
            sum += s.gamma_star;
        }
    }
    Ok(sum / scores.len() as f64)
}

/// `(1/n) sum_i r*_i g(x_i)`.
pub fn budget_hat(scores: &[ScoredRecord], policy: &ThresholdPolicy) -> Result<f64> {
    check_scores(scores)?;
    let mut sum = 0.0;
    for s in scores {
        if policy.assign(&s.x)? {
            sum += s.r_star;
        }
    }
    Ok(sum / scores.len() as f64)
}

/// Running sums of `gamma*`, `r*` and `r*^2` over the cutoff bins of one group.
struct GroupSums {
    gamma: Vec<f64>,
    r: Vec<f64>,
    r2: Vec<f64>,
}

/// Fills every row of the table for `grid`.
///
/// A threshold policy treats, within group `j`, exactly the records whose income
/// falls at or below its `j`-th cutoff. Records are binned by the first cutoff
/// that covers them (accumulated in record order), and policy sums are read off
/// cumulative bin sums. For two policies the joint indicator is the policy with
/// the smaller cutoff in each group, so
/// `cov(g, g') = (1/n) sum_j S2_j(min(k_j, k'_j)) - b(g) b(g')`.
pub fn moment_table(
    scores: &[ScoredRecord],
    grid: &PolicyGrid,
    options: MomentOptions,
) -> Result<MomentTable> {
    check_scores(scores)?;
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty policy grid".into()));
    }
    if grid.len() > MAX_GRID_POLICIES && !options.allow_large_grid {
        return Err(Error::GridTooLarge {
            size: grid.len(),
            limit: MAX_GRID_POLICIES,
        });
    }
    let spec = grid.spec();
    let groups = spec.groups();
    let mut sums: Vec<GroupSums> = (0..groups)
        .map(|j| {
            let bins = spec.cutoffs(j).len();
            GroupSums {
                gamma: vec![0.0; bins],
                r: vec![0.0; bins],
                r2: vec![0.0; bins],
            }
        })
        .collect();
    for s in scores {
        let j = s.x.group;
        if j >= groups {
            return Err(Error::InvalidInput(format!(
                "record group {j} out of range for a {groups}-group grid"
            )));
        }
        let cutoffs = spec.cutoffs(j);
        let bin = cutoffs.partition_point(|t| *t < s.x.income);
        if bin < cutoffs.len() {
            let g = &mut sums[j];
            g.gamma[bin] += s.gamma_star;
            g.r[bin] += s.r_star;
            g.r2[bin] += s.r_star * s.r_star;
        }
    }
    for g in &mut sums {
        for k in 1..g.gamma.len() {
            g.gamma[k] += g.gamma[k - 1];
            g.r[k] += g.r[k - 1];
            g.r2[k] += g.r2[k - 1];
        }
    }

    let n = scores.len();
    let nf = n as f64;
    let m = grid.len();
    let index: Vec<Vec<usize>> = (0..m)
        .map(|i| (0..groups).map(|j| grid.cutoff_index(i, j)).collect())
        .collect();
    let mut w_hat = Vec::with_capacity(m);
    let mut b_hat = Vec::with_capacity(m);
    for ks in &index {
        let (mut w, mut b) = (0.0, 0.0);
        for (j, &k) in ks.iter().enumerate() {
            w += sums[j].gamma[k];
            b += sums[j].r[k];
        }
        w_hat.push(w / nf);
        b_hat.push(b / nf);
    }

    let mut cov_b = Matrix::zeros(m);
    for a in 0..m {
        for c in 0..=a {
            let mut s2 = 0.0;
            for j in 0..groups {
                s2 += sums[j].r2[index[a][j].min(index[c][j])];
            }
            let mut v = s2 / nf - b_hat[a] * b_hat[c];
            if a == c {
                v = v.max(0.0);
            }
            cov_b[(a, c)] = v;
            cov_b[(c, a)] = v;
        }
    }
    let sigma_b = cov_b.diagonal().into_iter().map(f64::sqrt).collect();

    Ok(MomentTable {
        n,
        policies: grid.policies().to_vec(),
        w_hat,
        b_hat,
        sigma_b,
        cov_b,
    })
}
