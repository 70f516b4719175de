//! Simulated critical values for the test-inversion budget constraint.
//!
//! The critical value is the lower `alpha` quantile of
//! `min_g h(g) / sigma(g)` for `h ~ N(0, cov)` over the grid policies whose
//! standard deviation clears a floor. The minimum is signed (no absolute value).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::CounterNormal;

/// Jitter multipliers tried in order, scaled by `trace / dim`.
pub const JITTER_SCHEDULE: [f64; 4] = [0.0, 1e-10, 1e-8, 1e-6];

/// Relative default for the sigma floor: `1e-12 * max sigma`.
pub const DEFAULT_SIGMA_FLOOR_REL: f64 = 1e-12;

const DRAW_BLOCK: usize = 256;

/// Lower-triangular `L` with `L L^T = cov + jitter I`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdFactor {
    pub lower: Matrix,
    pub jitter: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn cholesky(a: &Matrix, jitter: f64, min_pivot: f64) -> Option<Matrix> {
    let n = a.dim();
    let mut l = Matrix::zeros(n);
    for j in 0..n {
        let row_j = &l.row(j)[..j];
        let d = a[(j, j)] + jitter - dot(row_j, row_j);
        if !(d > min_pivot) {
            return None;
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..n {
            let s = dot(&l.row(i)[..j], &l.row(j)[..j]);
            l[(i, j)] = (a[(i, j)] - s) / ljj;
        }
    }
    Some(l)
}

/// Cholesky factor of `cov`, adding the smallest diagonal jitter from
/// [`JITTER_SCHEDULE`] that makes every pivot clear `dim * eps * max_diag`.
pub fn psd_factor(cov: &Matrix) -> Result<PsdFactor> {
    let n = cov.dim();
    if n == 0 {
        return Err(Error::InvalidInput("cannot factor an empty matrix".into()));
    }
    let diag = cov.diagonal();
    let max_diag = diag.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    if diag.iter().any(|d| !d.is_finite()) || !cov.is_symmetric(1e-12 * max_diag.max(f64::MIN_POSITIVE)) {
        return Err(Error::InvalidInput("covariance must be finite and symmetric".into()));
    }
    let scale = cov.trace() / n as f64;
    let min_pivot = n as f64 * f64::EPSILON * max_diag;
    let mut last = 0.0;
    for mult in JITTER_SCHEDULE {
        let jitter = mult * scale.max(0.0);
        last = jitter;
        if let Some(lower) = cholesky(cov, jitter, min_pivot) {
            return Ok(PsdFactor { lower, jitter });
        }
    }
    Err(Error::NotPsd { jitter: last })
}

/// Inputs to [`critical_value`].
#[derive(Debug, Clone, Copy)]
pub struct CritValRequest<'a> {
    pub cov_b: &'a Matrix,
    pub alpha: f64,
    pub n_draws: usize,
    pub seed: u64,
    /// Absolute floor on sigma; `None` uses `1e-12 * max sigma`.
    pub sigma_floor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CritValOutcome {
    pub c_alpha: f64,
    pub jitter: f64,
    pub excluded: usize,
    pub sigma_floor: f64,
}

/// Resolves the sigma floor for a set of per-policy standard deviations.
pub fn resolve_sigma_floor(sigmas: &[f64], floor: Option<f64>) -> f64 {
    floor.unwrap_or_else(|| {
        DEFAULT_SIGMA_FLOOR_REL * sigmas.iter().fold(0.0f64, |a, b| a.max(*b))
    })
}

/// Whether a policy enters the normalized minimum.
pub fn survives_floor(sigma: f64, floor: f64) -> bool {
    sigma > 0.0 && sigma >= floor
}

fn validate(req: &CritValRequest<'_>) -> Result<()> {
    if !(req.alpha > 0.0 && req.alpha <= 0.5) {
        return Err(Error::InvalidInput(format!(
            "alpha must lie in (0, 0.5], got {}",
            req.alpha
        )));
    }
    if req.n_draws == 0 {
        return Err(Error::InvalidInput("need at least one draw".into()));
    }
    if let Some(f) = req.sigma_floor {
        if !(f >= 0.0 && f.is_finite()) {
            return Err(Error::InvalidInput(format!("sigma floor must be finite and >= 0, got {f}")));
        }
    }
    Ok(())
}

/// Simulates the minima of the normalized Gaussian process and returns
/// their lower empirical `alpha` quantile (order statistic `ceil(alpha * draws)`).
pub fn critical_value(req: &CritValRequest<'_>) -> Result<CritValOutcome> {
    let mut sim = simulate_minima(req)?;
    sim.minima.sort_unstable_by(f64::total_cmp);
    Ok(CritValOutcome {
        c_alpha: lower_quantile(&sim.minima, req.alpha),
        jitter: sim.jitter,
        excluded: sim.excluded,
        sigma_floor: sim.sigma_floor,
    })
}

/// `sorted[ceil(alpha * len) - 1]`, clamped to the valid range.
pub fn lower_quantile(sorted: &[f64], alpha: f64) -> f64 {
    let k = (alpha * sorted.len() as f64).ceil() as usize;
    sorted[k.clamp(1, sorted.len()) - 1]
}

/// Per-draw minima in draw order.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedMinima {
    pub minima: Vec<f64>,
    pub sigma_floor: f64,
    pub excluded: usize,
    pub jitter: f64,
}

pub fn simulate_minima(req: &CritValRequest<'_>) -> Result<SimulatedMinima> {
    validate(req)?;
    let cov = req.cov_b;
    let sigmas: Vec<f64> = cov.diagonal().into_iter().map(|d| d.max(0.0).sqrt()).collect();
    let floor = resolve_sigma_floor(&sigmas, req.sigma_floor);
    let keep: Vec<usize> = (0..sigmas.len())
        .filter(|&i| survives_floor(sigmas[i], floor))
        .collect();
    if keep.is_empty() {
        return Err(Error::EmptyGrid { floor });
    }
    let excluded = sigmas.len() - keep.len();
    let factor = psd_factor(&cov.submatrix(&keep))?;
    let inv_sigma: Vec<f64> = keep.iter().map(|&i| 1.0 / sigmas[i]).collect();
    let m = keep.len();
    let gen = CounterNormal::new(req.seed);

    let mut minima = Vec::with_capacity(req.n_draws);
    let mut z = vec![0.0; m * DRAW_BLOCK];
    let mut h = vec![0.0; m * DRAW_BLOCK];
    let mut start = 0usize;
    while start < req.n_draws {
        let block = DRAW_BLOCK.min(req.n_draws - start);
        for (row, &policy) in keep.iter().enumerate() {
            for b in 0..block {
                z[row * block + b] = gen.normal((start + b) as u64, policy as u64);
            }
        }
        // h (m x block) = L (m x m) * z (m x block), all row-major.
        // SAFETY: `lower` is m x m; `z` and `h` hold at least m * block entries.
        unsafe {
            matrixmultiply::dgemm(
                m,
                m,
                block,
                1.0,
                factor.lower.as_slice().as_ptr(),
                m as isize,
                1,
                z.as_ptr(),
                block as isize,
                1,
                0.0,
                h.as_mut_ptr(),
                block as isize,
                1,
            );
        }
        for b in 0..block {
            let mut lo = f64::INFINITY;
            for row in 0..m {
                let v = h[row * block + b] * inv_sigma[row];
                if v < lo {
                    lo = v;
                }
            }
            minima.push(lo);
        }
        start += block;
    }
    Ok(SimulatedMinima {
        minima,
        sigma_floor: floor,
        excluded,
        jitter: factor.jitter,
    })
}
