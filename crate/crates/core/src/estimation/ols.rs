use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{EstimationError, SampleRow};
use crate::data::group_by_market_rows;
use crate::hedonic::Market;
use crate::par::Execution;

#[derive(Clone, Debug)]
pub struct OlsFit {
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub residuals: Vec<f64>,
    pub r_squared: f64,
    /// Residual sum of squares.
    pub rss: f64,
    pub n: usize,
}

/// Least squares through a Householder QR factorisation.
pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<OlsFit, EstimationError> {
    let (n, p) = x.shape();
    if n <= p {
        return Err(EstimationError::InvalidInput(format!(
            "need more observations than regressors, got n={n} p={p}"
        )));
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let diag_max = (0..p).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    let rank = (0..p).filter(|&i| r[(i, i)].abs() > 1e-10 * diag_max).count();
    if rank < p || diag_max == 0.0 {
        return Err(EstimationError::RankDeficient { rank, cols: p });
    }
    let qty = qr.q().transpose() * y;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or(EstimationError::RankDeficient { rank, cols: p })?;
    let resid = y - x * &beta;
    let rss = resid.norm_squared();
    let mean = y.mean();
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let r_squared = if tss > 0.0 { (1.0 - rss / tss).clamp(0.0, 1.0) } else { 1.0 };
    let sigma2 = rss / (n - p) as f64;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or(EstimationError::RankDeficient { rank, cols: p })?;
    let std_errors = (0..p)
        .map(|i| (sigma2 * r_inv.row(i).norm_squared()).sqrt())
        .collect();
    Ok(OlsFit {
        coefficients: beta.iter().copied().collect(),
        std_errors,
        residuals: resid.iter().copied().collect(),
        r_squared,
        rss,
        n,
    })
}

/// Per-market regression of rent on `[1, ln s, score]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HedonicFit {
    pub market_id: String,
    pub theta1: f64,
    pub theta2: f64,
    pub delta: f64,
    pub se_theta1: f64,
    pub se_theta2: f64,
    pub se_delta: f64,
    pub r_squared: f64,
    pub n: usize,
}

impl HedonicFit {
    pub fn market(&self) -> Market {
        Market {
            market_id: self.market_id.clone(),
            theta1: self.theta1,
            theta2: self.theta2,
            delta: self.delta,
            n_obs: self.n,
            r_squared: self.r_squared,
        }
    }
}

/// Step 2 for one market. With `with_score = false` the attribute index is
/// left out and `δ` is reported as zero.
pub fn fit_market_hedonic(
    market_id: &str,
    rows: &[&SampleRow],
    with_score: bool,
) -> Result<HedonicFit, EstimationError> {
    let n = rows.len();
    if n < 4 {
        return Err(EstimationError::InvalidInput(format!(
            "market {market_id} has {n} rows, need at least 4"
        )));
    }
    if rows.iter().any(|r| !r.ln_s.is_finite()) {
        return Err(EstimationError::InvalidInput(format!(
            "market {market_id} has non-positive school scores"
        )));
    }
    let p = if with_score { 3 } else { 2 };
    let x = DMatrix::from_fn(n, p, |i, j| match j {
        0 => 1.0,
        1 => rows[i].ln_s,
        _ => rows[i].score,
    });
    let y = DVector::from_iterator(n, rows.iter().map(|r| r.rent));
    let fit = ols(&x, &y)?;
    let c = &fit.coefficients;
    let se = &fit.std_errors;
    Ok(HedonicFit {
        market_id: market_id.to_string(),
        theta1: c[0],
        theta2: c[1],
        delta: if with_score { c[2] } else { 0.0 },
        se_theta1: se[0],
        se_theta2: se[1],
        se_delta: if with_score { se[2] } else { 0.0 },
        r_squared: fit.r_squared,
        n,
    })
}

/// Step 2 for every market, in order of first appearance.
pub fn fit_all_markets(
    rows: &[SampleRow],
    with_score: bool,
    exec: Execution,
) -> Result<Vec<HedonicFit>, EstimationError> {
    let groups = group_by_market_rows(rows, |r| r.market_id.as_str());
    exec.try_map(&groups, |(id, members)| fit_market_hedonic(id, members, with_score))
}
