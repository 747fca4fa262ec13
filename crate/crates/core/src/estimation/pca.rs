use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::EstimationError;

const POWER_TOL: f64 = 1e-12;
const POWER_MAX_ITER: usize = 10_000;

#[derive(Clone, Debug, Serialize)]
pub struct PcaModel {
    /// Means of the retained columns.
    pub means: Vec<f64>,
    /// Sample standard deviations (n − 1) of the retained columns.
    pub sds: Vec<f64>,
    /// Unit-norm loading on the retained columns.
    pub loading: Vec<f64>,
    /// Leading eigenvalue of the correlation matrix.
    pub eigenvalue: f64,
    /// `λ1 / k` over the retained columns.
    pub explained_share: f64,
    /// Indices (into the input) of the columns used.
    pub columns: Vec<usize>,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

impl PcaModel {
    /// Score of one full input row.
    pub fn score(&self, row: &[f64]) -> f64 {
        self.columns
            .iter()
            .enumerate()
            .map(|(i, &c)| (row[c] - self.means[i]) / self.sds[i] * self.loading[i])
            .sum()
    }
}

/// First principal component of the standardized columns of `x`, with one
/// score per row.
pub fn pca_first_component(x: &DMatrix<f64>) -> Result<(PcaModel, Vec<f64>), EstimationError> {
    let (n, k_all) = x.shape();
    if k_all == 0 {
        return Err(EstimationError::SingularInput("no attribute columns".into()));
    }
    if n <= k_all {
        return Err(EstimationError::InvalidInput(format!(
            "need more rows than columns, got {n}x{k_all}"
        )));
    }
    let mut warnings = Vec::new();
    let mut columns = Vec::new();
    let mut means = Vec::new();
    let mut sds = Vec::new();
    for j in 0..k_all {
        let col = x.column(j);
        let mean = col.mean();
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        if var > 0.0 && var.is_finite() {
            columns.push(j);
            means.push(mean);
            sds.push(var.sqrt());
        } else {
            warnings.push(format!("attribute column {} is constant and was dropped", j + 1));
        }
    }
    if columns.is_empty() {
        return Err(EstimationError::SingularInput("every attribute column is constant".into()));
    }
    let k = columns.len();
    let z = DMatrix::from_fn(n, k, |i, j| (x[(i, columns[j])] - means[j]) / sds[j]);
    let corr = (z.transpose() * &z) / (n - 1) as f64;

    // Uneven start so no eigenvector of a symmetric 2x2 block is hit exactly.
    let mut v = DVector::from_fn(k, |i, _| 1.0 / ((i + 1) as f64).sqrt());
    v /= v.norm();
    let mut iterations = 0;
    let mut change = f64::INFINITY;
    while iterations < POWER_MAX_ITER {
        iterations += 1;
        let mut next = &corr * &v;
        let norm = next.norm();
        if !(norm > 0.0) {
            return Err(EstimationError::SingularInput("correlation matrix is zero".into()));
        }
        next /= norm;
        change = (&next - &v).amax();
        v = next;
        if change <= POWER_TOL {
            break;
        }
    }
    if change > POWER_TOL {
        return Err(EstimationError::ConvergenceFailure(format!(
            "power iteration stopped after {iterations} iterations with eigenvector change {change:e}"
        )));
    }
    let imax = v.iamax();
    if v[imax] < 0.0 {
        v.neg_mut();
    }
    let eigenvalue = v.dot(&(&corr * &v));
    let scores = (&z * &v).iter().copied().collect();
    Ok((
        PcaModel {
            means,
            sds,
            loading: v.iter().copied().collect(),
            eigenvalue,
            explained_share: eigenvalue / k as f64,
            columns,
            iterations,
            warnings,
        },
        scores,
    ))
}
