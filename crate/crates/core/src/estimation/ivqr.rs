//! Grid-search instrumental-variable quantile regression: for each trial
//! `r1`, quantile-regress `ln s − r1 u` on the exogenous regressors plus the
//! instrument and keep the `r1` that drives the instrument's coefficient to
//! zero.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::quantile::{check_loss, lookup, quantile_regression, uses_delta, QrOptions, QrSolution};
use super::{ols, DemandBasis, EstimationError, HedonicFit, QuantileFit, SampleRow};
use crate::par::Execution;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IvqrGrid {
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

impl Default for IvqrGrid {
    fn default() -> Self {
        Self {
            lo: -0.01,
            hi: 0.01,
            steps: 401,
        }
    }
}

impl IvqrGrid {
    pub fn validate(&self) -> Result<(), EstimationError> {
        if !(self.lo < self.hi) || self.steps < 3 || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(EstimationError::InvalidInput(format!(
                "grid needs lo < hi and at least 3 steps, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<f64> {
        let h = (self.hi - self.lo) / (self.steps - 1) as f64;
        (0..self.steps).map(|i| self.lo + h * i as f64).collect()
    }
}

#[derive(Clone, Debug)]
pub struct IvqrFit {
    pub fit: QuantileFit,
    /// Fitted instrument coefficient at the selected `r1`.
    pub instrument_coefficient: f64,
    /// `(r1, |instrument coefficient|)` over the grid.
    pub profile: Vec<(f64, f64)>,
    pub first_stage_f: f64,
}

struct IvDesign {
    x: DMatrix<f64>,
    ln_s: Vec<f64>,
    u: Vec<f64>,
    theta2: Vec<f64>,
    delta: Option<Vec<f64>>,
}

fn build_design(rows: &[SampleRow], fits: &[HedonicFit]) -> Result<IvDesign, EstimationError> {
    let map = fits.iter().map(|f| (f.market_id.as_str(), f)).collect();
    let with_delta = uses_delta(fits);
    let p = if with_delta { 4 } else { 3 };
    let mut data = Vec::with_capacity(rows.len() * p);
    let (mut ln_s, mut u, mut theta2, mut delta) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for r in rows {
        let f = lookup(&map, &r.market_id)?;
        let savings = r
            .savings
            .ok_or_else(|| EstimationError::InvalidInput("instrument needs a savings column".into()))?;
        data.push(1.0);
        data.push(f.theta2);
        if with_delta {
            data.push(f.delta);
        }
        data.push(savings - f.theta1);
        ln_s.push(r.ln_s);
        u.push(r.income - f.theta1);
        theta2.push(f.theta2);
        delta.push(f.delta);
    }
    Ok(IvDesign {
        x: DMatrix::from_row_slice(rows.len(), p, &data),
        ln_s,
        u,
        theta2,
        delta: with_delta.then_some(delta),
    })
}

impl IvDesign {
    fn solve(&self, r1: f64, tau: f64, opts: &QrOptions) -> Result<QrSolution, EstimationError> {
        let y = DVector::from_iterator(self.u.len(), self.ln_s.iter().zip(&self.u).map(|(s, u)| s - r1 * u));
        quantile_regression(&self.x, &y, tau, opts)
    }
}

/// First-stage F statistic for the instrument in a linear regression of
/// `y − θ̂1` on `[1, θ̂2, δ̂, savings − θ̂1]`.
pub fn first_stage_f(rows: &[SampleRow], fits: &[HedonicFit]) -> Result<f64, EstimationError> {
    let d = build_design(rows, fits)?;
    let (n, p) = d.x.shape();
    let u = DVector::from_vec(d.u.clone());
    let full = ols(&d.x, &u)?;
    let restricted = ols(&d.x.columns(0, p - 1).into_owned(), &u)?;
    Ok((restricted.rss - full.rss) / (full.rss / (n - p) as f64))
}

/// Instrumental-variable quantile fit of the linear demand basis.
pub fn fit_ivqr_grid(
    rows: &[SampleRow],
    fits: &[HedonicFit],
    tau: f64,
    grid: &IvqrGrid,
    exec: Execution,
) -> Result<IvqrFit, EstimationError> {
    grid.validate()?;
    let design = build_design(rows, fits)?;
    let points = grid.points();
    let opts = QrOptions {
        polish_sweeps: 0,
        ..Default::default()
    };
    let gammas = exec.try_map(&points, |&r1| {
        let sol = design.solve(r1, tau, &opts)?;
        Ok::<_, EstimationError>(sol.beta[sol.beta.len() - 1].abs())
    })?;
    let (best, _) = gammas
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("grid is non-empty");
    if best == 0 || best == points.len() - 1 {
        return Err(EstimationError::GridExhausted {
            r1: points[best],
            lo: grid.lo,
            hi: grid.hi,
        });
    }

    // One golden-section pass over the two cells around the grid minimum.
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let warm = QrOptions {
        warm_start: Some(design.solve(points[best], tau, &opts)?.beta),
        ..opts.clone()
    };
    let gamma_at = |r1: f64| -> Result<f64, EstimationError> {
        let sol = design.solve(r1, tau, &warm)?;
        Ok(sol.beta[sol.beta.len() - 1].abs())
    };
    let (mut lo, mut hi) = (points[best - 1], points[best + 1]);
    let width = hi - lo;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = gamma_at(x1)?;
    let mut f2 = gamma_at(x2)?;
    while hi - lo > 1e-4 * width {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = gamma_at(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = gamma_at(x2)?;
        }
    }
    let mut r1 = if f1 <= f2 { x1 } else { x2 };
    if gammas[best] < f1.min(f2) {
        r1 = points[best];
    }

    let sol = design.solve(r1, tau, &QrOptions::default())?;
    let b = &sol.beta;
    let (r0, r3) = (b[0], b[1]);
    let r4 = if design.delta.is_some() { b[2] } else { 0.0 };
    let gamma = b[b.len() - 1];
    let n = design.u.len();
    let resid: Vec<f64> = (0..n)
        .map(|i| {
            let d = design.delta.as_ref().map_or(0.0, |d| d[i]);
            design.ln_s[i] - (r0 + r1 * design.u[i] + r3 * design.theta2[i] + r4 * d)
        })
        .collect();
    let zero = 1e-9 * design.ln_s.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let fit = QuantileFit {
        tau,
        basis: DemandBasis::Linear,
        coefficients: vec![r0, r1, r3, r4],
        objective: resid.iter().map(|&r| check_loss(tau, r)).sum(),
        iterations: sol.iterations,
        converged: sol.converged,
        frac_below: resid.iter().filter(|&&r| r < -zero).count() as f64 / n as f64,
        frac_nonpositive: resid.iter().filter(|&&r| r <= zero).count() as f64 / n as f64,
        n,
        p: sol.p,
    };
    Ok(IvqrFit {
        fit,
        instrument_coefficient: gamma,
        profile: points.into_iter().zip(gammas).collect(),
        first_stage_f: first_stage_f(rows, fits)?,
    })
}
