//! Linear quantile regression by iteratively reweighted least squares on a
//! smoothed check loss, and the pooled demand fits built on it.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{EstimationError, HedonicFit, SampleRow};
use crate::hedonic::{DemandDerivatives, DemandPartials, HedonicError, QuantileDemand, QuantileDemandModel, Theta};

pub fn check_loss(tau: f64, r: f64) -> f64 {
    if r < 0.0 {
        r * (tau - 1.0)
    } else {
        r * tau
    }
}

#[derive(Clone, Debug)]
pub struct QrOptions {
    pub max_iter_per_stage: usize,
    /// Starting coefficients on the original scale; skips the coarse
    /// smoothing stages.
    pub warm_start: Option<Vec<f64>>,
    pub polish_sweeps: usize,
}

impl Default for QrOptions {
    fn default() -> Self {
        Self {
            max_iter_per_stage: 200,
            warm_start: None,
            polish_sweeps: 2,
        }
    }
}

#[derive(Clone, Debug)]
pub struct QrSolution {
    pub beta: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// The final smoothing stage met its step tolerance, or the returned
    /// vertex passed the exact subgradient check.
    pub converged: bool,
    /// Share of strictly negative residuals.
    pub frac_below: f64,
    /// Share of non-positive residuals.
    pub frac_nonpositive: f64,
    pub n: usize,
    pub p: usize,
}

impl QrSolution {
    /// `frac_below ≤ τ ≤ frac_nonpositive` up to `(p + 1)/n`.
    pub fn sandwich_holds(&self, tau: f64) -> bool {
        sandwich(tau, self.frac_below, self.frac_nonpositive, self.n, self.p)
    }
}

fn sandwich(tau: f64, below: f64, nonpos: f64, n: usize, p: usize) -> bool {
    let slack = (p + 1) as f64 / n as f64;
    below <= tau + slack && nonpos >= tau - slack
}

/// Column scaling applied before solving; undone on the way out.
struct Standardizer {
    intercept: Option<(usize, f64)>,
    means: Vec<f64>,
    scales: Vec<f64>,
}

impl Standardizer {
    fn new(x: &DMatrix<f64>) -> Result<Self, EstimationError> {
        let (n, p) = x.shape();
        let mut intercept = None;
        let mut means = vec![0.0; p];
        let mut scales = vec![1.0; p];
        for j in 0..p {
            let col = x.column(j);
            let first = col[0];
            if col.iter().all(|&v| v == first) {
                if first == 0.0 || intercept.is_some() {
                    return Err(EstimationError::DegenerateDesign(format!(
                        "column {j} is constant and duplicates the intercept"
                    )));
                }
                intercept = Some((j, first));
            }
        }
        for j in 0..p {
            if matches!(intercept, Some((i, _)) if i == j) {
                continue;
            }
            let col = x.column(j);
            let mean = col.mean();
            let centre = if intercept.is_some() { mean } else { 0.0 };
            let ss: f64 = col.iter().map(|v| (v - centre).powi(2)).sum::<f64>() / n as f64;
            if !(ss > 0.0) || !ss.is_finite() {
                return Err(EstimationError::DegenerateDesign(format!("column {j} has no variation")));
            }
            means[j] = centre;
            scales[j] = ss.sqrt();
        }
        Ok(Self {
            intercept,
            means,
            scales,
        })
    }

    fn apply(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let (n, p) = x.shape();
        let mut out = Vec::with_capacity(n * p);
        for i in 0..n {
            for j in 0..p {
                out.push(match self.intercept {
                    Some((c, _)) if c == j => 1.0,
                    _ => (x[(i, j)] - self.means[j]) / self.scales[j],
                });
            }
        }
        out
    }

    fn to_original(&self, b: &[f64]) -> Vec<f64> {
        let mut beta: Vec<f64> = b.iter().zip(&self.scales).map(|(v, s)| v / s).collect();
        if let Some((c, value)) = self.intercept {
            let shift: f64 = (0..b.len()).filter(|&j| j != c).map(|j| beta[j] * self.means[j]).sum();
            beta[c] = (b[c] - shift) / value;
        }
        beta
    }

    fn from_original(&self, beta: &[f64]) -> Vec<f64> {
        let mut b: Vec<f64> = beta.iter().zip(&self.scales).map(|(v, s)| v * s).collect();
        if let Some((c, value)) = self.intercept {
            let shift: f64 = (0..beta.len()).filter(|&j| j != c).map(|j| beta[j] * self.means[j]).sum();
            b[c] = beta[c] * value + shift;
        }
        b
    }
}

fn residuals(xs: &[f64], y: &[f64], b: &[f64], out: &mut [f64]) {
    let p = b.len();
    for (i, r) in out.iter_mut().enumerate() {
        let row = &xs[i * p..(i + 1) * p];
        *r = y[i] - row.iter().zip(b).map(|(a, c)| a * c).sum::<f64>();
    }
}

fn total_loss(tau: f64, xs: &[f64], y: &[f64], b: &[f64], buf: &mut [f64]) -> f64 {
    residuals(xs, y, b, buf);
    buf.iter().map(|&r| check_loss(tau, r)).sum()
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// The exact fit through the `p` observations closest to the current fit
/// whose rows are linearly independent, with the indices of those rows.
fn interpolating_vertex(xs: &[f64], y: &[f64], b: &[f64], p: usize, buf: &mut [f64]) -> Option<(Vec<f64>, Vec<usize>)> {
    residuals(xs, y, b, buf);
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&i, &j| buf[i].abs().total_cmp(&buf[j].abs()));
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(p);
    let mut picked = Vec::with_capacity(p);
    for i in order {
        let row = DVector::from_column_slice(&xs[i * p..(i + 1) * p]);
        let mut rem = row.clone();
        for q in &basis {
            rem -= q * q.dot(&rem);
        }
        let norm = rem.norm();
        if norm > 1e-8 * row.norm() {
            basis.push(rem / norm);
            picked.push(i);
            if picked.len() == p {
                break;
            }
        }
    }
    if picked.len() < p {
        return None;
    }
    let a = DMatrix::from_fn(p, p, |r, c| xs[picked[r] * p + c]);
    let rhs = DVector::from_iterator(p, picked.iter().map(|&i| y[i]));
    a.lu().solve(&rhs).map(|v| (v.iter().copied().collect(), picked))
}

/// Subgradient optimality of a basic solution: with `h` the interpolated
/// rows, `X_h' v = −Σ_{i∉h} (τ − 1[r_i < 0]) x_i` must have every
/// `v_i ∈ [τ − 1, τ]`. `resid` holds the residuals at the vertex.
fn vertex_is_optimal(xs: &[f64], resid: &[f64], h: &[usize], p: usize, tau: f64) -> bool {
    let mut g = DVector::<f64>::zeros(p);
    let mut in_h = vec![false; resid.len()];
    for &i in h {
        in_h[i] = true;
    }
    for (i, &r) in resid.iter().enumerate() {
        if !in_h[i] {
            let psi = if r < 0.0 { tau - 1.0 } else { tau };
            for j in 0..p {
                g[j] -= psi * xs[i * p + j];
            }
        }
    }
    let xt = DMatrix::from_fn(p, p, |j, k| xs[h[k] * p + j]);
    match xt.lu().solve(&g) {
        Some(v) => v.iter().all(|&v| v >= tau - 1.0 - 1e-8 && v <= tau + 1e-8),
        None => false,
    }
}

/// Minimises `Σ ρ_τ(y_i − x_i'β)`.
///
/// The smoothed loss `½√(r² + ε²) + (τ − ½) r` is majorised by a weighted
/// quadratic, giving the update `X'WXβ = X'Wy + (τ − ½) X'1` with
/// `w = 1 / (2√(r² + ε²))`. `ε` steps down from the response scale to
/// `10⁻⁶` of it; a coordinate-wise golden-section pass on the exact loss
/// follows, then a snap to the interpolating vertex when that is no worse,
/// and the vertex is certified optimal when its subgradient condition holds.
pub fn quantile_regression(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    tau: f64,
    opts: &QrOptions,
) -> Result<QrSolution, EstimationError> {
    let (n, p) = x.shape();
    if !(tau > 0.0 && tau < 1.0) {
        return Err(EstimationError::InvalidInput(format!("tau {tau} outside (0, 1)")));
    }
    if n <= p || y.len() != n {
        return Err(EstimationError::InvalidInput(format!(
            "need more observations than regressors, got n={n} p={p}"
        )));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(EstimationError::InvalidInput("non-finite regressor or response".into()));
    }
    let st = Standardizer::new(x)?;
    let xs = st.apply(x);
    let xm = DMatrix::from_row_slice(n, p, &xs);
    let qr = xm.clone().qr();
    let r = qr.r();
    let dmax = (0..p).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..p).any(|i| r[(i, i)].abs() <= 1e-10 * dmax) {
        return Err(EstimationError::DegenerateDesign("regressors are collinear".into()));
    }
    let yv: Vec<f64> = y.iter().copied().collect();
    let scale = {
        let mut v = yv.clone();
        let med = median(&mut v);
        let mut dev: Vec<f64> = yv.iter().map(|v| (v - med).abs()).collect();
        let mad = 1.4826 * median(&mut dev);
        if mad > 0.0 {
            mad
        } else {
            1.0
        }
    };

    let mut b: Vec<f64> = match &opts.warm_start {
        Some(w) if w.len() == p => st.from_original(w),
        _ => {
            let qty = qr.q().transpose() * y;
            r.solve_upper_triangular(&qty)
                .ok_or_else(|| EstimationError::DegenerateDesign("regressors are collinear".into()))?
                .iter()
                .copied()
                .collect()
        }
    };
    let first_stage = if opts.warm_start.is_some() { 3 } else { 0 };
    let col_sums: Vec<f64> = (0..p).map(|j| (0..n).map(|i| xs[i * p + j]).sum()).collect();

    let mut resid = vec![0.0; n];
    let mut acc = vec![0.0; p * p];
    let mut rhs_acc = vec![0.0; p];
    let mut iterations = 0;
    let mut converged = false;
    let mut eps = scale;
    for stage in first_stage..=6 {
        eps = scale * 10f64.powi(-stage);
        converged = false;
        for _ in 0..opts.max_iter_per_stage {
            iterations += 1;
            residuals(&xs, &yv, &b, &mut resid);
            acc.fill(0.0);
            rhs_acc.fill(0.0);
            for ((row, &r), &yi) in xs.chunks_exact(p).zip(&resid).zip(&yv) {
                let w = 0.5 / (r * r + eps * eps).sqrt();
                for j in 0..p {
                    let wx = w * row[j];
                    rhs_acc[j] += wx * yi;
                    let line = &mut acc[j * p..j * p + j + 1];
                    for (slot, &xk) in line.iter_mut().zip(row) {
                        *slot += wx * xk;
                    }
                }
            }
            let a = DMatrix::<f64>::from_fn(p, p, |j, k| if k <= j { acc[j * p + k] } else { acc[k * p + j] });
            let rhs = DVector::<f64>::from_fn(p, |j, _| rhs_acc[j] + (tau - 0.5) * col_sums[j]);
            let next = match a.cholesky() {
                Some(ch) => ch.solve(&rhs),
                None => {
                    return Err(EstimationError::ConvergenceFailure(
                        "weighted normal equations lost positive definiteness".into(),
                    ))
                }
            };
            let bmax = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let step = next.iter().zip(&b).fold(0.0f64, |m, (u, v)| m.max((u - v).abs()));
            b = next.iter().copied().collect();
            if step <= 1e-10 * (1.0 + bmax) {
                converged = true;
                break;
            }
        }
    }

    // Coordinate-wise golden section on the exact loss.
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut best = total_loss(tau, &xs, &yv, &b, &mut resid);
    for _ in 0..opts.polish_sweeps {
        for j in 0..p {
            let h = 10.0 * eps;
            let (mut lo, mut hi) = (b[j] - h, b[j] + h);
            let mut trial = b.clone();
            let eval = |v: f64, trial: &mut Vec<f64>, buf: &mut [f64]| {
                trial[j] = v;
                total_loss(tau, &xs, &yv, trial, buf)
            };
            let mut x1 = hi - INV_PHI * (hi - lo);
            let mut x2 = lo + INV_PHI * (hi - lo);
            let mut f1 = eval(x1, &mut trial, &mut resid);
            let mut f2 = eval(x2, &mut trial, &mut resid);
            while hi - lo > 1e-13 * (1.0 + b[j].abs()) {
                if f1 <= f2 {
                    hi = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = hi - INV_PHI * (hi - lo);
                    f1 = eval(x1, &mut trial, &mut resid);
                } else {
                    lo = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = lo + INV_PHI * (hi - lo);
                    f2 = eval(x2, &mut trial, &mut resid);
                }
            }
            let (v, f) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
            if f < best {
                best = f;
                b[j] = v;
            }
        }
    }

    if let Some((v, h)) = interpolating_vertex(&xs, &yv, &b, p, &mut resid) {
        let f = total_loss(tau, &xs, &yv, &v, &mut resid);
        if f <= best * (1.0 + 1e-12) {
            b = v;
            converged |= vertex_is_optimal(&xs, &resid, &h, p, tau);
        }
    }

    residuals(&xs, &yv, &b, &mut resid);
    let objective = resid.iter().map(|&r| check_loss(tau, r)).sum();
    let zero = 1e-9 * yv.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let below = resid.iter().filter(|&&r| r < -zero).count() as f64 / n as f64;
    let nonpos = resid.iter().filter(|&&r| r <= zero).count() as f64 / n as f64;
    Ok(QrSolution {
        beta: st.to_original(&b),
        objective,
        iterations,
        converged,
        frac_below: below,
        frac_nonpositive: nonpos,
        n,
        p,
    })
}

/// Regressor sets for the pooled demand regression. `u = y − θ̂1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemandBasis {
    /// `[1, u, θ̂2, δ̂]`, coefficients `(r0, r1, r3, r4)`.
    Linear,
    /// `[1, y, θ̂1, θ̂2, δ̂]`, coefficients `(r0, r1, r2, r3, r4)`.
    Unconstrained,
    /// `[1, u, θ̂2, δ̂, u/θ̂2]`, coefficients `(r0, r1, r3, r4, r5)`. Still a
    /// function of `(y − θ1, θ2)`, so symmetric.
    RatioAugmented,
}

impl DemandBasis {
    pub fn name(self) -> &'static str {
        match self {
            DemandBasis::Linear => "linear",
            DemandBasis::Unconstrained => "unconstrained",
            DemandBasis::RatioAugmented => "ratio_augmented",
        }
    }

    pub fn coefficient_count(self) -> usize {
        match self {
            DemandBasis::Linear => 4,
            _ => 5,
        }
    }

    /// Regressor row for income `y` in a market with fitted `(θ1, θ2, δ)`.
    fn row(self, y: f64, t1: f64, t2: f64, d: f64) -> Vec<f64> {
        match self {
            DemandBasis::Linear => vec![1.0, y - t1, t2, d],
            DemandBasis::Unconstrained => vec![1.0, y, t1, t2, d],
            DemandBasis::RatioAugmented => vec![1.0, y - t1, t2, d, (y - t1) / t2],
        }
    }

    /// Position of the `δ̂` column.
    fn delta_column(self) -> usize {
        match self {
            DemandBasis::Unconstrained => 4,
            _ => 3,
        }
    }
}

/// A pooled quantile demand fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantileFit {
    pub tau: f64,
    pub basis: DemandBasis,
    /// Canonical layout documented on [`DemandBasis`].
    pub coefficients: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub frac_below: f64,
    pub frac_nonpositive: f64,
    pub n: usize,
    /// Number of estimated coefficients.
    pub p: usize,
}

impl QuantileFit {
    pub fn r0(&self) -> f64 {
        self.coefficients[0]
    }
    pub fn r1(&self) -> f64 {
        self.coefficients[1]
    }
    pub fn r2(&self) -> f64 {
        match self.basis {
            DemandBasis::Unconstrained => self.coefficients[2],
            _ => -self.coefficients[1],
        }
    }
    pub fn r3(&self) -> f64 {
        match self.basis {
            DemandBasis::Unconstrained => self.coefficients[3],
            _ => self.coefficients[2],
        }
    }
    pub fn r4(&self) -> f64 {
        self.coefficients[self.basis.delta_column()]
    }
    /// Coefficient on `u/θ̂2`; zero outside the ratio basis.
    pub fn r_ratio(&self) -> f64 {
        match self.basis {
            DemandBasis::RatioAugmented => self.coefficients[4],
            _ => 0.0,
        }
    }

    pub fn sandwich_holds(&self) -> bool {
        sandwich(self.tau, self.frac_below, self.frac_nonpositive, self.n, self.p)
    }

    /// Linear-in-parameters model for the closed-form solver.
    pub fn model(&self) -> Result<QuantileDemandModel, HedonicError> {
        match self.basis {
            DemandBasis::Linear => QuantileDemandModel::constrained(self.tau, self.r0(), self.r1(), self.r3(), self.r4()),
            DemandBasis::Unconstrained => {
                QuantileDemandModel::unconstrained(self.tau, self.r0(), self.r1(), self.r2(), self.r3(), self.r4())
            }
            DemandBasis::RatioAugmented => Err(HedonicError::InvalidParameter(
                "ratio-augmented fits have no linear closed form".into(),
            )),
        }
    }

    /// Fitted demand surface with the attribute price fixed at `δ0`.
    pub fn surface(&self, delta0: f64) -> FittedDemand {
        FittedDemand {
            basis: self.basis,
            coefficients: self.coefficients.clone(),
            delta0,
        }
    }

    /// Fitted `ln q` at one regressor point.
    pub fn ln_quantile_at(&self, y: f64, t1: f64, t2: f64, delta: f64) -> f64 {
        self.basis
            .row(y, t1, t2, delta)
            .iter()
            .zip(&self.coefficients)
            .map(|(a, b)| a * b)
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FittedDemand {
    pub basis: DemandBasis,
    pub coefficients: Vec<f64>,
    pub delta0: f64,
}

impl QuantileDemand for FittedDemand {
    fn ln_quantile(&self, y: f64, theta: Theta) -> Result<f64, HedonicError> {
        if self.basis == DemandBasis::RatioAugmented && !(theta[1] > 0.0) {
            return Err(HedonicError::DemandUndefined {
                y,
                t1: theta[0],
                t2: theta[1],
            });
        }
        Ok(self
            .basis
            .row(y, theta[0], theta[1], self.delta0)
            .iter()
            .zip(&self.coefficients)
            .map(|(a, b)| a * b)
            .sum())
    }
}

impl DemandPartials for FittedDemand {
    fn partials(&self, y: f64, theta: Theta) -> Result<DemandDerivatives, HedonicError> {
        let q = self.ln_quantile(y, theta)?.exp();
        let c = &self.coefficients;
        let (dy, dt1, dt2) = match self.basis {
            DemandBasis::Linear => (c[1], -c[1], c[2]),
            DemandBasis::Unconstrained => (c[1], c[2], c[3]),
            DemandBasis::RatioAugmented => {
                let u = y - theta[0];
                let dy = c[1] + c[4] / theta[1];
                (dy, -dy, c[2] - c[4] * u / (theta[1] * theta[1]))
            }
        };
        Ok(DemandDerivatives {
            q,
            dq_dy: dy * q,
            dq_dtheta: [dt1 * q, dt2 * q],
        })
    }
}

fn market_lookup(fits: &[HedonicFit]) -> HashMap<&str, &HedonicFit> {
    fits.iter().map(|f| (f.market_id.as_str(), f)).collect()
}

pub(crate) fn lookup<'a>(
    map: &HashMap<&str, &'a HedonicFit>,
    id: &str,
) -> Result<&'a HedonicFit, EstimationError> {
    map.get(id)
        .copied()
        .ok_or_else(|| EstimationError::InvalidInput(format!("no hedonic fit for market {id}")))
}

/// Whether any market has a non-zero attribute price; otherwise the `δ̂`
/// column is left out of the design.
pub(crate) fn uses_delta(fits: &[HedonicFit]) -> bool {
    fits.iter().any(|f| f.delta != 0.0)
}

/// Step 3: pooled quantile regression of `ln s` on market-level regressors.
pub fn fit_quantile_demand(
    rows: &[SampleRow],
    fits: &[HedonicFit],
    tau: f64,
    basis: DemandBasis,
) -> Result<QuantileFit, EstimationError> {
    fit_quantile_demand_with(rows, fits, tau, basis, &QrOptions::default())
}

pub(crate) fn fit_quantile_demand_with(
    rows: &[SampleRow],
    fits: &[HedonicFit],
    tau: f64,
    basis: DemandBasis,
    opts: &QrOptions,
) -> Result<QuantileFit, EstimationError> {
    let map = market_lookup(fits);
    let with_delta = uses_delta(fits);
    let dcol = basis.delta_column();
    let full = basis.coefficient_count();
    let keep: Vec<usize> = (0..full).filter(|&j| with_delta || j != dcol).collect();
    let mut data = Vec::with_capacity(rows.len() * keep.len());
    for r in rows {
        let f = lookup(&map, &r.market_id)?;
        let row = basis.row(r.income, f.theta1, f.theta2, f.delta);
        data.extend(keep.iter().map(|&j| row[j]));
    }
    let x = DMatrix::from_row_slice(rows.len(), keep.len(), &data);
    let y = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.ln_s));
    let sol = quantile_regression(&x, &y, tau, opts)?;
    if !sol.sandwich_holds(tau) {
        return Err(EstimationError::ConvergenceFailure(format!(
            "tau={tau}: optimality check failed, {:.4} below and {:.4} at or below the fit after {} iterations",
            sol.frac_below, sol.frac_nonpositive, sol.iterations
        )));
    }
    let mut coefficients = vec![0.0; full];
    for (k, &j) in keep.iter().enumerate() {
        coefficients[j] = sol.beta[k];
    }
    Ok(QuantileFit {
        tau,
        basis,
        coefficients,
        objective: sol.objective,
        iterations: sol.iterations,
        converged: sol.converged,
        frac_below: sol.frac_below,
        frac_nonpositive: sol.frac_nonpositive,
        n: sol.n,
        p: sol.p,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SymmetryTest {
    /// `r̂1 + r̂2`.
    pub statistic: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Checks `r1 + r2 = 0`. The default tolerance is `0.02·|r̂1| + 1e-6`.
pub fn test_symmetry_restriction(fit: &QuantileFit, tolerance: Option<f64>) -> SymmetryTest {
    let tolerance = tolerance.unwrap_or(0.02 * fit.r1().abs() + 1e-6);
    let statistic = match fit.basis {
        DemandBasis::Unconstrained => fit.r1() + fit.r2(),
        _ => 0.0,
    };
    SymmetryTest {
        statistic,
        tolerance,
        passed: statistic.abs() <= tolerance,
    }
}

/// Reports adjacent τ pairs whose fitted `ln q` at the sample-mean regressor
/// point decreases. Nothing is rearranged.
pub fn quantile_crossings(fits_by_tau: &[QuantileFit], rows: &[SampleRow], markets: &[HedonicFit]) -> Vec<String> {
    let map = market_lookup(markets);
    let mut sums = [0.0; 4];
    let mut n = 0.0;
    for r in rows {
        if let Some(f) = map.get(r.market_id.as_str()) {
            sums[0] += r.income;
            sums[1] += f.theta1;
            sums[2] += f.theta2;
            sums[3] += f.delta;
            n += 1.0;
        }
    }
    if n == 0.0 {
        return Vec::new();
    }
    let [y, t1, t2, d] = sums.map(|s| s / n);
    let mut sorted: Vec<&QuantileFit> = fits_by_tau.iter().collect();
    sorted.sort_by(|a, b| a.tau.total_cmp(&b.tau));
    sorted
        .windows(2)
        .filter_map(|w| {
            let (lo, hi) = (w[0].ln_quantile_at(y, t1, t2, d), w[1].ln_quantile_at(y, t1, t2, d));
            (hi < lo).then(|| {
                format!(
                    "quantile crossing: fitted ln q at the mean regressors falls from {lo:.6} (tau={}) to {hi:.6} (tau={})",
                    w[0].tau, w[1].tau
                )
            })
        })
        .collect()
}
