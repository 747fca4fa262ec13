//! Numeric checks of the model's regularity conditions on a `(y, η)` grid.

use serde::Serialize;

use super::utility::{indirect_utility, solve_consumer, UtilitySpec};
use super::OracleError;
use crate::hedonic::PriceSchedule;

#[derive(Clone, Debug, Default, Serialize)]
pub struct AssumptionReport {
    /// `min −[U_ss − 2P'U_cs + P'²U_cc]` at the optimum; must be positive.
    pub min_convexity_margin: f64,
    /// `min ΔS*/Δη` over adjacent η grid points; must be positive.
    pub min_demand_slope_eta: f64,
    /// `max |−V_θj / V_y − P_j(s*)|` over grid points and both θ components.
    pub max_roy_residual: f64,
    pub points: usize,
    pub violations: Vec<String>,
}

impl AssumptionReport {
    pub fn passes(&self, roy_tolerance: f64) -> bool {
        self.violations.is_empty()
            && self.min_convexity_margin > 0.0
            && self.min_demand_slope_eta > 0.0
            && self.max_roy_residual <= roy_tolerance
    }
}

fn fd_step(x: f64) -> f64 {
    1e-4 * x.abs().max(1.0)
}

/// Roy's-identity residual `|−(∂V/∂θj)/(∂V/∂y) − ∂P/∂θj(s*)|` with central
/// differences of the indirect utility. `j` is 1 or 2.
pub fn roy_residual(
    utility: &UtilitySpec,
    schedule: &PriceSchedule,
    y: f64,
    eta: f64,
    j: usize,
) -> Result<f64, OracleError> {
    if !(1..=2).contains(&j) {
        return Err(OracleError::InvalidParameter(format!("theta index {j} out of range")));
    }
    let theta = schedule.theta();
    let v_at = |yy: f64, th: [f64; 2]| indirect_utility(utility, &schedule.with_theta(th), yy, eta);
    let hy = fd_step(y);
    let v_y = (v_at(y + hy, theta)? - v_at(y - hy, theta)?) / (2.0 * hy);
    let ht = fd_step(theta[j - 1]);
    let (mut up, mut dn) = (theta, theta);
    up[j - 1] += ht;
    dn[j - 1] -= ht;
    let v_t = (v_at(y, up)? - v_at(y, dn)?) / (2.0 * ht);
    let s = solve_consumer(utility, schedule, y, eta)?.s;
    let p_j = schedule.theta_gradient(s)?[j - 1];
    Ok((-v_t / v_y - p_j).abs())
}

/// Evaluates the second-order, single-crossing and Roy's-identity conditions
/// over every `(y, η)` pair. Failures are recorded, never raised.
pub fn check_assumptions(
    utility: &UtilitySpec,
    schedule: &PriceSchedule,
    y_grid: &[f64],
    eta_grid: &[f64],
) -> AssumptionReport {
    let mut report = AssumptionReport {
        min_convexity_margin: f64::INFINITY,
        min_demand_slope_eta: f64::INFINITY,
        max_roy_residual: 0.0,
        ..Default::default()
    };
    let mut etas = eta_grid.to_vec();
    etas.sort_by(f64::total_cmp);

    for &y in y_grid {
        let mut prev: Option<(f64, f64)> = None;
        for &eta in &etas {
            report.points += 1;
            let choice = match solve_consumer(utility, schedule, y, eta) {
                Ok(c) => c,
                Err(e) => {
                    report.violations.push(format!("y={y} eta={eta}: {e}"));
                    continue;
                }
            };
            let (s, c) = (choice.s, choice.c);
            let p = utility.partials(s, c, eta);
            match schedule.slope(s) {
                Ok(dp) => {
                    let margin = -(p.u_ss - 2.0 * dp * p.u_cs + dp * dp * p.u_cc);
                    report.min_convexity_margin = report.min_convexity_margin.min(margin);
                    if !(margin > 0.0) {
                        report
                            .violations
                            .push(format!("y={y} eta={eta}: second-order margin {margin:e} not positive"));
                    }
                }
                Err(e) => report.violations.push(format!("y={y} eta={eta}: {e}")),
            }
            if let Some((eta0, s0)) = prev {
                if eta > eta0 {
                    let slope = (s - s0) / (eta - eta0);
                    report.min_demand_slope_eta = report.min_demand_slope_eta.min(slope);
                    if !(slope > 0.0) {
                        report
                            .violations
                            .push(format!("y={y} eta={eta}: demand not increasing in eta"));
                    }
                }
            }
            prev = Some((eta, s));
            for j in 1..=2 {
                match roy_residual(utility, schedule, y, eta, j) {
                    Ok(r) => report.max_roy_residual = report.max_roy_residual.max(r),
                    Err(e) => report.violations.push(format!("y={y} eta={eta} j={j}: {e}")),
                }
            }
        }
    }
    report
}
