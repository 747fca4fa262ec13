//! Known utilities, the consumer's problem on a hedonic frontier, indirect
//! utility and the compensating-variation oracle.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::OracleError;
use crate::hedonic::{DemandDerivatives, DemandPartials, HedonicError, PriceSchedule, QuantileDemand, Theta};

/// First and second partial derivatives of `U(s, c, η)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UtilityPartials {
    pub u_s: f64,
    pub u_c: f64,
    pub u_ss: f64,
    pub u_cc: f64,
    pub u_cs: f64,
    pub u_s_eta: f64,
    pub u_c_eta: f64,
}

/// A caller-supplied single-attribute utility `U(s, c, η)`.
pub trait GeneralUtility: Send + Sync + fmt::Debug {
    fn value(&self, s: f64, c: f64, eta: f64) -> f64;
    fn partials(&self, s: f64, c: f64, eta: f64) -> UtilityPartials;
}

#[derive(Clone, Debug)]
pub enum UtilitySpec {
    /// `η ln s + ln c`
    LogLog,
    /// `η ln s + β ln x + ln c`, with `x` bought at the fixed price `δ`.
    MultiAttribute { beta: f64 },
    General(Arc<dyn GeneralUtility>),
}

/// Serializable subset of [`UtilitySpec`] used by the simulator config.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum UtilityKind {
    LogLog,
    MultiAttribute { beta: f64 },
}

impl From<UtilityKind> for UtilitySpec {
    fn from(k: UtilityKind) -> Self {
        match k {
            UtilityKind::LogLog => UtilitySpec::LogLog,
            UtilityKind::MultiAttribute { beta } => UtilitySpec::MultiAttribute { beta },
        }
    }
}

/// Optimal bundle: attribute `s`, optional second attribute `x`, consumption `c`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConsumerChoice {
    pub s: f64,
    pub x: Option<f64>,
    pub c: f64,
}

impl UtilitySpec {
    fn check_eta(&self, eta: f64) -> Result<(), OracleError> {
        match self {
            UtilitySpec::LogLog | UtilitySpec::MultiAttribute { .. } if !(eta > 0.0) => Err(
                OracleError::InvalidParameter(format!("eta must be positive, got {eta}")),
            ),
            UtilitySpec::MultiAttribute { beta } if !(*beta > 0.0) => Err(
                OracleError::InvalidParameter(format!("beta must be positive, got {beta}")),
            ),
            _ => Ok(()),
        }
    }

    /// Utility of the bundle. `x` is ignored by single-attribute utilities.
    pub fn value(&self, s: f64, x: Option<f64>, c: f64, eta: f64) -> f64 {
        if !(s > 0.0 && c > 0.0) {
            return f64::NEG_INFINITY;
        }
        match self {
            UtilitySpec::LogLog => eta * s.ln() + c.ln(),
            UtilitySpec::MultiAttribute { beta } => match x {
                Some(x) if x > 0.0 => eta * s.ln() + beta * x.ln() + c.ln(),
                _ => f64::NEG_INFINITY,
            },
            UtilitySpec::General(u) => u.value(s, c, eta),
        }
    }

    /// Partials of the `(s, c)` block; the `x` term of the multi-attribute
    /// utility is additively separable and drops out.
    pub fn partials(&self, s: f64, c: f64, eta: f64) -> UtilityPartials {
        match self {
            UtilitySpec::LogLog | UtilitySpec::MultiAttribute { .. } => UtilityPartials {
                u_s: eta / s,
                u_c: 1.0 / c,
                u_ss: -eta / (s * s),
                u_cc: -1.0 / (c * c),
                u_cs: 0.0,
                u_s_eta: 1.0 / s,
                u_c_eta: 0.0,
            },
            UtilitySpec::General(u) => u.partials(s, c, eta),
        }
    }
}

/// Utility-maximising bundle on the frontier at income `y`.
pub fn solve_consumer(
    utility: &UtilitySpec,
    schedule: &PriceSchedule,
    y: f64,
    eta: f64,
) -> Result<ConsumerChoice, OracleError> {
    utility.check_eta(eta)?;
    match (utility, schedule) {
        (UtilitySpec::LogLog, PriceSchedule::LogLinear { theta, .. } | PriceSchedule::AdditiveTwoPart { theta, .. })
            if theta[1] > 0.0 =>
        {
            let c = theta[1] / eta;
            let s = ((y - theta[0]) / theta[1] - 1.0 / eta).exp();
            finish_closed_form(schedule, s, None, c)
        }
        (UtilitySpec::MultiAttribute { beta }, PriceSchedule::AdditiveTwoPart { theta, delta, .. })
            if theta[1] > 0.0 && *delta > 0.0 =>
        {
            let c = theta[1] / eta;
            let x = beta * theta[1] / (eta * delta);
            let s = ((y - theta[0]) / theta[1] - (1.0 + beta) / eta).exp();
            finish_closed_form(schedule, s, Some(x), c)
        }
        (UtilitySpec::MultiAttribute { .. }, _) => Err(OracleError::NoInteriorOptimum(
            "multi-attribute utility needs an additive schedule with a positive attribute price".into(),
        )),
        _ => solve_numeric(utility, schedule, y, eta),
    }
}

fn finish_closed_form(
    schedule: &PriceSchedule,
    s: f64,
    x: Option<f64>,
    c: f64,
) -> Result<ConsumerChoice, OracleError> {
    if !schedule.domain().contains(s) {
        return Err(OracleError::NoInteriorOptimum(format!(
            "optimal attribute level {s} lies outside the schedule domain"
        )));
    }
    Ok(ConsumerChoice { s, x, c })
}

fn foc(utility: &UtilitySpec, schedule: &PriceSchedule, y: f64, eta: f64, ln_s: f64) -> f64 {
    let s = ln_s.exp();
    let c = y - schedule.price(s, None).unwrap_or(f64::INFINITY);
    if !(c > 0.0) {
        return f64::NEG_INFINITY;
    }
    let p = utility.partials(s, c, eta);
    p.u_s - p.u_c * schedule.slope(s).unwrap_or(f64::NAN)
}

/// Golden-section search on `ln s`, refined by bisection on the first-order
/// condition.
fn solve_numeric(
    utility: &UtilitySpec,
    schedule: &PriceSchedule,
    y: f64,
    eta: f64,
) -> Result<ConsumerChoice, OracleError> {
    let domain = schedule.domain();
    let s_max = schedule
        .max_affordable(y)
        .ok_or(OracleError::InfeasibleBudget { y })?;
    let hi0 = s_max.min(f64::MAX).ln();
    // Marginal utilities overflow near s = 0, so the search window starts at
    // most 100 log points below the budget-exhausting level.
    let lo0 = domain.lo.ln().max(hi0 - 100.0);
    if !(hi0 > lo0) {
        return Err(OracleError::InfeasibleBudget { y });
    }
    let objective = |ln_s: f64| {
        let s = ln_s.exp();
        match schedule.price(s, None) {
            Ok(p) => utility.value(s, None, y - p, eta),
            Err(_) => f64::NEG_INFINITY,
        }
    };

    // Endpoints nudged inside the open feasible interval.
    let pad = 1e-12 * (hi0 - lo0).max(1.0);
    let (lo_in, hi_in) = (lo0 + pad, hi0 - pad);
    let g_lo = foc(utility, schedule, y, eta, lo_in);
    let g_hi = foc(utility, schedule, y, eta, hi_in);
    if !(g_lo > 0.0 && g_hi < 0.0) {
        return Err(OracleError::NoInteriorOptimum(format!(
            "first-order condition has no sign change on ln s in [{lo0}, {hi0}]"
        )));
    }

    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo_in, hi_in);
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = objective(x1);
    let mut f2 = objective(x2);
    while b - a > 1e-10 {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = objective(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = objective(x1);
        }
    }
    let guess = 0.5 * (a + b);

    // Bracket the FOC root around the golden-section estimate.
    let mut w = 1e-9;
    let (mut left, mut right);
    loop {
        left = (guess - w).max(lo_in);
        right = (guess + w).min(hi_in);
        if foc(utility, schedule, y, eta, left) > 0.0 && foc(utility, schedule, y, eta, right) < 0.0 {
            break;
        }
        if left <= lo_in && right >= hi_in {
            break;
        }
        w *= 4.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (left + right);
        if mid <= left || mid >= right {
            break;
        }
        if foc(utility, schedule, y, eta, mid) > 0.0 {
            left = mid;
        } else {
            right = mid;
        }
    }
    let ln_s = 0.5 * (left + right);
    let s = ln_s.exp();
    let c = y - schedule.price(s, None)?;
    let p = utility.partials(s, c, eta);
    let resid = (p.u_s - p.u_c * schedule.slope(s)?).abs();
    if resid > 1e-8 * (1.0 + p.u_s.abs()) {
        return Err(OracleError::NoInteriorOptimum(format!(
            "first-order residual {resid:e} above tolerance at s={s}"
        )));
    }
    Ok(ConsumerChoice { s, x: None, c })
}

/// Indirect utility `V(y, θ, η)`.
pub fn indirect_utility(
    utility: &UtilitySpec,
    schedule: &PriceSchedule,
    y: f64,
    eta: f64,
) -> Result<f64, OracleError> {
    utility.check_eta(eta)?;
    // Closed forms stay on the log scale so very large incomes do not
    // overflow `s`.
    let theta = schedule.theta();
    let closed = match (utility, schedule) {
        (UtilitySpec::LogLog, PriceSchedule::LogLinear { .. } | PriceSchedule::AdditiveTwoPart { .. })
            if theta[1] > 0.0 =>
        {
            let ln_s = (y - theta[0]) / theta[1] - 1.0 / eta;
            Some((ln_s, eta * ln_s + (theta[1] / eta).ln()))
        }
        (UtilitySpec::MultiAttribute { beta }, PriceSchedule::AdditiveTwoPart { delta, .. })
            if theta[1] > 0.0 && *delta > 0.0 =>
        {
            let ln_s = (y - theta[0]) / theta[1] - (1.0 + beta) / eta;
            let x = beta * theta[1] / (eta * delta);
            Some((ln_s, eta * ln_s + beta * x.ln() + (theta[1] / eta).ln()))
        }
        _ => None,
    };
    if let Some((ln_s, v)) = closed {
        let dom = schedule.domain();
        if ln_s < dom.lo.ln() || ln_s > dom.hi.ln() {
            return Err(OracleError::NoInteriorOptimum(format!(
                "optimal ln s {ln_s} lies outside the schedule domain"
            )));
        }
        return Ok(v);
    }
    let ch = solve_consumer(utility, schedule, y, eta)?;
    Ok(utility.value(ch.s, ch.x, ch.c, eta))
}

fn is_log_frontier(p: &PriceSchedule) -> bool {
    matches!(p, PriceSchedule::LogLinear { .. } | PriceSchedule::AdditiveTwoPart { .. })
}

/// Compensating variation `C` solving `V(y + C, b, η) = V(y, a, η)`.
///
/// Log-log utility on log-linear frontiers uses the closed form; everything
/// else goes through [`oracle_cv_bisect`].
pub fn oracle_cv(
    utility: &UtilitySpec,
    schedule_a: &PriceSchedule,
    schedule_b: &PriceSchedule,
    y: f64,
    eta: f64,
) -> Result<f64, OracleError> {
    utility.check_eta(eta)?;
    if let UtilitySpec::LogLog = utility {
        if is_log_frontier(schedule_a) && is_log_frontier(schedule_b) {
            let [a1, a2] = schedule_a.theta();
            let [b1, b2] = schedule_b.theta();
            if a2 > 0.0 && b2 > 0.0 {
                if a1 == b1 && a2 == b2 {
                    return Ok(0.0);
                }
                return Ok(b1 - y + b2 * ((y - a1) / a2 + (a2 / b2).ln() / eta));
            }
        }
    }
    oracle_cv_bisect(utility, schedule_a, schedule_b, y, eta)
}

/// Bracket-and-bisect solution of the compensating-variation equation.
pub fn oracle_cv_bisect(
    utility: &UtilitySpec,
    schedule_a: &PriceSchedule,
    schedule_b: &PriceSchedule,
    y: f64,
    eta: f64,
) -> Result<f64, OracleError> {
    const C_MAX: f64 = 1e6;
    let target = indirect_utility(utility, schedule_a, y, eta)?;
    let tol = 1e-10 * (1.0 + target.abs());
    // Infeasible incomes count as arbitrarily bad.
    let gap = |c: f64| -> Result<f64, OracleError> {
        match indirect_utility(utility, schedule_b, y + c, eta) {
            Ok(v) => Ok(v - target),
            Err(OracleError::InfeasibleBudget { .. }) => Ok(f64::NEG_INFINITY),
            Err(e) => Err(e),
        }
    };
    let c_min = -y + 1e-9 * y.abs().max(1.0);

    let g0 = gap(0.0)?;
    if g0.abs() <= tol {
        return Ok(0.0);
    }
    let step = (0.01 * y.abs()).max(1.0);
    let (mut lo, mut hi);
    if g0 < 0.0 {
        lo = 0.0;
        hi = step;
        while gap(hi)? < 0.0 {
            lo = hi;
            hi *= 2.0;
            if hi > C_MAX {
                return Err(OracleError::BracketFailure { lo: c_min, hi: C_MAX });
            }
        }
    } else {
        hi = 0.0;
        lo = -step;
        loop {
            if lo <= c_min {
                lo = c_min;
                if gap(lo)? > 0.0 {
                    return Err(OracleError::BracketFailure { lo: c_min, hi: C_MAX });
                }
                break;
            }
            if gap(lo)? <= 0.0 {
                break;
            }
            hi = lo;
            lo *= 2.0;
        }
    }
    // Bisect until the bracket collapses; the stated tolerance is an upper
    // bound, and round trips through two CV solves need the slack.
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        let g = gap(mid)?;
        if g == 0.0 || mid <= lo || mid >= hi {
            return Ok(mid);
        }
        if g < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mid = 0.5 * (lo + hi);
    if gap(mid)?.abs() > tol {
        return Err(OracleError::BracketFailure { lo, hi });
    }
    Ok(mid)
}

/// True demand `S*(y, θ, η)` of a single consumer type, usable as a demand
/// surface by the welfare integrator.
#[derive(Clone, Debug)]
pub struct StructuralDemand {
    pub utility: UtilitySpec,
    /// Frontier family; only its non-θ parts (domain, δ) are used.
    pub schedule: PriceSchedule,
    pub eta: f64,
}

impl StructuralDemand {
    pub fn new(utility: UtilitySpec, schedule: PriceSchedule, eta: f64) -> Self {
        Self {
            utility,
            schedule,
            eta,
        }
    }

    fn ln_s(&self, y: f64, theta: Theta) -> Result<f64, OracleError> {
        let sched = self.schedule.with_theta(theta);
        match (&self.utility, &sched) {
            (UtilitySpec::LogLog, PriceSchedule::LogLinear { .. } | PriceSchedule::AdditiveTwoPart { .. })
                if theta[1] > 0.0 && self.eta > 0.0 =>
            {
                Ok((y - theta[0]) / theta[1] - 1.0 / self.eta)
            }
            (UtilitySpec::MultiAttribute { beta }, PriceSchedule::AdditiveTwoPart { .. })
                if theta[1] > 0.0 && self.eta > 0.0 =>
            {
                Ok((y - theta[0]) / theta[1] - (1.0 + beta) / self.eta)
            }
            _ => Ok(solve_consumer(&self.utility, &sched, y, self.eta)?.s.ln()),
        }
    }
}

impl QuantileDemand for StructuralDemand {
    fn ln_quantile(&self, y: f64, theta: Theta) -> Result<f64, HedonicError> {
        self.ln_s(y, theta).map_err(|_| HedonicError::DemandUndefined {
            y,
            t1: theta[0],
            t2: theta[1],
        })
    }
}

impl DemandPartials for StructuralDemand {
    /// Analytic for the log-linear families, central differences otherwise.
    fn partials(&self, y: f64, theta: Theta) -> Result<DemandDerivatives, HedonicError> {
        let ln_q = self.ln_quantile(y, theta)?;
        let q = ln_q.exp();
        if let (UtilitySpec::LogLog | UtilitySpec::MultiAttribute { .. }, true) =
            (&self.utility, is_log_frontier(&self.schedule))
        {
            let t2 = theta[1];
            let u = y - theta[0];
            return Ok(DemandDerivatives {
                q,
                dq_dy: q / t2,
                dq_dtheta: [-q / t2, -q * u / (t2 * t2)],
            });
        }
        let d = |f: &dyn Fn(f64) -> Result<f64, HedonicError>, x: f64| -> Result<f64, HedonicError> {
            let h = 1e-5 * x.abs().max(1.0);
            Ok((f(x + h)?.exp() - f(x - h)?.exp()) / (2.0 * h))
        };
        Ok(DemandDerivatives {
            q,
            dq_dy: d(&|v| self.ln_quantile(v, theta), y)?,
            dq_dtheta: [
                d(&|v| self.ln_quantile(y, [v, theta[1]]), theta[0])?,
                d(&|v| self.ln_quantile(y, [theta[0], v]), theta[1])?,
            ],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hedonic::slutsky_residual_for;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Log-log utility routed through the numeric solver.
    #[derive(Debug)]
    struct NumericLogLog;

    impl GeneralUtility for NumericLogLog {
        fn value(&self, s: f64, c: f64, eta: f64) -> f64 {
            UtilitySpec::LogLog.value(s, None, c, eta)
        }
        fn partials(&self, s: f64, c: f64, eta: f64) -> UtilityPartials {
            UtilitySpec::LogLog.partials(s, c, eta)
        }
    }

    #[test]
    fn loglog_closed_form_choice() {
        let p = PriceSchedule::log_linear(0.0, 10.0);
        let ch = solve_consumer(&UtilitySpec::LogLog, &p, 100.0, 1.0).unwrap();
        assert_relative_eq!(ch.c, 10.0);
        assert_relative_eq!(ch.s.ln(), 9.0, epsilon = 1e-12);
        // Budget identity.
        assert_relative_eq!(p.price(ch.s, None).unwrap() + ch.c, 100.0, epsilon = 1e-10);
    }

    #[test]
    fn loglog_large_eta_limit() {
        let p = PriceSchedule::log_linear(0.0, 10.0);
        let mut prev_c = f64::INFINITY;
        for eta in [10.0, 100.0, 1e4, 1e6] {
            let ch = solve_consumer(&UtilitySpec::LogLog, &p, 100.0, eta).unwrap();
            assert!(ch.c < prev_c && ch.c > 0.0);
            assert!(ch.s.ln() < 10.0);
            prev_c = ch.c;
        }
        let ch = solve_consumer(&UtilitySpec::LogLog, &p, 100.0, 1e6).unwrap();
        assert!((ch.s.ln() - 10.0).abs() < 1e-5);
    }

    #[test]
    fn multi_attribute_closed_form_matches_grid_search() {
        let p = PriceSchedule::additive(0.0, 10.0, 1.0);
        let u = UtilitySpec::MultiAttribute { beta: 1.0 };
        let ch = solve_consumer(&u, &p, 100.0, 1.0).unwrap();
        assert_relative_eq!(ch.c, 10.0, epsilon = 1e-12);
        assert_relative_eq!(ch.x.unwrap(), 10.0, epsilon = 1e-12);
        assert_relative_eq!(ch.s.ln(), 8.0, epsilon = 1e-12);

        // Brute-force grid over (ln s, x); c from the budget.
        let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
        for i in 0..=400 {
            let ln_s = 7.0 + 2.0 * i as f64 / 400.0;
            for j in 1..=400 {
                let x = 20.0 * j as f64 / 400.0;
                let c = 100.0 - 10.0 * ln_s - x;
                let v = u.value(ln_s.exp(), Some(x), c, 1.0);
                if v > best.0 {
                    best = (v, ln_s, x);
                }
            }
        }
        assert!((best.1 - 8.0).abs() <= 0.01);
        assert!((best.2 - 10.0).abs() <= 0.05);
    }

    #[test]
    fn multi_attribute_without_attribute_price_has_no_optimum() {
        let u = UtilitySpec::MultiAttribute { beta: 1.0 };
        let p = PriceSchedule::log_linear(0.0, 10.0);
        assert!(matches!(
            solve_consumer(&u, &p, 100.0, 1.0),
            Err(OracleError::NoInteriorOptimum(_))
        ));
    }

    #[test]
    fn indirect_utility_closed_form() {
        let p = PriceSchedule::log_linear(0.0, 10.0);
        let v = indirect_utility(&UtilitySpec::LogLog, &p, 100.0, 1.0).unwrap();
        assert_relative_eq!(v, 9.0 + 10f64.ln(), epsilon = 1e-12);
        assert!((v - 11.3026).abs() < 1e-4);
    }

    #[test]
    fn numeric_solver_agrees_with_closed_form() {
        let general = UtilitySpec::General(Arc::new(NumericLogLog));
        for &(t1, t2, y, eta) in &[
            (0.0, 10.0, 100.0, 1.0),
            (-28.164, 18.297, 362.0, 0.7),
            (-73.695, 28.556, 487.0, 2.5),
            (20.0, 5.0, 60.0, 0.3),
        ] {
            let p = PriceSchedule::log_linear(t1, t2);
            let exact = indirect_utility(&UtilitySpec::LogLog, &p, y, eta).unwrap();
            let numeric = indirect_utility(&general, &p, y, eta).unwrap();
            assert!((exact - numeric).abs() <= 1e-8, "{exact} vs {numeric}");
            let ch = solve_consumer(&general, &p, y, eta).unwrap();
            let exact_s = ((y - t1) / t2 - 1.0 / eta).exp();
            assert_relative_eq!(ch.s, exact_s, max_relative = 1e-8);
        }
    }

    #[test]
    fn numeric_solver_reports_infeasible_budget() {
        let general = UtilitySpec::General(Arc::new(NumericLogLog));
        let p = PriceSchedule::log_linear(50.0, 10.0)
            .with_domain(crate::hedonic::SDomain::new(1.0, 1e9).unwrap());
        // P(1) = 50 already exceeds income.
        assert!(matches!(
            solve_consumer(&general, &p, 40.0, 1.0),
            Err(OracleError::InfeasibleBudget { .. })
        ));
    }

    /// Utility whose marginal value of s never beats the frontier's price
    /// near the lower domain bound, so the FOC never changes sign.
    #[derive(Debug)]
    struct Indifferent;

    impl GeneralUtility for Indifferent {
        fn value(&self, s: f64, c: f64, _eta: f64) -> f64 {
            1e-12 * s + c
        }
        fn partials(&self, _s: f64, _c: f64, _eta: f64) -> UtilityPartials {
            UtilityPartials {
                u_s: 1e-12,
                u_c: 1.0,
                ..Default::default()
            }
        }
    }

    #[test]
    fn numeric_solver_detects_missing_interior_optimum() {
        let u = UtilitySpec::General(Arc::new(Indifferent));
        let p = PriceSchedule::log_linear(0.0, 10.0)
            .with_domain(crate::hedonic::SDomain::new(1.0, 1e9).unwrap());
        assert!(matches!(
            solve_consumer(&u, &p, 100.0, 1.0),
            Err(OracleError::NoInteriorOptimum(_))
        ));
    }

    #[test]
    fn oracle_cv_examples() {
        let a = PriceSchedule::log_linear(0.0, 20.0);
        let b = PriceSchedule::log_linear(0.0, 25.0);
        let u = UtilitySpec::LogLog;
        assert_eq!(oracle_cv(&u, &a, &a, 400.0, 1.0).unwrap(), 0.0);

        let closed = oracle_cv(&u, &a, &b, 400.0, 1.0).unwrap();
        let hand = -400.0 + 25.0 * (20.0 + 0.8f64.ln());
        assert_relative_eq!(closed, hand, epsilon = 1e-10);
        assert!((closed - 94.4215).abs() < 1e-4);
        let bisect = oracle_cv_bisect(&u, &a, &b, 400.0, 1.0).unwrap();
        assert!((closed - bisect).abs() < 1e-8);

        let shifted = PriceSchedule::log_linear(7.0, 20.0);
        for eta in [0.3, 1.0, 4.0] {
            assert_relative_eq!(oracle_cv(&u, &a, &shifted, 400.0, eta).unwrap(), 7.0, epsilon = 1e-10);
            assert!((oracle_cv_bisect(&u, &a, &shifted, 400.0, eta).unwrap() - 7.0).abs() < 1e-8);
        }
    }

    #[test]
    fn structural_demand_is_slutsky_symmetric() {
        let d = StructuralDemand::new(UtilitySpec::LogLog, PriceSchedule::log_linear(0.0, 1.0), 1.3);
        let p = PriceSchedule::log_linear(0.0, 1.0);
        let r = slutsky_residual_for(&p, &d, 400.0, [-20.0, 30.0], 1, 2).unwrap();
        assert!(r.abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn indirect_utility_increasing_in_income(
            y in 50.0f64..1000.0, eta in 0.1f64..5.0, t1 in -100.0f64..50.0, t2 in 2.0f64..40.0,
        ) {
            let p = PriceSchedule::log_linear(t1, t2);
            let v0 = indirect_utility(&UtilitySpec::LogLog, &p, y, eta).unwrap();
            let v1 = indirect_utility(&UtilitySpec::LogLog, &p, y + 0.01, eta).unwrap();
            prop_assert!(v1 > v0);
        }

        #[test]
        fn oracle_cv_is_self_consistent(
            y in 100.0f64..900.0, eta in 0.2f64..4.0,
            a1 in -100.0f64..50.0, a2 in 5.0f64..40.0, b1 in -100.0f64..50.0, b2 in 5.0f64..40.0,
        ) {
            let u = UtilitySpec::LogLog;
            let (pa, pb) = (PriceSchedule::log_linear(a1, a2), PriceSchedule::log_linear(b1, b2));
            // The bisection bracket stops at zero compensated income.
            let closed = oracle_cv(&u, &pa, &pb, y, eta).unwrap();
            prop_assume!(closed > -0.9 * y && closed < 1e5);
            let c = oracle_cv_bisect(&u, &pa, &pb, y, eta).unwrap();
            let va = indirect_utility(&u, &pa, y, eta).unwrap();
            let vb = indirect_utility(&u, &pb, y + c, eta).unwrap();
            prop_assert!((vb - va).abs() <= 1e-10 * (1.0 + va.abs()) * 4.0);

            // Moving back from b to a at the compensated income undoes the change.
            let back = oracle_cv_bisect(&u, &pb, &pa, y + c, eta).unwrap();
            let v_round = indirect_utility(&u, &pa, y + c + back, eta).unwrap();
            prop_assert!((v_round - va).abs() <= 1e-8);
        }

        #[test]
        fn structural_demand_strictly_increasing_in_eta(
            y in 100.0f64..900.0, t1 in -100.0f64..50.0, t2 in 2.0f64..40.0,
        ) {
            let p = PriceSchedule::log_linear(t1, t2);
            let mut prev = 0.0;
            for i in 1..=20 {
                let eta = 0.2 * i as f64;
                let s = solve_consumer(&UtilitySpec::LogLog, &p, y, eta).unwrap().s;
                prop_assert!(s > prev);
                prev = s;
            }
        }
    }
}
