//! Hedonic price schedules, markets, quantile demand models and the
//! nonlinear-budget Slutsky residual.
//!
//! A price schedule maps an attribute level `s` to a weekly price
//! `P(s; θ)`. Welfare calculations move the two frontier parameters
//! `θ = (θ1, θ2)` while any additional attribute price (`δ`) stays fixed,
//! so every θ-gradient returned here has exactly two components.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Frontier parameters `(θ1, θ2)`.
pub type Theta = [f64; 2];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HedonicError {
    #[error("attribute level {s} outside schedule domain [{lo}, {hi}]")]
    Domain { s: f64, lo: f64, hi: f64 },
    #[error("theta index pair ({j}, {k}) invalid: indices must be distinct and in 1..=2")]
    Index { j: usize, k: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("demand undefined at y={y}, theta=({t1}, {t2})")]
    DemandUndefined { y: f64, t1: f64, t2: f64 },
}

/// Closed interval of admissible attribute levels. The lower bound is
/// strictly positive so that `ln s` is always defined.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SDomain {
    pub lo: f64,
    pub hi: f64,
}

impl Default for SDomain {
    fn default() -> Self {
        Self {
            lo: f64::MIN_POSITIVE,
            hi: f64::INFINITY,
        }
    }
}

impl SDomain {
    pub fn new(lo: f64, hi: f64) -> Result<Self, HedonicError> {
        if !(lo > 0.0) || !(hi > lo) {
            return Err(HedonicError::InvalidParameter(format!(
                "s-domain [{lo}, {hi}] must satisfy 0 < lo < hi"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, s: f64) -> bool {
        s.is_finite() && s > 0.0 && s >= self.lo && s <= self.hi
    }

    fn check(&self, s: f64) -> Result<(), HedonicError> {
        if self.contains(s) {
            Ok(())
        } else {
            Err(HedonicError::Domain {
                s,
                lo: self.lo,
                hi: self.hi,
            })
        }
    }
}

/// Caller-supplied evaluators for a schedule that is neither log-linear nor
/// additive. All derivatives are taken at the supplied θ.
pub trait FrontierEvaluator: Send + Sync + fmt::Debug {
    fn price(&self, s: f64, theta: Theta) -> f64;
    /// ∂P/∂s
    fn slope(&self, s: f64, theta: Theta) -> f64;
    /// (∂P/∂θ1, ∂P/∂θ2)
    fn theta_gradient(&self, s: f64, theta: Theta) -> Theta;
    /// (∂²P/∂θ1∂s, ∂²P/∂θ2∂s)
    fn cross_derivative(&self, s: f64, theta: Theta) -> Theta;
}

/// The hedonic frontier `P(s; θ)`.
#[derive(Clone, Debug)]
pub enum PriceSchedule {
    /// `θ1 + θ2 ln s`
    LogLinear { theta: Theta, domain: SDomain },
    /// `θ1 + θ2 ln s + δ x`, with `δ` held fixed in all welfare calculations.
    AdditiveTwoPart {
        theta: Theta,
        delta: f64,
        domain: SDomain,
    },
    General {
        theta: Theta,
        eval: Arc<dyn FrontierEvaluator>,
        domain: SDomain,
    },
}

impl PriceSchedule {
    pub fn log_linear(theta1: f64, theta2: f64) -> Self {
        PriceSchedule::LogLinear {
            theta: [theta1, theta2],
            domain: SDomain::default(),
        }
    }

    pub fn additive(theta1: f64, theta2: f64, delta: f64) -> Self {
        PriceSchedule::AdditiveTwoPart {
            theta: [theta1, theta2],
            delta,
            domain: SDomain::default(),
        }
    }

    pub fn general(theta: Theta, eval: Arc<dyn FrontierEvaluator>, domain: SDomain) -> Self {
        PriceSchedule::General {
            theta,
            eval,
            domain,
        }
    }

    pub fn with_domain(mut self, new_domain: SDomain) -> Self {
        match &mut self {
            PriceSchedule::LogLinear { domain, .. }
            | PriceSchedule::AdditiveTwoPart { domain, .. }
            | PriceSchedule::General { domain, .. } => *domain = new_domain,
        }
        self
    }

    pub fn theta(&self) -> Theta {
        match self {
            PriceSchedule::LogLinear { theta, .. }
            | PriceSchedule::AdditiveTwoPart { theta, .. }
            | PriceSchedule::General { theta, .. } => *theta,
        }
    }

    /// Same schedule family evaluated at different frontier parameters.
    pub fn with_theta(&self, new_theta: Theta) -> Self {
        let mut out = self.clone();
        match &mut out {
            PriceSchedule::LogLinear { theta, .. }
            | PriceSchedule::AdditiveTwoPart { theta, .. }
            | PriceSchedule::General { theta, .. } => *theta = new_theta,
        }
        out
    }

    pub fn domain(&self) -> SDomain {
        match self {
            PriceSchedule::LogLinear { domain, .. }
            | PriceSchedule::AdditiveTwoPart { domain, .. }
            | PriceSchedule::General { domain, .. } => *domain,
        }
    }

    /// Price of the additional attribute, if the schedule has one.
    pub fn delta(&self) -> Option<f64> {
        match self {
            PriceSchedule::AdditiveTwoPart { delta, .. } => Some(*delta),
            _ => None,
        }
    }

    /// Weekly price at attribute level `s`. For the additive schedule the
    /// `δ·x` part is included when `x` is given.
    pub fn price(&self, s: f64, x: Option<f64>) -> Result<f64, HedonicError> {
        self.domain().check(s)?;
        Ok(match self {
            PriceSchedule::LogLinear { theta, .. } => theta[0] + theta[1] * s.ln(),
            PriceSchedule::AdditiveTwoPart { theta, delta, .. } => {
                theta[0] + theta[1] * s.ln() + delta * x.unwrap_or(0.0)
            }
            PriceSchedule::General { theta, eval, .. } => eval.price(s, *theta),
        })
    }

    /// ∂P/∂s
    pub fn slope(&self, s: f64) -> Result<f64, HedonicError> {
        self.domain().check(s)?;
        Ok(match self {
            PriceSchedule::LogLinear { theta, .. }
            | PriceSchedule::AdditiveTwoPart { theta, .. } => theta[1] / s,
            PriceSchedule::General { theta, eval, .. } => eval.slope(s, *theta),
        })
    }

    /// ∂²P/∂s²
    pub fn curvature(&self, s: f64) -> Result<f64, HedonicError> {
        self.domain().check(s)?;
        Ok(match self {
            PriceSchedule::LogLinear { theta, .. }
            | PriceSchedule::AdditiveTwoPart { theta, .. } => -theta[1] / (s * s),
            PriceSchedule::General { theta, eval, .. } => {
                let h = 1e-5 * s;
                (eval.slope(s + h, *theta) - eval.slope(s - h, *theta)) / (2.0 * h)
            }
        })
    }

    /// (∂P/∂θ1, ∂P/∂θ2). The `δ` component of an additive schedule is
    /// excluded because `δ` never moves in a policy change.
    pub fn theta_gradient(&self, s: f64) -> Result<Theta, HedonicError> {
        self.domain().check(s)?;
        Ok(match self {
            PriceSchedule::LogLinear { .. } | PriceSchedule::AdditiveTwoPart { .. } => {
                [1.0, s.ln()]
            }
            PriceSchedule::General { theta, eval, .. } => eval.theta_gradient(s, *theta),
        })
    }

    /// θ-gradient given `ln s`, avoiding an exp/ln round trip for the
    /// log-linear families.
    pub fn theta_gradient_ln(&self, ln_s: f64) -> Result<Theta, HedonicError> {
        match self {
            PriceSchedule::LogLinear { domain, .. }
            | PriceSchedule::AdditiveTwoPart { domain, .. } => {
                if domain.lo > f64::MIN_POSITIVE || domain.hi < f64::INFINITY {
                    domain.check(ln_s.exp())?;
                } else if !ln_s.is_finite() {
                    return Err(HedonicError::Domain {
                        s: ln_s.exp(),
                        lo: domain.lo,
                        hi: domain.hi,
                    });
                }
                Ok([1.0, ln_s])
            }
            PriceSchedule::General { .. } => self.theta_gradient(ln_s.exp()),
        }
    }

    /// ∂²P/(∂θj ∂s) for `j` in `1..=2`.
    pub fn cross_derivative(&self, s: f64, j: usize) -> Result<f64, HedonicError> {
        if !(1..=2).contains(&j) {
            return Err(HedonicError::Index { j, k: j });
        }
        self.domain().check(s)?;
        Ok(match self {
            PriceSchedule::LogLinear { .. } | PriceSchedule::AdditiveTwoPart { .. } => {
                if j == 1 {
                    0.0
                } else {
                    1.0 / s
                }
            }
            PriceSchedule::General { theta, eval, .. } => eval.cross_derivative(s, *theta)[j - 1],
        })
    }

    /// Smallest ∂P/∂s over the supplied grid; positive when the schedule is
    /// increasing on that grid.
    pub fn min_slope_on(&self, grid: &[f64]) -> Result<f64, HedonicError> {
        let mut min = f64::INFINITY;
        for &s in grid {
            min = min.min(self.slope(s)?);
        }
        Ok(min)
    }

    /// Attribute level at which the frontier uses up income `y`, found by
    /// bisection for general schedules.
    pub fn max_affordable(&self, y: f64) -> Option<f64> {
        match self {
            PriceSchedule::LogLinear { theta, .. } | PriceSchedule::AdditiveTwoPart { theta, .. } => {
                if theta[1] <= 0.0 {
                    return None;
                }
                let s = ((y - theta[0]) / theta[1]).exp();
                let dom = self.domain();
                if s < dom.lo {
                    None
                } else {
                    Some(s.min(dom.hi))
                }
            }
            PriceSchedule::General { theta, eval, domain } => {
                let (mut lo, mut hi) = (domain.lo, domain.hi);
                if eval.price(lo, *theta) >= y {
                    return None;
                }
                if !hi.is_finite() {
                    hi = lo.max(1.0);
                    while eval.price(hi, *theta) < y {
                        hi *= 2.0;
                        if !hi.is_finite() {
                            return Some(f64::MAX);
                        }
                    }
                } else if eval.price(hi, *theta) < y {
                    return Some(hi);
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if eval.price(mid, *theta) < y {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                Some(lo)
            }
        }
    }
}

/// Market-level hedonic parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Market {
    pub market_id: String,
    pub theta1: f64,
    pub theta2: f64,
    pub delta: f64,
    pub n_obs: usize,
    pub r_squared: f64,
}

impl Market {
    /// Regressors in the per-market hedonic regression: intercept, ln s and
    /// the attribute index.
    pub const REGRESSORS: usize = 3;

    pub fn new(
        market_id: impl Into<String>,
        theta: Theta,
        delta: f64,
        n_obs: usize,
        r_squared: f64,
    ) -> Result<Self, HedonicError> {
        if n_obs < Self::REGRESSORS + 1 {
            return Err(HedonicError::InvalidParameter(format!(
                "market needs at least {} observations, got {n_obs}",
                Self::REGRESSORS + 1
            )));
        }
        if !(0.0..=1.0).contains(&r_squared) {
            return Err(HedonicError::InvalidParameter(format!(
                "r_squared {r_squared} outside [0, 1]"
            )));
        }
        Ok(Self {
            market_id: market_id.into(),
            theta1: theta[0],
            theta2: theta[1],
            delta,
            n_obs,
            r_squared,
        })
    }

    pub fn theta(&self) -> Theta {
        [self.theta1, self.theta2]
    }

    pub fn schedule(&self) -> PriceSchedule {
        PriceSchedule::additive(self.theta1, self.theta2, self.delta)
    }
}

/// Coefficients of the log-quantile demand
/// `ln q_τ(y, θ) = r0 + r1 y + r2 θ1 + r3 θ2 + r4 δ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantileDemandModel {
    pub tau: f64,
    pub r0: f64,
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub r4: f64,
    /// Parameterised through `r1 (y − θ1)`, which pins `r2 = −r1`.
    pub constrained: bool,
}

fn check_tau(tau: f64) -> Result<(), HedonicError> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(HedonicError::InvalidParameter(format!(
            "tau {tau} must lie strictly inside (0, 1)"
        )))
    }
}

impl QuantileDemandModel {
    pub fn constrained(tau: f64, r0: f64, r1: f64, r3: f64, r4: f64) -> Result<Self, HedonicError> {
        check_tau(tau)?;
        Ok(Self {
            tau,
            r0,
            r1,
            r2: -r1,
            r3,
            r4,
            constrained: true,
        })
    }

    pub fn unconstrained(
        tau: f64,
        r0: f64,
        r1: f64,
        r2: f64,
        r3: f64,
        r4: f64,
    ) -> Result<Self, HedonicError> {
        check_tau(tau)?;
        Ok(Self {
            tau,
            r0,
            r1,
            r2,
            r3,
            r4,
            constrained: false,
        })
    }

    pub fn validate(&self) -> Result<(), HedonicError> {
        check_tau(self.tau)?;
        if self.constrained && self.r2 != -self.r1 {
            return Err(HedonicError::InvalidParameter(format!(
                "constrained model requires r2 = -r1, got r1={} r2={}",
                self.r1, self.r2
            )));
        }
        Ok(())
    }

    /// Intercept after folding in the fixed attribute price: `r0 + r4 δ0`.
    pub fn effective_intercept(&self, delta0: f64) -> f64 {
        self.r0 + self.r4 * delta0
    }

    pub fn ln_quantile(&self, y: f64, theta: Theta, delta0: f64) -> f64 {
        let base = self.effective_intercept(delta0) + self.r3 * theta[1];
        if self.constrained {
            base + self.r1 * (y - theta[0])
        } else {
            base + self.r1 * y + self.r2 * theta[0]
        }
    }

    /// Demanded attribute level `q_τ(y, θ)`.
    pub fn eval(&self, y: f64, theta: Theta, delta0: f64) -> f64 {
        self.ln_quantile(y, theta, delta0).exp()
    }

    pub fn with_delta(self, delta0: f64) -> LinearDemand {
        LinearDemand {
            model: self,
            delta0,
        }
    }
}

/// Partial derivatives of a demand function at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DemandDerivatives {
    pub q: f64,
    pub dq_dy: f64,
    pub dq_dtheta: Theta,
}

/// A quantile demand surface `q_τ(y, θ)`, reported on the log scale.
pub trait QuantileDemand: Send + Sync {
    fn ln_quantile(&self, y: f64, theta: Theta) -> Result<f64, HedonicError>;
}

/// Demand surfaces that can also report analytic partial derivatives.
pub trait DemandPartials: QuantileDemand {
    fn partials(&self, y: f64, theta: Theta) -> Result<DemandDerivatives, HedonicError>;
}

impl<T: QuantileDemand + ?Sized> QuantileDemand for &T {
    fn ln_quantile(&self, y: f64, theta: Theta) -> Result<f64, HedonicError> {
        (**self).ln_quantile(y, theta)
    }
}

/// A [`QuantileDemandModel`] with the attribute price fixed at `δ0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearDemand {
    pub model: QuantileDemandModel,
    pub delta0: f64,
}

impl QuantileDemand for LinearDemand {
    fn ln_quantile(&self, y: f64, theta: Theta) -> Result<f64, HedonicError> {
        Ok(self.model.ln_quantile(y, theta, self.delta0))
    }
}

impl DemandPartials for LinearDemand {
    fn partials(&self, y: f64, theta: Theta) -> Result<DemandDerivatives, HedonicError> {
        let q = self.model.eval(y, theta, self.delta0);
        Ok(DemandDerivatives {
            q,
            dq_dy: self.model.r1 * q,
            dq_dtheta: [self.model.r2 * q, self.model.r3 * q],
        })
    }
}

/// Nonlinear-budget Slutsky residual for the linear quantile model.
///
/// Returns
/// `∂²P/∂θk∂q · {q_y P_j + q_j} − ∂²P/∂θj∂q · {q_y P_k + q_k}`,
/// which is antisymmetric in `(j, k)` and vanishes for demand generated by
/// utility maximisation. For a log-linear schedule `(j, k) = (1, 2)` gives
/// exactly `r1 + r2`.
pub fn slutsky_residual(
    schedule: &PriceSchedule,
    model: &QuantileDemandModel,
    y: f64,
    theta: Theta,
    delta0: f64,
    j: usize,
    k: usize,
) -> Result<f64, HedonicError> {
    slutsky_residual_for(schedule, &model.with_delta(delta0), y, theta, j, k)
}

/// [`slutsky_residual`] for any demand surface with analytic partials.
pub fn slutsky_residual_for<D: DemandPartials + ?Sized>(
    schedule: &PriceSchedule,
    demand: &D,
    y: f64,
    theta: Theta,
    j: usize,
    k: usize,
) -> Result<f64, HedonicError> {
    if j == k || !(1..=2).contains(&j) || !(1..=2).contains(&k) {
        return Err(HedonicError::Index { j, k });
    }
    let d = demand.partials(y, theta)?;
    let sched = schedule.with_theta(theta);
    let grad = sched.theta_gradient(d.q)?;
    let cross_j = sched.cross_derivative(d.q, j)?;
    let cross_k = sched.cross_derivative(d.q, k)?;
    let field_j = d.dq_dy * grad[j - 1] + d.dq_dtheta[j - 1];
    let field_k = d.dq_dy * grad[k - 1] + d.dq_dtheta[k - 1];
    Ok(cross_k * field_j - cross_j * field_k)
}

/// Endpoints of a frontier change `θ: a → b` with the attribute price
/// fixed at `δ0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyChange {
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
    pub b2: f64,
    #[serde(default)]
    pub delta0: f64,
}

impl PolicyChange {
    pub fn new(a: Theta, b: Theta, delta0: f64) -> Result<Self, HedonicError> {
        let change = Self {
            a1: a[0],
            a2: a[1],
            b1: b[0],
            b2: b[1],
            delta0,
        };
        change.validate()?;
        Ok(change)
    }

    pub fn validate(&self) -> Result<(), HedonicError> {
        if !(self.a2 > 0.0 && self.b2 > 0.0) {
            return Err(HedonicError::InvalidParameter(format!(
                "frontier slopes must be positive, got a2={} b2={}",
                self.a2, self.b2
            )));
        }
        if ![self.a1, self.a2, self.b1, self.b2, self.delta0]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(HedonicError::InvalidParameter(
                "policy change has non-finite values".into(),
            ));
        }
        Ok(())
    }

    pub fn a(&self) -> Theta {
        [self.a1, self.a2]
    }

    pub fn b(&self) -> Theta {
        [self.b1, self.b2]
    }

    pub fn reversed(&self) -> Self {
        Self {
            a1: self.b1,
            a2: self.b2,
            b1: self.a1,
            b2: self.a2,
            delta0: self.delta0,
        }
    }
}
