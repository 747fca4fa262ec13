use serde::{Deserialize, Serialize};

use super::{CvMethod, CvResult, ThetaPath, TracePoint, WelfareError};
use crate::hedonic::{PolicyChange, PriceSchedule, QuantileDemand, Theta};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdeSettings {
    /// RK4 steps per path segment on the coarse pass.
    pub steps: usize,
    /// Bound on the Richardson error estimate.
    pub tolerance: f64,
}

impl Default for OdeSettings {
    fn default() -> Self {
        Self {
            steps: 1000,
            tolerance: 1e-6,
        }
    }
}

impl OdeSettings {
    pub fn validate(&self) -> Result<(), WelfareError> {
        if self.steps < 2 || !(self.tolerance > 0.0) {
            return Err(WelfareError::InvalidInput(format!(
                "integrator needs at least 2 steps and a positive tolerance, got {self:?}"
            )));
        }
        Ok(())
    }
}

const TRACE_POINTS: usize = 100;

struct Integrator<'a, D: ?Sized> {
    demand: &'a D,
    schedule: &'a PriceSchedule,
    y0: f64,
}

impl<D: QuantileDemand + ?Sized> Integrator<'_, D> {
    /// `dC/du = Σ_j θj'(u) ∂P/∂θj(q(y0 + C, θ(u)))` on one affine segment.
    fn rhs(&self, theta: Theta, dtheta: Theta, c: f64, t: f64) -> Result<f64, WelfareError> {
        let fail = |reason: String| WelfareError::StepFailure { t, reason };
        let ln_q = self
            .demand
            .ln_quantile(self.y0 + c, theta)
            .map_err(|e| fail(e.to_string()))?;
        if !ln_q.is_finite() {
            return Err(fail(format!("demand is not finite at C = {c}")));
        }
        let grad = self
            .schedule
            .with_theta(theta)
            .theta_gradient_ln(ln_q)
            .map_err(|e| fail(e.to_string()))?;
        Ok(dtheta[0] * grad[0] + dtheta[1] * grad[1])
    }

    fn run(&self, segments: &[(Theta, Theta, f64, f64)], n: usize, trace: bool) -> Result<(f64, Vec<TracePoint>), WelfareError> {
        let mut c = 0.0;
        let mut points = Vec::new();
        let every = (n / TRACE_POINTS).max(1);
        if trace {
            if let Some(first) = segments.first() {
                points.push(TracePoint {
                    t: 0.0,
                    theta: first.0,
                    c: 0.0,
                });
            }
        }
        let h = 1.0 / n as f64;
        for &(s, e, t0, t1) in segments {
            let d = [e[0] - s[0], e[1] - s[1]];
            let at = |u: f64| [s[0] + u * d[0], s[1] + u * d[1]];
            let global = |u: f64| t0 + u * (t1 - t0);
            for i in 0..n {
                let u = i as f64 * h;
                let k1 = self.rhs(at(u), d, c, global(u))?;
                let k2 = self.rhs(at(u + 0.5 * h), d, c + 0.5 * h * k1, global(u + 0.5 * h))?;
                let k3 = self.rhs(at(u + 0.5 * h), d, c + 0.5 * h * k2, global(u + 0.5 * h))?;
                let k4 = self.rhs(at(u + h), d, c + h * k3, global(u + h))?;
                c += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                if !c.is_finite() {
                    return Err(WelfareError::StepFailure {
                        t: global(u + h),
                        reason: "compensating variation diverged".into(),
                    });
                }
                if trace && ((i + 1) % every == 0 || i + 1 == n) {
                    let u1 = (i + 1) as f64 * h;
                    points.push(TracePoint {
                        t: global(u1),
                        theta: if i + 1 == n { e } else { at(u1) },
                        c,
                    });
                }
            }
        }
        Ok((c, points))
    }
}

/// Path-ODE compensating variation on the log-linear frontier.
pub fn cv_path_ode<D: QuantileDemand + ?Sized>(
    demand: &D,
    change: &PolicyChange,
    y0: f64,
    path: &ThetaPath,
    settings: &OdeSettings,
) -> Result<CvResult, WelfareError> {
    cv_path_ode_with_schedule(demand, &PriceSchedule::log_linear(change.a1, change.a2), change, y0, path, settings)
}

/// Path-ODE compensating variation for any frontier family; only the
/// schedule's θ-gradient is used.
///
/// Integrates `dC/dt = Σ_j θj'(t) ∂P/∂θj(q(y0 + C, θ(t)))`, `C(0) = 0`, by
/// classical RK4 with `N` then `2N` steps per segment; the error estimate is
/// `|C_N − C_2N| / 15` and the `2N` value is returned. One further doubling
/// is tried before giving up on the tolerance.
pub fn cv_path_ode_with_schedule<D: QuantileDemand + ?Sized>(
    demand: &D,
    schedule: &PriceSchedule,
    change: &PolicyChange,
    y0: f64,
    path: &ThetaPath,
    settings: &OdeSettings,
) -> Result<CvResult, WelfareError> {
    settings.validate()?;
    change.validate()?;
    let segments = path.segments(change.a(), change.b());
    if segments.is_empty() {
        return Ok(CvResult {
            cv: 0.0,
            method: CvMethod::PathOde,
            trace: vec![TracePoint {
                t: 0.0,
                theta: change.a(),
                c: 0.0,
            }],
            error_estimate: 0.0,
        });
    }
    let integ = Integrator { demand, schedule, y0 };
    let (coarse, _) = integ.run(&segments, settings.steps, false)?;
    let (mut fine, mut trace) = integ.run(&segments, 2 * settings.steps, true)?;
    let mut estimate = (coarse - fine).abs() / 15.0;
    if estimate > settings.tolerance {
        let (finer, finer_trace) = integ.run(&segments, 4 * settings.steps, true)?;
        estimate = (fine - finer).abs() / 15.0;
        fine = finer;
        trace = finer_trace;
        if estimate > settings.tolerance {
            return Err(WelfareError::ToleranceNotMet {
                estimate,
                tolerance: settings.tolerance,
            });
        }
    }
    Ok(CvResult {
        cv: fine,
        method: CvMethod::PathOde,
        trace,
        error_estimate: estimate,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PathGap {
    pub straight_line: f64,
    pub axis_first_theta1: f64,
    pub axis_first_theta2: f64,
    /// Largest pairwise difference of the three.
    pub gap: f64,
}

/// Integrates along the straight line and both axis-ordered paths.
pub fn path_independence_gap<D: QuantileDemand + ?Sized>(
    demand: &D,
    change: &PolicyChange,
    y0: f64,
    settings: &OdeSettings,
) -> Result<PathGap, WelfareError> {
    let run = |p: ThetaPath| cv_path_ode(demand, change, y0, &p, settings).map(|r| r.cv);
    let s = run(ThetaPath::StraightLine)?;
    let t1 = run(ThetaPath::AxisFirstTheta1)?;
    let t2 = run(ThetaPath::AxisFirstTheta2)?;
    let gap = (s - t1).abs().max((s - t2).abs()).max((t1 - t2).abs());
    Ok(PathGap {
        straight_line: s,
        axis_first_theta1: t1,
        axis_first_theta2: t2,
        gap,
    })
}
