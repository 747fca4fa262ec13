use super::{CvMethod, CvResult, TracePoint, WelfareError};
use crate::hedonic::{PolicyChange, QuantileDemandModel};

const MIN_R1: f64 = 1e-10;

/// `(eᶻ − 1)/z` and `(eᶻ − 1 − z)/z²`, accurate near `z = 0`.
fn phi12(z: f64) -> (f64, f64) {
    if z.abs() < 1e-2 {
        // Taylor series; the truncation error is below 1e-17 at |z| = 1e-2.
        let phi1 = 1.0 + z / 2.0 + z * z / 6.0 + z.powi(3) / 24.0 + z.powi(4) / 120.0 + z.powi(5) / 720.0;
        let phi2 = 0.5 + z / 6.0 + z * z / 24.0 + z.powi(3) / 120.0 + z.powi(4) / 720.0 + z.powi(5) / 5040.0;
        (phi1, phi2)
    } else {
        let e = z.exp_m1();
        (e / z, (e - z) / (z * z))
    }
}

fn check(model: &QuantileDemandModel, change: &PolicyChange) -> Result<(), WelfareError> {
    model.validate()?;
    change.validate()?;
    if !model.constrained {
        return Err(WelfareError::Unconstrained);
    }
    if !(model.r1.abs() >= MIN_R1) {
        return Err(WelfareError::DegenerateCoefficient { r1: model.r1 });
    }
    Ok(())
}

/// Closed-form compensating variation for the constrained linear model,
/// with `r0` replaced by `r0 + r4 δ0`.
///
/// Evaluated as
/// `(b1 − a1) + Δ2 φ1(z) (r0 + r1 (y − a1) + r3 a2) + r3 Δ2² φ2(z)`,
/// `z = r1 Δ2`, which equals the textbook expression
/// `e^z {r0/r1 + y + a2 r3/r1 + r3/r1² − a1} + b1 − r0/r1 − y − r3 b2/r1 − r3/r1²`
/// without its cancellation for small `r1`.
pub fn cv_closed_form(
    model: &QuantileDemandModel,
    change: &PolicyChange,
    y0: f64,
) -> Result<CvResult, WelfareError> {
    check(model, change)?;
    let r0 = model.effective_intercept(change.delta0);
    let (r1, r3) = (model.r1, model.r3);
    let d2 = change.b2 - change.a2;
    let (phi1, phi2) = phi12(r1 * d2);
    let cv = if change.a() == change.b() {
        0.0
    } else {
        (change.b1 - change.a1) + d2 * phi1 * (r0 + r1 * (y0 - change.a1) + r3 * change.a2) + r3 * d2 * d2 * phi2
    };
    Ok(CvResult {
        cv,
        method: CvMethod::ClosedForm,
        trace: vec![
            TracePoint {
                t: 0.0,
                theta: change.a(),
                c: 0.0,
            },
            TracePoint {
                t: 1.0,
                theta: change.b(),
                c: cv,
            },
        ],
        error_estimate: 0.0,
    })
}

/// `∂C/∂y0 = e^{r1 (b2 − a2)} − 1`; the closed form is affine in income.
pub fn cv_income_slope(model: &QuantileDemandModel, change: &PolicyChange) -> Result<f64, WelfareError> {
    check(model, change)?;
    Ok((model.r1 * (change.b2 - change.a2)).exp_m1())
}
