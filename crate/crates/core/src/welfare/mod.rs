//! Compensating variation for a move of the frontier parameters from `a`
//! to `b`: a closed form for the linear log-quantile demand, and a path ODE
//! for any demand surface.

mod closed;
mod ode;
mod path;
mod table;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hedonic::{HedonicError, Theta};

pub use closed::{cv_closed_form, cv_income_slope};
pub use ode::{cv_path_ode, cv_path_ode_with_schedule, path_independence_gap, OdeSettings, PathGap};
pub use path::ThetaPath;
pub use table::{calibrate_to_paper, cv_table, Calibration, CvTable};

#[derive(Debug, Error)]
pub enum WelfareError {
    #[error("|r1| = {r1:e} is too small for the closed form; use the path integrator")]
    DegenerateCoefficient { r1: f64 },
    #[error("the closed form needs a constrained model (r2 = -r1)")]
    Unconstrained,
    #[error("integration step failed at t = {t}: {reason}")]
    StepFailure { t: f64, reason: String },
    #[error("integrator error estimate {estimate:e} exceeds tolerance {tolerance:e}")]
    ToleranceNotMet { estimate: f64, tolerance: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Hedonic(#[from] HedonicError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvMethod {
    ClosedForm,
    PathOde,
}

impl CvMethod {
    pub fn name(self) -> &'static str {
        match self {
            CvMethod::ClosedForm => "closed_form",
            CvMethod::PathOde => "path_ode",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TracePoint {
    pub t: f64,
    pub theta: Theta,
    pub c: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CvResult {
    /// Weekly GBP.
    pub cv: f64,
    pub method: CvMethod,
    /// Samples of `C(t)` along the path, starting at `C(0) = 0`.
    pub trace: Vec<TracePoint>,
    pub error_estimate: f64,
}
