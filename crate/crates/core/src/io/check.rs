//! The invariant suite behind the `check` command.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::CheckConfig;
use crate::estimation::QuantileFit;
use crate::hedonic::{PolicyChange, PriceSchedule, QuantileDemandModel};
use crate::oracle::{check_assumptions, roy_residual, StructuralDemand, UtilitySpec};
use crate::paper::PaperConstants;
use crate::welfare::{calibrate_to_paper, cv_closed_form, cv_path_ode, path_independence_gap, OdeSettings, ThetaPath};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckItem {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CheckReport {
    pub items: Vec<CheckItem>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.items.iter().all(|i| i.passed)
    }

    fn push(&mut self, name: &str, passed: bool, detail: String) {
        self.items.push(CheckItem {
            name: name.into(),
            passed,
            detail,
        });
    }

    pub fn failures(&self) -> Vec<&str> {
        self.items.iter().filter(|i| !i.passed).map(|i| i.name.as_str()).collect()
    }
}

fn closed_vs_ode(cases: usize, rng: &mut ChaCha8Rng) -> (bool, String) {
    let settings = OdeSettings::default();
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let model = QuantileDemandModel::constrained(
            0.5,
            rng.random_range(4.0..7.0),
            sign * rng.random_range(1e-4..0.02),
            rng.random_range(-0.01..0.01),
            0.0,
        );
        let change = PolicyChange::new(
            [rng.random_range(-100.0..50.0), rng.random_range(5.0..40.0)],
            [rng.random_range(-100.0..50.0), rng.random_range(5.0..40.0)],
            0.0,
        );
        let y = rng.random_range(150.0..900.0);
        let (Ok(model), Ok(change)) = (model, change) else {
            return (false, "invalid random case".into());
        };
        let closed = cv_closed_form(&model, &change, y);
        let ode = cv_path_ode(&model.with_delta(0.0), &change, y, &ThetaPath::StraightLine, &settings);
        match (closed, ode) {
            (Ok(c), Ok(o)) => {
                let excess = (c.cv - o.cv).abs() / (10.0 * o.error_estimate).max(1e-8);
                worst = worst.max(excess);
            }
            (Err(e), _) | (_, Err(e)) => return (false, e.to_string()),
        }
    }
    (worst <= 1.0, format!("{cases} cases, worst |closed - ode| / bound = {worst:.3e}"))
}

fn path_independence(tolerance: f64) -> (bool, String) {
    let settings = OdeSettings::default();
    let change = PolicyChange::new([-28.164, 18.297], [-73.695, 28.556], 0.0).expect("valid change");
    let constrained = QuantileDemandModel::constrained(0.5, 5.66965, 0.00047, -0.00252, 0.01136)
        .expect("valid model")
        .with_delta(0.0);
    let loglog = StructuralDemand::new(UtilitySpec::LogLog, PriceSchedule::log_linear(0.0, 1.0), 1.0);
    let asym = QuantileDemandModel::unconstrained(0.5, 0.0, 0.01, 0.0, 0.0, 0.0)
        .expect("valid model")
        .with_delta(0.0);
    let asym_change = PolicyChange::new([0.0, 10.0], [5.0, 20.0], 0.0).expect("valid change");
    let gaps = (
        path_independence_gap(&constrained, &change, 362.0, &settings),
        path_independence_gap(&loglog, &change, 362.0, &settings),
        path_independence_gap(&asym, &asym_change, 100.0, &settings),
    );
    match gaps {
        (Ok(a), Ok(b), Ok(c)) => (
            a.gap <= tolerance && b.gap <= tolerance && c.gap > 1e-3,
            format!(
                "constrained gap {:.3e}, structural gap {:.3e}, asymmetric gap {:.3e}",
                a.gap, b.gap, c.gap
            ),
        ),
        (Err(e), _, _) | (_, Err(e), _) | (_, _, Err(e)) => (false, e.to_string()),
    }
}

fn assumptions(roy_tolerance: f64, rng: &mut ChaCha8Rng) -> (bool, String) {
    let schedule = PriceSchedule::log_linear(-28.164, 18.297);
    let utility = UtilitySpec::LogLog;
    let ys: Vec<f64> = (0..50).map(|i| 150.0 + 15.0 * i as f64).collect();
    let etas: Vec<f64> = (0..50).map(|i| 0.2 + 0.06 * i as f64).collect();
    let report = check_assumptions(&utility, &schedule, &ys, &etas);
    let mut roy = 0.0f64;
    for _ in 0..100 {
        let (y, eta) = (rng.random_range(150.0..900.0), rng.random_range(0.2..3.0));
        for j in 1..=2 {
            match roy_residual(&utility, &schedule, y, eta, j) {
                Ok(r) => roy = roy.max(r),
                Err(e) => return (false, e.to_string()),
            }
        }
    }
    (
        report.passes(roy_tolerance) && roy <= roy_tolerance,
        format!(
            "min second-order margin {:.3e}, min dS/deta {:.3e}, max Roy residual {:.3e}",
            report.min_convexity_margin,
            report.min_demand_slope_eta,
            report.max_roy_residual.max(roy)
        ),
    )
}

/// Runs every check; failures are reported, not raised.
pub fn run_invariant_suite(config: &CheckConfig, seed: u64, fits: Option<&[QuantileFit]>) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = CheckReport::default();
    let (ok, detail) = closed_vs_ode(config.closed_form_cases, &mut rng);
    report.push("closed_form_matches_path_ode", ok, detail);
    let (ok, detail) = path_independence(config.path_gap_tolerance);
    report.push("path_independence_iff_symmetry", ok, detail);
    let (ok, detail) = assumptions(config.roy_tolerance, &mut rng);
    report.push("regularity_conditions", ok, detail);
    match PaperConstants::embedded().map_err(|e| e.to_string()).and_then(|c| calibrate_to_paper(&c).map_err(|e| e.to_string())) {
        Ok(cal) => report.push(
            "published_cv_table",
            cal.passes(config.replication_tolerance),
            format!("max residual {:.4} GBP", cal.max_abs_residual),
        ),
        Err(e) => report.push("published_cv_table", false, e),
    }
    if let Some(fits) = fits {
        let bad: Vec<String> = fits
            .iter()
            .filter(|f| f.converged && !f.sandwich_holds())
            .map(|f| format!("tau={}", f.tau))
            .collect();
        report.push(
            "quantile_optimality",
            bad.is_empty(),
            if bad.is_empty() { format!("{} fits", fits.len()) } else { bad.join(", ") },
        );
    }
    report
}
