//! Acceptance suite. Runs with `cargo test --test acceptance` and prints one
//! PASS/FAIL line per criterion; exits non-zero if any fails.

mod common;

use std::collections::HashMap;
use std::fs;
use std::time::{Duration, Instant};

use common::{direct_config, loglog_config, rel, simulate_and_fit};
use hedonic_welfare::estimation::{fit_quantile_demand, test_symmetry_restriction, DemandBasis, HedonicFit, QuantileFit, SampleRow};
use hedonic_welfare::hedonic::{PolicyChange, PriceSchedule, QuantileDemandModel};
use hedonic_welfare::io::{execute, income_percentile, Command, LoadedConfig, RunConfig};
use hedonic_welfare::oracle::{check_assumptions, oracle_cv, oracle_cv_bisect, roy_residual, StructuralDemand, UtilitySpec};
use hedonic_welfare::paper::PaperConstants;
use hedonic_welfare::welfare::{
    calibrate_to_paper, cv_closed_form, cv_path_ode, cv_path_ode_with_schedule, path_independence_gap, OdeSettings,
    ThetaPath,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use statrs::distribution::{ContinuousCDF, Normal};

type Outcome = Result<String, String>;

/// Fraction-below sandwich recomputed from the fitted coefficients.
struct SandwichCase {
    label: String,
    converged: bool,
    holds: bool,
    detail: String,
}

#[derive(Default)]
struct Ctx {
    sandwich: Vec<SandwichCase>,
}

impl Ctx {
    fn record(&mut self, label: &str, fit: &QuantileFit, rows: &[SampleRow], markets: &[HedonicFit]) {
        let by_id: HashMap<&str, &HedonicFit> = markets.iter().map(|m| (m.market_id.as_str(), m)).collect();
        let n = rows.len() as f64;
        let (mut below, mut nonpos) = (0usize, 0usize);
        for r in rows {
            let m = by_id[r.market_id.as_str()];
            let resid = r.ln_s - fit.ln_quantile_at(r.income, m.theta1, m.theta2, m.delta);
            // Residuals within rounding of zero count as interpolated.
            let eps = 1e-9 * (1.0 + r.ln_s.abs());
            below += (resid < -eps) as usize;
            nonpos += (resid <= eps) as usize;
        }
        let slack = (fit.p as f64 + 1.0) / n;
        let (fb, fnp) = (below as f64 / n, nonpos as f64 / n);
        self.sandwich.push(SandwichCase {
            label: format!("{label} tau={}", fit.tau),
            converged: fit.converged,
            holds: fb <= fit.tau + slack && fnp >= fit.tau - slack,
            detail: format!("below {fb:.4}, at or below {fnp:.4}, slack {slack:.4}"),
        });
    }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn paper_change() -> PolicyChange {
    PolicyChange::new([-28.164, 18.297], [-73.695, 28.556], 0.0).unwrap()
}

fn table_replication(_: &mut Ctx) -> Outcome {
    let consts = PaperConstants::embedded().map_err(|e| e.to_string())?;
    let cal = calibrate_to_paper(&consts).map_err(|e| e.to_string())?;
    for (got, want) in cal.y_columns.iter().zip([275.0, 362.0, 486.0]) {
        ensure(rel(*got, want) < 0.01, || format!("calibrated income {got:.2}, expected about {want}"))?;
    }
    ensure(cal.max_abs_residual <= 0.1, || format!("max residual {:.4} GBP", cal.max_abs_residual))?;
    ensure(cal.all_positive, || "a cell is not positive".into())?;
    ensure(cal.rows_increase_in_income && cal.columns_increase_in_tau, || "monotonicity fails".into())?;
    Ok(format!(
        "y = {:.1}/{:.1}/{:.1}, max residual {:.4} GBP",
        cal.y_columns[0], cal.y_columns[1], cal.y_columns[2], cal.max_abs_residual
    ))
}

fn closed_form_vs_ode(_: &mut Ctx) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let settings = OdeSettings::default();
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let model = QuantileDemandModel::constrained(
            rng.random_range(0.05..0.95),
            rng.random_range(4.0..7.0),
            sign * rng.random_range(1e-4..0.02),
            rng.random_range(-0.01..0.01),
            rng.random_range(-0.02..0.02),
        )
        .unwrap();
        let change = PolicyChange::new(
            [rng.random_range(-100.0..50.0), rng.random_range(5.0..40.0)],
            [rng.random_range(-100.0..50.0), rng.random_range(5.0..40.0)],
            rng.random_range(0.0..3.0),
        )
        .unwrap();
        let y = rng.random_range(150.0..900.0);
        let c = cv_closed_form(&model, &change, y).map_err(|e| e.to_string())?.cv;
        let o = cv_path_ode(&model.with_delta(change.delta0), &change, y, &ThetaPath::StraightLine, &settings)
            .map_err(|e| e.to_string())?;
        let bound = (10.0 * o.error_estimate).max(1e-8);
        ensure((c - o.cv).abs() <= bound, || format!("closed {c} vs ode {} (bound {bound:e})", o.cv))?;
        worst = worst.max((c - o.cv).abs() / bound);
    }
    Ok(format!("200 cases, worst |diff| / bound = {worst:.3}"))
}

fn path_independence(_: &mut Ctx) -> Outcome {
    let settings = OdeSettings::default();
    let change = paper_change();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let m = QuantileDemandModel::constrained(
            0.5,
            rng.random_range(4.5..6.5),
            rng.random_range(1e-4..0.005),
            rng.random_range(-0.01..0.0),
            0.0,
        )
        .unwrap();
        let g = path_independence_gap(&m.with_delta(0.0), &change, rng.random_range(200.0..600.0), &settings)
            .map_err(|e| e.to_string())?;
        worst = worst.max(g.gap);
    }
    let loglog_change = PolicyChange::new([-20.0, 60.0], [-60.0, 80.0], 0.0).unwrap();
    for eta in [0.5, 1.0, 2.0] {
        let d = StructuralDemand::new(UtilitySpec::LogLog, PriceSchedule::log_linear(0.0, 1.0), eta);
        let g = path_independence_gap(&d, &loglog_change, 400.0, &settings).map_err(|e| e.to_string())?;
        worst = worst.max(g.gap);
    }
    ensure(worst <= 1e-8, || format!("symmetric gap {worst:e}"))?;
    let asym = QuantileDemandModel::unconstrained(0.5, 0.0, 0.01, 0.0, 0.0, 0.0).unwrap().with_delta(0.0);
    let asym_change = PolicyChange::new([0.0, 10.0], [5.0, 20.0], 0.0).unwrap();
    let g = path_independence_gap(&asym, &asym_change, 100.0, &settings).map_err(|e| e.to_string())?;
    ensure(g.gap > 1e-3, || format!("asymmetric gap only {:e}", g.gap))?;
    Ok(format!("symmetric gap {worst:.2e}, asymmetric gap {:.4}", g.gap))
}

fn structural_oracle(ctx: &mut Ctx) -> Outcome {
    let f = simulate_and_fit(&loglog_config(4, 2000));
    for (fit, truth) in f.markets.iter().zip(&f.pop.markets) {
        let z1 = (fit.theta1 - truth.theta1) / fit.se_theta1;
        let z2 = (fit.theta2 - truth.theta2) / fit.se_theta2;
        ensure(z1.abs() < 3.0 && z2.abs() < 3.0, || format!("{}: z = ({z1:.2}, {z2:.2})", fit.market_id))?;
    }
    let change = PolicyChange::new([-20.0, 60.0], [-60.0, 80.0], 0.0).unwrap();
    let (sa, sb) = (PriceSchedule::log_linear(-20.0, 60.0), PriceSchedule::log_linear(-60.0, 80.0));
    let incomes: Vec<f64> = f.pop.households.iter().map(|h| h.income).collect();
    let phi = Normal::standard();
    let mut worst = 0.0f64;
    for tau in [0.25, 0.5, 0.75] {
        let fit = fit_quantile_demand(&f.rows, &f.markets, tau, DemandBasis::RatioAugmented).map_err(|e| e.to_string())?;
        ctx.record("structural", &fit, &f.rows, &f.markets);
        let eta = (0.5 * phi.inverse_cdf(tau)).exp();
        for p in [25.0, 50.0, 75.0] {
            let y = income_percentile(&incomes, p);
            let got = cv_path_ode(&fit.surface(0.0), &change, y, &ThetaPath::StraightLine, &OdeSettings::default())
                .map_err(|e| e.to_string())?
                .cv;
            let want = oracle_cv(&UtilitySpec::LogLog, &sa, &sb, y, eta).map_err(|e| e.to_string())?;
            let tol = (0.05 * want.abs()).max(1.0);
            ensure((got - want).abs() <= tol, || format!("tau {tau} y {y:.1}: {got:.3} vs {want:.3}"))?;
            worst = worst.max((got - want).abs() / tol);
        }
    }
    Ok(format!("{} rows, worst CV error {:.2} of tolerance", f.rows.len(), worst))
}

fn direct_oracle(ctx: &mut Ctx) -> Outcome {
    let f = simulate_and_fit(&direct_config(11, 600, None));
    ensure(f.rows.len() >= 5000, || format!("only {} rows", f.rows.len()))?;
    let change = paper_change();
    let (mut e_coef, mut e_cv) = (0.0f64, 0.0f64);
    for tau in [0.25, 0.5, 0.75] {
        let fit = fit_quantile_demand(&f.rows, &f.markets, tau, DemandBasis::Linear).map_err(|e| e.to_string())?;
        ctx.record("direct", &fit, &f.rows, &f.markets);
        let (d1, d3) = (rel(fit.r1(), 0.0005), rel(fit.r3(), -0.003));
        ensure(d1 < 0.02 && d3 < 0.02, || format!("tau {tau}: r1 {} r3 {}", fit.r1(), fit.r3()))?;
        e_coef = e_coef.max(d1).max(d3);
        let truth = QuantileDemandModel::constrained(tau, 5.6 + 0.02 * tau, 0.0005, -0.003, 0.0).unwrap();
        let model = fit.model().map_err(|e| e.to_string())?;
        for y in [280.0, 380.0, 490.0] {
            let got = cv_closed_form(&model, &change, y).map_err(|e| e.to_string())?.cv;
            let want = cv_closed_form(&truth, &change, y).map_err(|e| e.to_string())?.cv;
            ensure(rel(got, want) < 0.02, || format!("tau {tau} y {y}: {got} vs {want}"))?;
            e_cv = e_cv.max(rel(got, want));
        }
    }
    for tau in [0.1, 0.2, 0.3, 0.4, 0.6, 0.7, 0.8, 0.9] {
        let fit = fit_quantile_demand(&f.rows, &f.markets, tau, DemandBasis::Linear).map_err(|e| e.to_string())?;
        ctx.record("direct", &fit, &f.rows, &f.markets);
    }
    Ok(format!(
        "n = {}, worst coefficient error {:.2}%, worst CV error {:.2}%",
        f.rows.len(),
        100.0 * e_coef,
        100.0 * e_cv
    ))
}

fn assumption_suite(_: &mut Ctx) -> Outcome {
    let schedule = PriceSchedule::log_linear(-28.164, 18.297);
    let u = UtilitySpec::LogLog;
    let ys: Vec<f64> = (0..50).map(|i| 150.0 + 15.0 * i as f64).collect();
    let etas: Vec<f64> = (0..50).map(|i| 0.2 + 0.06 * i as f64).collect();
    let report = check_assumptions(&u, &schedule, &ys, &etas);
    ensure(report.points == 2500 && report.violations.is_empty(), || format!("{:?}", report.violations))?;
    ensure(report.min_convexity_margin > 0.0 && report.min_demand_slope_eta > 0.0, || format!("{report:?}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut roy = 0.0f64;
    for _ in 0..100 {
        let (y, eta) = (rng.random_range(150.0..900.0), rng.random_range(0.2..3.0));
        for j in 1..=2 {
            roy = roy.max(roy_residual(&u, &schedule, y, eta, j).map_err(|e| e.to_string())?);
        }
    }
    ensure(roy <= 1e-5, || format!("Roy residual {roy:e}"))?;
    Ok(format!(
        "min margin {:.3e}, min dS/deta {:.3e}, max Roy residual {roy:.2e}",
        report.min_convexity_margin, report.min_demand_slope_eta
    ))
}

fn symmetry_detection(ctx: &mut Ctx) -> Outcome {
    let sym = simulate_and_fit(&direct_config(13, 556, None));
    let fit = fit_quantile_demand(&sym.rows, &sym.markets, 0.5, DemandBasis::Unconstrained).map_err(|e| e.to_string())?;
    ctx.record("symmetric", &fit, &sym.rows, &sym.markets);
    let t = test_symmetry_restriction(&fit, None);
    ensure((fit.r1() + fit.r2()).abs() <= 0.02 * fit.r1().abs() + 1e-6 && t.passed, || format!("{t:?}"))?;
    let asym = simulate_and_fit(&direct_config(13, 556, Some(-0.5 * 0.0005)));
    let fit2 = fit_quantile_demand(&asym.rows, &asym.markets, 0.5, DemandBasis::Unconstrained).map_err(|e| e.to_string())?;
    ctx.record("asymmetric", &fit2, &asym.rows, &asym.markets);
    let t2 = test_symmetry_restriction(&fit2, None);
    ensure(!t2.passed, || format!("violation missed: {t2:?}"))?;
    Ok(format!(
        "|r1 + r2| = {:.2e} (tol {:.2e}); violated data {:.2e} (tol {:.2e})",
        t.statistic.abs(),
        t.tolerance,
        t2.statistic.abs(),
        t2.tolerance
    ))
}

fn solver_optimality(ctx: &mut Ctx) -> Outcome {
    let converged: Vec<&SandwichCase> = ctx.sandwich.iter().filter(|c| c.converged).collect();
    ensure(!converged.is_empty(), || "no converged fits recorded".into())?;
    if let Some(bad) = converged.iter().find(|c| !c.holds) {
        return Err(format!("{}: {}", bad.label, bad.detail));
    }
    Ok(format!("{} of {} fits converged, all inside the sandwich", converged.len(), ctx.sandwich.len()))
}

fn multi_attribute(_: &mut Ctx) -> Outcome {
    let u = UtilitySpec::MultiAttribute { beta: 1.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let settings = OdeSettings {
        steps: 2000,
        tolerance: 1e-9,
    };
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let delta = rng.random_range(0.5..3.0);
        let a = [rng.random_range(-60.0..20.0), rng.random_range(30.0..90.0)];
        let b = [rng.random_range(-60.0..20.0), rng.random_range(30.0..90.0)];
        let y = rng.random_range(300.0..700.0);
        let eta = rng.random_range(0.6..2.0);
        let sched = PriceSchedule::additive(a[0], a[1], delta);
        let demand = StructuralDemand::new(u.clone(), sched.clone(), eta);
        let change = PolicyChange::new(a, b, 0.0).unwrap();
        let got = cv_path_ode_with_schedule(&demand, &sched, &change, y, &ThetaPath::StraightLine, &settings)
            .map_err(|e| e.to_string())?
            .cv;
        let want = oracle_cv_bisect(&u, &sched, &sched.with_theta(b), y, eta).map_err(|e| e.to_string())?;
        ensure((got - want).abs() <= 1e-6, || format!("y {y:.1} eta {eta:.3}: {got} vs {want}"))?;
        worst = worst.max((got - want).abs());
    }
    Ok(format!("20 points, max |ode - bisection| = {worst:.2e}"))
}

fn small_run_config() -> RunConfig {
    serde_json::from_value(json!({
        "schema_version": 1,
        "seed": 17,
        "simulate": {
            "markets": {"sampled": {"count": 4, "theta1": [-100, 50], "theta2": [10, 40], "delta": [0.5, 2.0]}},
            "households_per_market": 300,
            "income": {"log_normal": {"mu": 5.94, "sigma": 0.35}},
            "mode": {"direct_demand": {"c0": 5.3, "c1": 0.6, "r1": 0.0005, "r3": -0.003, "r4": 0.01}},
            "n_attributes": 2
        },
        "estimate": {"taus": [0.25, 0.5, 0.75]},
        "welfare": {"from_market": "m01", "to_market": "m02"}
    }))
    .unwrap()
}

fn determinism_and_plots(_: &mut Ctx) -> Outcome {
    let cfg = LoadedConfig::from_config(small_run_config()).map_err(|e| e.to_string())?;
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = execute(Command::Run, &cfg, a.path()).map_err(|e| e.to_string())?;
    let rb = execute(Command::Run, &cfg, b.path()).map_err(|e| e.to_string())?;
    ensure(ra.manifest.outputs == rb.manifest.outputs, || "output hashes differ between runs".into())?;
    ensure(ra.manifest.outputs.len() >= 4, || format!("only {:?}", ra.manifest.outputs.keys()))?;

    let mut paper = RunConfig::minimal(0);
    paper.plot.paper_constants = true;
    let paper = LoadedConfig::from_config(paper).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().unwrap();
    execute(Command::ReplicatePaper, &paper, dir.path()).map_err(|e| e.to_string())?;
    execute(Command::Plot, &paper, dir.path()).map_err(|e| e.to_string())?;
    let mut ln_s = None;
    for name in ["frontier.svg", "cv_by_tau.svg"] {
        let text = fs::read_to_string(dir.path().join(name)).map_err(|e| e.to_string())?;
        let doc = roxmltree::Document::parse(&text).map_err(|e| format!("{name}: {e}"))?;
        ensure(doc.root_element().tag_name().name() == "svg", || format!("{name}: root is not svg"))?;
        if let Some(node) = doc.descendants().find(|n| n.attribute("id") == Some("crossing")) {
            ln_s = node.attribute("data-ln-s").and_then(|v| v.parse::<f64>().ok());
        }
    }
    let ln_s = ln_s.ok_or("no crossing marker in frontier.svg")?;
    ensure((ln_s - 4.438).abs() <= 1e-3, || format!("crossing at ln s = {ln_s}"))?;
    Ok(format!(
        "{} outputs identical across runs, SVGs parse, crossing at ln s = {ln_s:.4}",
        ra.manifest.outputs.len()
    ))
}

type Criterion = (u8, &'static str, Option<u64>, fn(&mut Ctx) -> Outcome);

const CRITERIA: [Criterion; 10] = [
    (1, "published CV table", Some(1), table_replication),
    (2, "closed form equals path ODE", Some(10), closed_form_vs_ode),
    (3, "path independence iff symmetry", Some(5), path_independence),
    (4, "structural oracle end to end", Some(60), structural_oracle),
    (5, "direct-demand oracle end to end", Some(30), direct_oracle),
    (6, "regularity conditions", Some(5), assumption_suite),
    (7, "symmetry restriction detection", Some(10), symmetry_detection),
    (9, "multi-attribute path ODE", Some(5), multi_attribute),
    (8, "quantile solver optimality", None, solver_optimality),
    (10, "determinism and plots", None, determinism_and_plots),
];

fn main() {
    let mut ctx = Ctx::default();
    let mut failed = 0;
    let mut lines = Vec::new();
    for (id, name, limit, run) in CRITERIA {
        let start = Instant::now();
        let result = run(&mut ctx);
        let took = start.elapsed();
        let result = match (result, limit) {
            (Ok(d), Some(s)) if took > Duration::from_secs(s) => Err(format!("{d}; over the {s} s budget")),
            (r, _) => r,
        };
        let budget = limit.map_or(String::new(), |s| format!(" < {s} s"));
        let line = match &result {
            Ok(d) => format!("PASS  {id:>2} {name}: {d} [{:.2} s{budget}]", took.as_secs_f64()),
            Err(d) => {
                failed += 1;
                format!("FAIL  {id:>2} {name}: {d} [{:.2} s{budget}]", took.as_secs_f64())
            }
        };
        lines.push((id, line));
    }
    lines.sort_by_key(|(id, _)| *id);
    for (_, line) in &lines {
        println!("{line}");
    }
    println!("acceptance: {} passed, {failed} failed", lines.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
