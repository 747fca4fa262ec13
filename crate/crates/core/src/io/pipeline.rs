use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use super::check::run_invariant_suite;
use super::config::{LoadedConfig, RunConfig, WelfareConfig, WelfareMethod};
use super::csvio::{
    load_households, read_cv_table, read_demand_fits, read_markets, write_cv_table, write_demand_fits,
    write_households, write_markets, write_series, CvRow,
};
use super::manifest::{file_key, sha256_file, RunManifest};
use super::plot::{cv_chart, frontier_chart};
use super::{IoError, PipelineError};
use crate::estimation::{
    fit_all_markets, fit_ivqr_grid, fit_quantile_demand, prepare_sample, quantile_crossings, DemandBasis, HedonicFit,
    QuantileFit,
};
use crate::hedonic::PolicyChange;
use crate::oracle::generate_population_with;
use crate::paper::PaperConstants;
use crate::par::Execution;
use crate::welfare::{calibrate_to_paper, cv_closed_form, cv_path_ode, Calibration, CvMethod, CvResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Estimate,
    Welfare,
    /// Estimation and welfare in one go, simulating first when the config
    /// has a `simulate` block and names no households file.
    Run,
    Check,
    ReplicatePaper,
    Plot,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Estimate => "estimate",
            Command::Welfare => "welfare",
            Command::Run => "run",
            Command::Check => "check",
            Command::ReplicatePaper => "replicate-paper",
            Command::Plot => "plot",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub manifest: RunManifest,
    /// Human-readable summary for the terminal.
    pub report: String,
}

struct Ctx<'a> {
    config: &'a RunConfig,
    out: PathBuf,
    written: Vec<PathBuf>,
    manifest: RunManifest,
    report: String,
    exec: Execution,
}

impl Ctx<'_> {
    fn output(&mut self, name: &str) -> PathBuf {
        let p = self.out.join(name);
        self.written.push(p.clone());
        p
    }

    fn input(&mut self, explicit: Option<&PathBuf>, default_name: &str) -> Result<PathBuf, IoError> {
        let p = explicit.cloned().unwrap_or_else(|| self.out.join(default_name));
        if !p.is_file() {
            return Err(IoError::MissingArtifact(p));
        }
        self.manifest.record_input(&p)?;
        Ok(p)
    }

    fn write_text(&mut self, name: &str, text: &str) -> Result<(), IoError> {
        let p = self.output(name);
        fs::write(&p, text).map_err(|source| IoError::Io { path: p, source })
    }
}

/// Runs one command, writing into `out`. On failure every file the command
/// wrote is removed.
pub fn execute(command: Command, config: &LoadedConfig, out: &Path) -> Result<Outcome, PipelineError> {
    let start = Instant::now();
    fs::create_dir_all(out).map_err(|source| IoError::Io {
        path: out.to_path_buf(),
        source,
    })?;
    let mut ctx = Ctx {
        config: &config.config,
        out: out.to_path_buf(),
        written: Vec::new(),
        manifest: RunManifest::new(command.name(), &config.hash, config.config.seed),
        report: String::new(),
        exec: Execution::default(),
    };
    if let Some(src) = &config.source {
        ctx.manifest.record_input(src)?;
    }
    let result = dispatch(command, &mut ctx).and_then(|()| finish(&mut ctx, start));
    match result {
        Ok(()) => Ok(Outcome {
            manifest: ctx.manifest,
            report: ctx.report,
        }),
        Err(e) => {
            for p in &ctx.written {
                let _ = fs::remove_file(p);
            }
            Err(e)
        }
    }
}

fn dispatch(command: Command, ctx: &mut Ctx) -> Result<(), PipelineError> {
    match command {
        Command::Simulate => simulate(ctx),
        Command::Estimate => estimate(ctx).map(|_| ()),
        Command::Welfare => welfare(ctx, None),
        Command::Run => {
            let needs_sim = ctx.config.estimate.as_ref().is_none_or(|e| e.households.is_none());
            if ctx.config.simulate.is_some() && needs_sim {
                simulate(ctx)?;
            }
            let est = estimate(ctx)?;
            welfare(ctx, Some(est))
        }
        Command::Check => check(ctx),
        Command::ReplicatePaper => replicate(ctx),
        Command::Plot => plot(ctx),
    }
}

fn finish(ctx: &mut Ctx, start: Instant) -> Result<(), PipelineError> {
    for p in ctx.written.clone() {
        ctx.manifest.outputs.insert(file_key(&p), sha256_file(&p)?);
    }
    ctx.manifest.wall_clock_seconds = start.elapsed().as_secs_f64();
    let text = serde_json::to_string_pretty(&ctx.manifest).expect("manifest serialises") + "\n";
    ctx.write_text("manifest.json", &text)?;
    Ok(())
}

fn simulate(ctx: &mut Ctx) -> Result<(), PipelineError> {
    let sim = ctx
        .config
        .simulate
        .as_ref()
        .ok_or_else(|| PipelineError::Validation("config has no simulate block".into()))?;
    let pop = generate_population_with(sim, ctx.exec)?;
    let kept = pop.households.len();
    ctx.manifest.stage("simulate", kept + pop.dropped, kept);
    if pop.dropped > 0 {
        ctx.manifest
            .warnings
            .push(format!("simulate: {} draws left no positive consumption and were dropped", pop.dropped));
    }
    let path = ctx.output("households.csv");
    write_households(&path, &pop.households)?;
    let _ = writeln!(ctx.report, "simulated {kept} households in {} markets", pop.markets.len());
    Ok(())
}

struct Estimates {
    markets: Vec<HedonicFit>,
    fits: Vec<QuantileFit>,
}

fn estimate(ctx: &mut Ctx) -> Result<Estimates, PipelineError> {
    let cfg = ctx.config.estimate.clone().unwrap_or_default();
    let path = ctx.input(cfg.households.as_ref(), "households.csv")?;
    let loaded = load_households(&path)?;
    ctx.manifest.stage("load_households", loaded.loaded, loaded.households.len());
    for issue in loaded.rejected.iter().chain(&loaded.dropped_rent) {
        ctx.manifest
            .warnings
            .push(format!("households.csv line {}: {} ({})", issue.line, issue.reason, issue.household_id));
    }
    let sample = prepare_sample(&loaded.households)?;
    if let Some(pca) = &sample.pca {
        ctx.manifest.warnings.extend(pca.warnings.iter().map(|w| format!("pca: {w}")));
    }
    let n = sample.rows.len();
    let markets = fit_all_markets(&sample.rows, sample.has_score(), ctx.exec)?;
    ctx.manifest.stage("hedonic", n, markets.iter().map(|m| m.n).sum());
    let taus = cfg.tau_grid();
    let mut fits = Vec::with_capacity(taus.len());
    for &tau in &taus {
        let fit = if cfg.ivqr {
            let iv = fit_ivqr_grid(&sample.rows, &markets, tau, &cfg.grid, ctx.exec)?;
            ctx.manifest
                .warnings
                .push(format!("ivqr tau={tau}: first-stage F = {:.4}", iv.first_stage_f));
            iv.fit
        } else {
            fit_quantile_demand(&sample.rows, &markets, tau, cfg.basis)?
        };
        if !fit.converged {
            ctx.manifest
                .warnings
                .push(format!("quantile tau={tau}: iteration limit reached; optimality check passed"));
        }
        ctx.manifest.stage(format!("quantile tau={tau}"), n, fit.n);
        fits.push(fit);
    }
    ctx.manifest
        .warnings
        .extend(quantile_crossings(&fits, &sample.rows, &markets));
    let p = ctx.output("markets.csv");
    write_markets(&p, &markets)?;
    let p = ctx.output("demand_fits.csv");
    write_demand_fits(&p, &fits)?;
    let _ = writeln!(
        ctx.report,
        "estimated {} markets and {} quantile fits from {n} households",
        markets.len(),
        fits.len()
    );
    Ok(Estimates { markets, fits })
}

/// Linear-interpolation percentile (`p` in `[0, 100]`) of unsorted data.
pub fn income_percentile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let h = (v.len() - 1) as f64 * p / 100.0;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

fn resolve_change(ctx: &mut Ctx, w: &WelfareConfig, markets: Option<&[HedonicFit]>) -> Result<PolicyChange, PipelineError> {
    if let Some(c) = w.change {
        return Ok(c);
    }
    let (from, to) = (w.from_market.as_deref().unwrap_or(""), w.to_market.as_deref().unwrap_or(""));
    let owned;
    let markets = match markets {
        Some(m) => m,
        None => {
            let p = ctx.input(w.markets.as_ref(), "markets.csv")?;
            owned = read_markets(&p)?;
            &owned
        }
    };
    let find = |id: &str| {
        markets
            .iter()
            .find(|m| m.market_id == id)
            .ok_or_else(|| PipelineError::Validation(format!("market {id} not found in markets.csv")))
    };
    let (a, b) = (find(from)?, find(to)?);
    Ok(PolicyChange::new([a.theta1, a.theta2], [b.theta1, b.theta2], 0.0)?)
}

fn welfare(ctx: &mut Ctx, estimates: Option<Estimates>) -> Result<(), PipelineError> {
    let w = ctx
        .config
        .welfare
        .clone()
        .ok_or_else(|| PipelineError::Validation("config has no welfare block".into()))?;
    let (fits, markets) = match estimates {
        Some(e) => (e.fits, Some(e.markets)),
        None => {
            let p = ctx.input(w.demand_fits.as_ref(), "demand_fits.csv")?;
            (read_demand_fits(&p)?, None)
        }
    };
    let change = resolve_change(ctx, &w, markets.as_deref())?;
    let y0s = match &w.y0 {
        Some(y) => y.clone(),
        None => {
            let p = ctx.input(w.households.as_ref(), "households.csv")?;
            let incomes: Vec<f64> = load_households(&p)?.households.iter().map(|h| h.income).collect();
            if incomes.is_empty() {
                return Err(PipelineError::Validation("no usable households for income percentiles".into()));
            }
            let ps = w.income_percentiles.clone().unwrap_or_else(|| vec![25.0, 50.0, 75.0]);
            ps.iter().map(|&p| income_percentile(&incomes, p)).collect()
        }
    };
    let cells: Vec<(usize, f64)> = (0..fits.len()).flat_map(|i| y0s.iter().map(move |&y| (i, y))).collect();
    let results = ctx.exec.try_map(&cells, |&(i, y)| cv_for(&fits[i], &change, y, &w))?;
    let rows: Vec<CvRow> = cells
        .iter()
        .zip(&results)
        .map(|(&(i, y), r)| CvRow {
            tau: fits[i].tau,
            y0: y,
            cv_gbp: r.cv,
            method: r.method.name().into(),
            error_estimate: r.error_estimate,
        })
        .collect();
    ctx.manifest.stage("welfare", cells.len(), rows.len());
    let p = ctx.output("cv_table.csv");
    write_cv_table(&p, &rows)?;
    let _ = writeln!(ctx.report, "tau      y0            cv_gbp        method");
    for r in &rows {
        let _ = writeln!(ctx.report, "{:<8} {:<13.4} {:<13.6} {}", r.tau, r.y0, r.cv_gbp, r.method);
    }
    Ok(())
}

fn cv_for(fit: &QuantileFit, change: &PolicyChange, y0: f64, w: &WelfareConfig) -> Result<CvResult, PipelineError> {
    let closed_ok = fit.basis == DemandBasis::Linear && fit.r1().abs() >= 1e-10;
    let method = match w.method {
        WelfareMethod::Auto if closed_ok => CvMethod::ClosedForm,
        WelfareMethod::Auto | WelfareMethod::PathOde => CvMethod::PathOde,
        WelfareMethod::ClosedForm => CvMethod::ClosedForm,
    };
    Ok(match method {
        CvMethod::ClosedForm => cv_closed_form(&fit.model()?, change, y0)?,
        CvMethod::PathOde => cv_path_ode(&fit.surface(change.delta0), change, y0, &w.path, &w.ode)?,
    })
}

fn check(ctx: &mut Ctx) -> Result<(), PipelineError> {
    let cfg = ctx.config.check.clone();
    let default_fits = ctx.out.join("demand_fits.csv");
    let fits_path = cfg
        .demand_fits
        .clone()
        .or_else(|| default_fits.is_file().then_some(default_fits));
    let fits = match fits_path {
        Some(p) => {
            let p = ctx.input(Some(&p), "")?;
            Some(read_demand_fits(&p)?)
        }
        None => None,
    };
    let report = run_invariant_suite(&cfg, ctx.config.seed, fits.as_deref());
    let text = serde_json::to_string_pretty(&report).expect("report serialises") + "\n";
    ctx.write_text("check_report.json", &text)?;
    for item in &report.items {
        let _ = writeln!(
            ctx.report,
            "{} {}: {}",
            if item.passed { "PASS" } else { "FAIL" },
            item.name,
            item.detail
        );
    }
    if !report.passed() {
        return Err(PipelineError::CheckFailed(report.failures().join(", ")));
    }
    Ok(())
}

fn load_constants(ctx: &mut Ctx) -> Result<PaperConstants, PipelineError> {
    match ctx.config.replicate.constants.clone() {
        Some(p) => {
            let p = ctx.input(Some(&p), "")?;
            let text = fs::read_to_string(&p).map_err(|source| IoError::Io { path: p, source })?;
            Ok(PaperConstants::from_json(&text)?)
        }
        None => Ok(PaperConstants::embedded()?),
    }
}

fn replication_text(cal: &Calibration, consts: &PaperConstants) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "Compensating variation, GBP per week, frontier {} -> {}",
        consts.policy.from_market, consts.policy.to_market
    );
    let _ = write!(s, "{:<6}", "tau");
    for y in &cal.y_columns {
        let _ = write!(s, "  {:>34}", format!("y0 = {y:.2}"));
    }
    s.push('\n');
    for (i, tau) in cal.table.taus.iter().enumerate() {
        let _ = write!(s, "{tau:<6}");
        for j in 0..cal.y_columns.len() {
            let cell = format!(
                "{:.4} (target {:.4}, {:+.4})",
                cal.table.values[i][j], cal.targets[i][j], cal.residuals[i][j]
            );
            let _ = write!(s, "  {cell:>34}");
        }
        s.push('\n');
    }
    let _ = writeln!(s, "max |residual|: {:.4}", cal.max_abs_residual);
    let _ = writeln!(s, "all cells positive: {}", cal.all_positive);
    let _ = writeln!(s, "rows increase in income: {}", cal.rows_increase_in_income);
    let _ = writeln!(s, "columns increase in tau: {}", cal.columns_increase_in_tau);
    let _ = writeln!(s, "decile table pattern: {}", cal.decile_pattern_holds);
    s
}

fn replicate(ctx: &mut Ctx) -> Result<(), PipelineError> {
    let consts = load_constants(ctx)?;
    let cal = calibrate_to_paper(&consts)?;
    let text = replication_text(&cal, &consts);
    ctx.report.push_str(&text);
    let tol = ctx.config.replicate.tolerance;
    if !cal.passes(tol) {
        return Err(PipelineError::Replication(format!(
            "tolerance {tol} GBP not met or a pattern check failed\n{text}"
        )));
    }
    let json = serde_json::to_string_pretty(&cal).expect("calibration serialises") + "\n";
    ctx.write_text("replication.json", &json)?;
    ctx.write_text("replication.txt", &text)?;
    let rows: Vec<CvRow> = cal
        .table
        .taus
        .iter()
        .enumerate()
        .flat_map(|(i, &tau)| {
            cal.y_columns.iter().enumerate().map(move |(j, &y0)| (i, j, tau, y0))
        })
        .map(|(i, j, tau, y0)| CvRow {
            tau,
            y0,
            cv_gbp: cal.table.values[i][j],
            method: CvMethod::ClosedForm.name().into(),
            error_estimate: 0.0,
        })
        .collect();
    let p = ctx.output("cv_table.csv");
    write_cv_table(&p, &rows)?;
    Ok(())
}

fn plot(ctx: &mut Ctx) -> Result<(), PipelineError> {
    let cfg = ctx.config.plot.clone();
    let (change, rows) = if cfg.paper_constants {
        let consts = load_constants(ctx)?;
        let cal = calibrate_to_paper(&consts)?;
        let mut rows = Vec::new();
        for (i, &tau) in cal.table.taus.iter().enumerate() {
            for (j, &y) in cal.y_columns.iter().enumerate() {
                rows.push((tau, y, cal.table.values[i][j]));
            }
        }
        (consts.policy_change()?, rows)
    } else {
        let w = ctx
            .config
            .welfare
            .clone()
            .ok_or_else(|| PipelineError::Validation("plotting a run needs its welfare block".into()))?;
        let change = resolve_change(ctx, &w, None)?;
        let p = ctx.input(cfg.cv_table.as_ref(), "cv_table.csv")?;
        let rows = read_cv_table(&p)?.iter().map(|r| (r.tau, r.y0, r.cv_gbp)).collect();
        (change, rows)
    };
    let frontier = frontier_chart(&change, cfg.score_range, cfg.points);
    ctx.write_text("frontier.svg", &frontier.to_svg())?;
    let series: Vec<Vec<f64>> = frontier.series[0]
        .points
        .iter()
        .zip(&frontier.series[1].points)
        .map(|(a, b)| vec![a.0, a.0.ln(), a.1, b.1])
        .collect();
    let p = ctx.output("frontier_series.csv");
    write_series(&p, &["school_score", "ln_s", "rent_a", "rent_b"], &series)?;
    ctx.write_text("cv_by_tau.svg", &cv_chart(&rows).to_svg())?;
    let p = ctx.output("cv_by_tau_series.csv");
    let cv_rows: Vec<Vec<f64>> = rows.iter().map(|&(t, y, c)| vec![t, y, c]).collect();
    write_series(&p, &["tau", "y0", "cv_gbp"], &cv_rows)?;
    if let Some(m) = frontier.markers.first() {
        let _ = writeln!(ctx.report, "frontiers cross at school score {:.4} (ln s = {:.6})", m.at.0, m.at.0.ln());
    }
    let _ = writeln!(ctx.report, "wrote frontier.svg and cv_by_tau.svg");
    Ok(())
}
