//! The run configuration: one JSON document with a block per command.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::IoError;
use crate::estimation::{DemandBasis, IvqrGrid};
use crate::hedonic::PolicyChange;
use crate::oracle::SimConfig;
use crate::welfare::{OdeSettings, ThetaPath};

pub const SCHEMA_VERSION: u32 = 1;
/// Environment variable that replaces the output directory.
pub const OUT_DIR_ENV: &str = "HEDONIC_WELFARE_OUT";

fn default_taus() -> Vec<f64> {
    vec![0.25, 0.5, 0.75]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    /// Defaults to `households.csv` in the output directory.
    #[serde(default)]
    pub households: Option<PathBuf>,
    #[serde(default = "default_taus")]
    pub taus: Vec<f64>,
    /// Adds τ = 0.2, 0.3, …, 0.8 to `taus`.
    #[serde(default)]
    pub deciles: bool,
    #[serde(default = "default_basis")]
    pub basis: DemandBasis,
    /// Grid-search IV quantile regression instead of plain quantile regression.
    #[serde(default)]
    pub ivqr: bool,
    #[serde(default)]
    pub grid: IvqrGrid,
}

fn default_basis() -> DemandBasis {
    DemandBasis::Linear
}

impl EstimateConfig {
    /// The τ grid actually fitted, sorted and without duplicates.
    pub fn tau_grid(&self) -> Vec<f64> {
        let mut taus = self.taus.clone();
        if self.deciles {
            taus.extend((2..=8).map(|k| k as f64 / 10.0));
        }
        taus.sort_by(f64::total_cmp);
        taus.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        taus
    }
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self {
            households: None,
            taus: default_taus(),
            deciles: false,
            basis: default_basis(),
            ivqr: false,
            grid: IvqrGrid::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WelfareMethod {
    /// Closed form for linear constrained fits with usable `r1`, path ODE otherwise.
    #[default]
    Auto,
    ClosedForm,
    PathOde,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WelfareConfig {
    /// Defaults to `demand_fits.csv` in the output directory.
    #[serde(default)]
    pub demand_fits: Option<PathBuf>,
    /// Needed for `from_market`/`to_market`; defaults to `markets.csv` in the
    /// output directory.
    #[serde(default)]
    pub markets: Option<PathBuf>,
    /// Needed for income percentiles; defaults to `households.csv` in the
    /// output directory.
    #[serde(default)]
    pub households: Option<PathBuf>,
    #[serde(default)]
    pub change: Option<PolicyChange>,
    #[serde(default)]
    pub from_market: Option<String>,
    #[serde(default)]
    pub to_market: Option<String>,
    /// Weekly incomes at which to evaluate the CV.
    #[serde(default)]
    pub y0: Option<Vec<f64>>,
    /// Percentiles of the household income distribution, used when `y0` is absent.
    #[serde(default)]
    pub income_percentiles: Option<Vec<f64>>,
    #[serde(default)]
    pub path: ThetaPath,
    #[serde(default)]
    pub method: WelfareMethod,
    #[serde(default)]
    pub ode: OdeSettings,
}

impl Default for WelfareConfig {
    fn default() -> Self {
        Self {
            demand_fits: None,
            markets: None,
            households: None,
            change: None,
            from_market: None,
            to_market: None,
            y0: None,
            income_percentiles: None,
            path: ThetaPath::default(),
            method: WelfareMethod::default(),
            ode: OdeSettings::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckConfig {
    pub roy_tolerance: f64,
    pub path_gap_tolerance: f64,
    pub closed_form_cases: usize,
    pub replication_tolerance: f64,
    /// Also checks the optimality sandwich of this demand fits file when set.
    pub demand_fits: Option<PathBuf>,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            roy_tolerance: 1e-5,
            path_gap_tolerance: 1e-8,
            closed_form_cases: 200,
            replication_tolerance: 0.1,
            demand_fits: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReplicateConfig {
    /// Alternative constants file; the shipped copy is used otherwise.
    pub constants: Option<PathBuf>,
    pub tolerance: f64,
}

impl Default for ReplicateConfig {
    fn default() -> Self {
        Self {
            constants: None,
            tolerance: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlotConfig {
    /// Plot the shipped regional policy change and CV table.
    pub paper_constants: bool,
    /// Defaults to `cv_table.csv` in the output directory.
    pub cv_table: Option<PathBuf>,
    pub score_range: [f64; 2],
    pub points: usize,
}

impl Default for PlotConfig {
    fn default() -> Self {
        Self {
            paper_constants: false,
            cv_table: None,
            score_range: [50.0, 600.0],
            points: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Replaces any seed in the `simulate` block.
    pub seed: u64,
    #[serde(default)]
    pub simulate: Option<SimConfig>,
    #[serde(default)]
    pub estimate: Option<EstimateConfig>,
    #[serde(default)]
    pub welfare: Option<WelfareConfig>,
    #[serde(default)]
    pub check: CheckConfig,
    #[serde(default)]
    pub replicate: ReplicateConfig,
    #[serde(default)]
    pub plot: PlotConfig,
}

/// A parsed configuration with its paths made absolute.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedConfig {
    pub config: RunConfig,
    /// SHA-256 of the file contents.
    pub hash: String,
    pub source: Option<PathBuf>,
}

fn invalid(msg: impl Into<String>) -> IoError {
    IoError::Config(msg.into())
}

pub fn validate_taus(taus: &[f64]) -> Result<(), IoError> {
    if taus.is_empty() {
        return Err(invalid("at least one tau is required"));
    }
    if let Some(t) = taus.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
        return Err(invalid(format!("tau values must lie strictly between 0 and 1, got {t}")));
    }
    if taus.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("tau values must be strictly increasing"));
    }
    Ok(())
}

impl RunConfig {
    /// An empty configuration for commands that need none.
    pub fn minimal(seed: u64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed,
            simulate: None,
            estimate: None,
            welfare: None,
            check: CheckConfig::default(),
            replicate: ReplicateConfig::default(),
            plot: PlotConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), IoError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if let Some(sim) = &self.simulate {
            sim.validate().map_err(|e| invalid(format!("simulate: {e}")))?;
        }
        if let Some(est) = &self.estimate {
            validate_taus(&est.taus)?;
            if est.ivqr {
                est.grid.validate().map_err(|e| invalid(format!("estimate.grid: {e}")))?;
                if est.basis != DemandBasis::Linear {
                    return Err(invalid("IV quantile regression supports only the linear basis"));
                }
            }
        }
        if let Some(w) = &self.welfare {
            w.ode.validate().map_err(|e| invalid(format!("welfare.ode: {e}")))?;
            if let Some(c) = &w.change {
                c.validate().map_err(|e| invalid(format!("welfare.change: {e}")))?;
            }
            let by_market = w.from_market.is_some() || w.to_market.is_some();
            if w.change.is_some() == by_market {
                return Err(invalid("welfare needs either `change` or both `from_market` and `to_market`"));
            }
            if by_market && (w.from_market.is_none() || w.to_market.is_none()) {
                return Err(invalid("welfare needs both `from_market` and `to_market`"));
            }
            if let Some(y0) = &w.y0 {
                if y0.is_empty() || y0.iter().any(|y| !(*y > 0.0 && y.is_finite())) {
                    return Err(invalid("welfare.y0 must list positive incomes"));
                }
            }
            if let Some(p) = &w.income_percentiles {
                if p.is_empty() || p.iter().any(|p| !(*p >= 0.0 && *p <= 100.0)) {
                    return Err(invalid("welfare.income_percentiles must lie in [0, 100]"));
                }
            }
        }
        let c = &self.check;
        if !(c.roy_tolerance > 0.0 && c.path_gap_tolerance > 0.0 && c.replication_tolerance > 0.0) {
            return Err(invalid("check tolerances must be positive"));
        }
        let [lo, hi] = self.plot.score_range;
        if !(lo > 0.0 && hi > lo) || self.plot.points < 2 {
            return Err(invalid("plot.score_range must be positive and increasing, with at least 2 points"));
        }
        Ok(())
    }

    fn input_paths_mut(&mut self) -> Vec<&mut PathBuf> {
        let mut out = Vec::new();
        if let Some(e) = &mut self.estimate {
            out.extend(e.households.as_mut());
        }
        if let Some(w) = &mut self.welfare {
            out.extend(w.demand_fits.as_mut());
            out.extend(w.markets.as_mut());
            out.extend(w.households.as_mut());
        }
        out.extend(self.check.demand_fits.as_mut());
        out.extend(self.replicate.constants.as_mut());
        out.extend(self.plot.cv_table.as_mut());
        out
    }
}

impl LoadedConfig {
    /// Parses, resolves paths against the file's directory, checks that
    /// every referenced file exists and validates the contents.
    pub fn load(path: &Path) -> Result<Self, IoError> {
        let bytes = std::fs::read(path).map_err(|source| IoError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config: RunConfig = serde_json::from_slice(&bytes).map_err(|source| IoError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in config.input_paths_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
            if !p.is_file() {
                return Err(IoError::MissingArtifact(p.clone()));
            }
        }
        Self::finish(config, hex::encode(Sha256::digest(&bytes)), Some(path.to_path_buf()))
    }

    /// Wraps an in-memory configuration; relative paths stay as given.
    pub fn from_config(config: RunConfig) -> Result<Self, IoError> {
        let text = serde_json::to_vec(&config).expect("configs serialise");
        Self::finish(config, hex::encode(Sha256::digest(&text)), None)
    }

    fn finish(mut config: RunConfig, hash: String, source: Option<PathBuf>) -> Result<Self, IoError> {
        if let Some(sim) = &mut config.simulate {
            sim.seed = config.seed;
        }
        config.validate()?;
        Ok(Self { config, hash, source })
    }
}

/// The environment override when set, otherwise `cli`.
pub fn resolve_out_dir(cli: Option<&Path>) -> Option<PathBuf> {
    match std::env::var_os(OUT_DIR_ENV) {
        Some(v) if !v.is_empty() => Some(PathBuf::from(v)),
        _ => cli.map(Path::to_path_buf),
    }
}
