//! File formats, run configuration, manifests, figures and the command
//! implementations behind the CLI.

mod check;
mod config;
mod csvio;
mod format;
mod manifest;
mod pipeline;
mod plot;

use std::path::PathBuf;

use thiserror::Error;

use crate::estimation::EstimationError;
use crate::hedonic::HedonicError;
use crate::oracle::OracleError;
use crate::paper::ConstantsError;
use crate::welfare::WelfareError;

pub use check::{run_invariant_suite, CheckItem, CheckReport};
pub use config::{
    resolve_out_dir, validate_taus, CheckConfig, EstimateConfig, LoadedConfig, PlotConfig, ReplicateConfig,
    RunConfig, WelfareConfig, WelfareMethod, OUT_DIR_ENV, SCHEMA_VERSION,
};
pub use csvio::{
    load_households, read_cv_table, read_demand_fits, read_markets, write_cv_table, write_demand_fits,
    write_households, write_markets, write_series, CvRow, LoadedHouseholds, RowIssue, CV_HEADER, DEMAND_HEADER,
    MARKETS_HEADER,
};
pub use format::fmt_num;
pub use manifest::{sha256_file, RunManifest, StageCount};
pub use pipeline::{execute, income_percentile, Command, Outcome};
pub use plot::{cv_chart, frontier_chart, frontier_crossing, Chart, Marker, Series};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: schema error: {message}", path.display())]
    Schema { path: PathBuf, message: String },
    #[error("{}:{line}: parse error: {message}", path.display())]
    Parse { path: PathBuf, line: u64, message: String },
    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{}: invalid JSON: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("missing artifact: {}", .0.display())]
    MissingArtifact(PathBuf),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("invalid input: {0}")]
    Validation(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Welfare(#[from] WelfareError),
    #[error(transparent)]
    Hedonic(#[from] HedonicError),
    #[error("invariant checks failed: {0}")]
    CheckFailed(String),
    #[error(transparent)]
    Constants(#[from] ConstantsError),
    #[error("replication failed: {0}")]
    Replication(String),
}

impl PipelineError {
    /// 2 for bad input, 3 for numeric failures, 4 for replication failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Io(_) | PipelineError::Validation(_) => 2,
            PipelineError::Oracle(OracleError::InvalidParameter(_))
            | PipelineError::Estimation(EstimationError::InvalidInput(_))
            | PipelineError::Welfare(WelfareError::InvalidInput(_))
            | PipelineError::Hedonic(HedonicError::InvalidParameter(_)) => 2,
            PipelineError::Oracle(_)
            | PipelineError::Estimation(_)
            | PipelineError::Welfare(_)
            | PipelineError::Hedonic(_)
            | PipelineError::CheckFailed(_) => 3,
            PipelineError::Constants(_) | PipelineError::Replication(_) => 4,
        }
    }
}
