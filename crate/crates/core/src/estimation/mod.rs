//! Covariate reduction, per-market hedonic regressions and pooled quantile
//! demand fits, including the grid-search instrumental-variable variant.

mod ivqr;
mod ols;
mod pca;
mod quantile;

use thiserror::Error;

use crate::data::Household;

pub use ivqr::{first_stage_f, fit_ivqr_grid, IvqrFit, IvqrGrid};
pub use ols::{fit_all_markets, fit_market_hedonic, ols, HedonicFit, OlsFit};
pub use pca::{pca_first_component, PcaModel};
pub use quantile::{
    check_loss, fit_quantile_demand, quantile_crossings, quantile_regression, test_symmetry_restriction,
    DemandBasis, FittedDemand, QrOptions, QrSolution, QuantileFit, SymmetryTest,
};

#[derive(Debug, Error)]
pub enum EstimationError {
    #[error("singular input: {0}")]
    SingularInput(String),
    #[error("did not converge: {0}")]
    ConvergenceFailure(String),
    #[error("design matrix has rank {rank} < {cols}")]
    RankDeficient { rank: usize, cols: usize },
    #[error("degenerate design: {0}")]
    DegenerateDesign(String),
    #[error("selected r1 = {r1} lies on the grid boundary [{lo}, {hi}]")]
    GridExhausted { r1: f64, lo: f64, hi: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// One household reduced to what the estimators use.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleRow {
    pub market_id: String,
    pub income: f64,
    pub ln_s: f64,
    pub rent: f64,
    /// First principal component of the attribute columns (0 without attributes).
    pub score: f64,
    pub savings: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct Sample {
    pub rows: Vec<SampleRow>,
    pub pca: Option<PcaModel>,
}

impl Sample {
    /// Whether the hedonic regressions include the attribute index.
    pub fn has_score(&self) -> bool {
        self.pca.is_some()
    }
}

/// Step 1: collapses the attribute columns to their first principal
/// component, pooled over all markets.
pub fn prepare_sample(households: &[Household]) -> Result<Sample, EstimationError> {
    if households.is_empty() {
        return Err(EstimationError::InvalidInput("no households".into()));
    }
    let k = households[0].attributes.len();
    if households.iter().any(|h| h.attributes.len() != k) {
        return Err(EstimationError::InvalidInput("households disagree on attribute count".into()));
    }
    let (pca, scores) = if k == 0 {
        (None, vec![0.0; households.len()])
    } else {
        let m = nalgebra::DMatrix::from_fn(households.len(), k, |i, j| households[i].attributes[j]);
        let (model, scores) = pca_first_component(&m)?;
        (Some(model), scores)
    };
    let rows = households
        .iter()
        .zip(scores)
        .map(|(h, score)| SampleRow {
            market_id: h.market_id.clone(),
            income: h.income,
            ln_s: h.ln_s(),
            rent: h.rent,
            score,
            savings: h.savings,
        })
        .collect();
    Ok(Sample { rows, pca })
}
