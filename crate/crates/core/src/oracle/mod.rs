//! Simulated consumers with known utilities: closed-form and numeric
//! demand, indirect utility and compensating variation, plus a synthetic
//! household generator.

mod assumptions;
mod sim;
mod utility;

use thiserror::Error;

use crate::hedonic::HedonicError;

pub use assumptions::{check_assumptions, roy_residual, AssumptionReport};
pub use sim::{
    generate_population, generate_population_with, market_stream, sampled_markets, DirectDemandParams, IncomeSpec,
    LogNormal, MarketParams, MarketSpec, Population, SavingsSpec, SimConfig, SimMode,
};
pub use utility::{
    indirect_utility, oracle_cv, oracle_cv_bisect, solve_consumer, ConsumerChoice, GeneralUtility,
    StructuralDemand, UtilityKind, UtilityPartials, UtilitySpec,
};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("budget set is empty at income {y}")]
    InfeasibleBudget { y: f64 },
    #[error("no interior optimum: {0}")]
    NoInteriorOptimum(String),
    #[error("could not bracket the compensating variation within [{lo}, {hi}]")]
    BracketFailure { lo: f64, hi: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Hedonic(#[from] HedonicError),
}

/// A single simulated consumer.
#[derive(Clone, Debug, PartialEq)]
pub struct Consumer {
    pub y: f64,
    pub eta: f64,
    pub market_id: String,
}

impl Consumer {
    pub fn new(y: f64, eta: f64, market_id: impl Into<String>) -> Result<Self, OracleError> {
        if !(y > 0.0 && eta > 0.0) {
            return Err(OracleError::InvalidParameter(format!(
                "consumer needs positive income and eta, got y={y} eta={eta}"
            )));
        }
        Ok(Self {
            y,
            eta,
            market_id: market_id.into(),
        })
    }
}
