//! Published regional hedonic fits, quantile demand coefficients and CV
//! tables for nine English regions, shipped with the crate and guarded by a
//! checksum.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::estimation::HedonicFit;
use crate::hedonic::{HedonicError, PolicyChange, QuantileDemandModel};

pub const EMBEDDED: &str = include_str!("../data/paper_constants.json");

#[derive(Debug, Error)]
pub enum ConstantsError {
    #[error("constants file is not valid JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("constants checksum mismatch: recorded {recorded}, computed {computed}")]
    Checksum { recorded: String, computed: String },
    #[error("constants are inconsistent: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemandRow {
    pub tau: f64,
    pub r0: f64,
    pub r1: f64,
    pub r3: f64,
    pub r4: f64,
    pub se_r0: f64,
    pub se_r1: f64,
    pub se_r3: f64,
    pub se_r4: f64,
    pub n: usize,
}

/// A CV table: one row per τ, one column per income percentile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvTargets {
    pub taus: Vec<f64>,
    pub income_percentiles: Vec<u32>,
    pub values: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyMarkets {
    pub from_market: String,
    pub to_market: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PaperConstants {
    pub markets: Vec<HedonicFit>,
    pub demand: Vec<DemandRow>,
    pub cv_quartiles: CvTargets,
    pub cv_deciles: CvTargets,
    pub first_stage_f: f64,
    pub mean_income: f64,
    pub policy: PolicyMarkets,
}

/// SHA-256 of the compact, key-sorted serialisation of `value`.
pub fn canonical_hash(value: &serde_json::Value) -> String {
    let text = serde_json::to_string(value).expect("JSON values always serialise");
    hex::encode(Sha256::digest(text.as_bytes()))
}

impl PaperConstants {
    /// Parses a constants document and verifies its checksum.
    pub fn from_json(text: &str) -> Result<Self, ConstantsError> {
        let doc: serde_json::Value = serde_json::from_str(text)?;
        let recorded = doc
            .get("checksum")
            .and_then(|c| c.as_str())
            .unwrap_or_default()
            .to_string();
        let data = doc
            .get("data")
            .ok_or_else(|| ConstantsError::Invalid("missing data block".into()))?;
        let computed = canonical_hash(data);
        if computed != recorded {
            return Err(ConstantsError::Checksum { recorded, computed });
        }
        let consts: PaperConstants = serde_json::from_value(data.clone())?;
        consts.validate()?;
        Ok(consts)
    }

    pub fn embedded() -> Result<Self, ConstantsError> {
        Self::from_json(EMBEDDED)
    }

    fn validate(&self) -> Result<(), ConstantsError> {
        for t in [&self.cv_quartiles, &self.cv_deciles] {
            if t.values.len() != t.taus.len() || t.values.iter().any(|r| r.len() != t.income_percentiles.len()) {
                return Err(ConstantsError::Invalid("CV table shape does not match its labels".into()));
            }
        }
        if self.demand.len() != self.cv_quartiles.taus.len() {
            return Err(ConstantsError::Invalid("one demand row per CV table row expected".into()));
        }
        self.market(&self.policy.from_market)?;
        self.market(&self.policy.to_market)?;
        Ok(())
    }

    pub fn market(&self, id: &str) -> Result<&HedonicFit, ConstantsError> {
        self.markets
            .iter()
            .find(|m| m.market_id == id)
            .ok_or_else(|| ConstantsError::Invalid(format!("unknown market {id}")))
    }

    /// Moving the frontier of the `from` region to that of the `to` region.
    pub fn policy_change(&self) -> Result<PolicyChange, HedonicError> {
        let a = self.market(&self.policy.from_market).expect("validated");
        let b = self.market(&self.policy.to_market).expect("validated");
        PolicyChange::new([a.theta1, a.theta2], [b.theta1, b.theta2], 0.0)
    }

    pub fn demand_models(&self) -> Result<Vec<QuantileDemandModel>, HedonicError> {
        self.demand
            .iter()
            .map(|d| QuantileDemandModel::constrained(d.tau, d.r0, d.r1, d.r3, d.r4))
            .collect()
    }
}
