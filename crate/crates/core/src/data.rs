//! Household records shared by the simulator, the estimators and the CSV layer.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Household {
    pub household_id: String,
    pub market_id: String,
    /// Weekly income, GBP.
    pub income: f64,
    /// Weekly rent, GBP.
    pub rent: f64,
    pub school_score: f64,
    pub savings: Option<f64>,
    pub attributes: Vec<f64>,
    pub true_eta: Option<f64>,
    pub true_tau: Option<f64>,
}

impl Household {
    pub fn ln_s(&self) -> f64 {
        self.school_score.ln()
    }

    /// Residual income after rent.
    pub fn consumption(&self) -> f64 {
        self.income - self.rent
    }
}

/// Splits households by market, keeping first-appearance order of markets
/// and input order within each market.
pub fn group_by_market(rows: &[Household]) -> Vec<(String, Vec<&Household>)> {
    group_by_market_rows(rows, |h| h.market_id.as_str())
}

/// [`group_by_market`] for any row type.
pub fn group_by_market_rows<'a, T, F>(rows: &'a [T], key: F) -> Vec<(String, Vec<&'a T>)>
where
    F: Fn(&T) -> &str,
{
    let mut groups: Vec<(String, Vec<&T>)> = Vec::new();
    let mut index = std::collections::HashMap::new();
    for r in rows {
        let id = key(r);
        let slot = match index.get(id) {
            Some(&slot) => slot,
            None => {
                groups.push((id.to_string(), Vec::new()));
                index.insert(id.to_string(), groups.len() - 1);
                groups.len() - 1
            }
        };
        groups[slot].1.push(r);
    }
    groups
}
