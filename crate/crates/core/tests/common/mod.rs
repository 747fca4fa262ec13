#![allow(dead_code)]

use hedonic_welfare::estimation::{fit_all_markets, prepare_sample, HedonicFit, SampleRow};
use hedonic_welfare::oracle::{generate_population, Population, SimConfig};
use hedonic_welfare::par::Execution;
use serde_json::json;

/// Direct-demand simulation with low τ heterogeneity, so that n = 5000 pins
/// the slope coefficients down to well under 2%.
pub fn direct_config(seed: u64, per_market: usize, r2: Option<f64>) -> SimConfig {
    serde_json::from_value(json!({
        "seed": seed,
        "markets": {"sampled": {"count": 9, "theta1": [-100, 50], "theta2": [10, 60]}},
        "households_per_market": per_market,
        "income": {"log_normal": {"mu": 5.94, "sigma": 0.35}},
        "mode": {"direct_demand": {"c0": 5.6, "c1": 0.02, "r1": 0.0005, "r2": r2, "r3": -0.003}},
        "n_attributes": 0
    }))
    .unwrap()
}

pub fn loglog_config(seed: u64, per_market: usize) -> SimConfig {
    serde_json::from_value(json!({
        "seed": seed,
        "markets": {"sampled": {"count": 9, "theta1": [-100, 50], "theta2": [40, 120]}},
        "households_per_market": per_market,
        "income": {"log_normal": {"mu": 6.0, "sigma": 0.3}},
        "mode": {"structural": {"utility": {"kind": "log_log"}, "eta": {"mu": 0.0, "sigma": 0.5}}},
        "rent_noise_sd": 5.0,
        "n_attributes": 0
    }))
    .unwrap()
}

pub struct Fitted {
    pub pop: Population,
    pub rows: Vec<SampleRow>,
    pub markets: Vec<HedonicFit>,
}

/// Simulates and runs steps 1 and 2 in memory, keeping every simulated row.
pub fn simulate_and_fit(cfg: &SimConfig) -> Fitted {
    let pop = generate_population(cfg).unwrap();
    let sample = prepare_sample(&pop.households).unwrap();
    let markets = fit_all_markets(&sample.rows, sample.has_score(), Execution::default()).unwrap();
    Fitted {
        pop,
        rows: sample.rows,
        markets,
    }
}

pub fn rel(got: f64, want: f64) -> f64 {
    ((got - want) / want).abs()
}
