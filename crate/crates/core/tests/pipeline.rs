use std::fs;
use std::path::Path;

use hedonic_welfare::hedonic::{PolicyChange, QuantileDemandModel};
use hedonic_welfare::io::{execute, read_cv_table, Command, LoadedConfig, RunConfig, RunManifest};
use hedonic_welfare::welfare::cv_closed_form;
use serde_json::json;

const CHANGE: ([f64; 2], [f64; 2]) = ([-28.164, 18.297], [-73.695, 28.556]);

fn direct_run(seed: u64) -> RunConfig {
    serde_json::from_value(json!({
        "schema_version": 1,
        "seed": seed,
        "simulate": {
            "markets": {"sampled": {"count": 9, "theta1": [-100, 50], "theta2": [10, 60]}},
            "households_per_market": 600,
            "income": {"log_normal": {"mu": 5.94, "sigma": 0.35}},
            "mode": {"direct_demand": {"c0": 5.6, "c1": 0.02, "r1": 0.0005, "r3": -0.003}},
            "n_attributes": 0
        },
        "estimate": {"taus": [0.5]},
        "welfare": {
            "change": {"a1": CHANGE.0[0], "a2": CHANGE.0[1], "b1": CHANGE.1[0], "b2": CHANGE.1[1]},
            "y0": [280.0, 380.0, 490.0]
        }
    }))
    .unwrap()
}

fn manifest(dir: &Path) -> RunManifest {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn simulated_round_trip_recovers_cv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = LoadedConfig::from_config(direct_run(3)).unwrap();
    execute(Command::Run, &cfg, dir.path()).unwrap();
    let rows = read_cv_table(&dir.path().join("cv_table.csv")).unwrap();
    assert_eq!(rows.len(), 3);
    let truth = QuantileDemandModel::constrained(0.5, 5.6 + 0.02 * 0.5, 0.0005, -0.003, 0.0).unwrap();
    let change = PolicyChange::new(CHANGE.0, CHANGE.1, 0.0).unwrap();
    for r in &rows {
        assert_eq!(r.method, "closed_form");
        let want = cv_closed_form(&truth, &change, r.y0).unwrap().cv;
        assert!(((r.cv_gbp - want) / want).abs() < 0.02, "y0 {}: {} vs {want}", r.y0, r.cv_gbp);
    }
    let m = manifest(dir.path());
    assert!(m.balanced(), "{:?}", m.stages);
    for name in ["households.csv", "markets.csv", "demand_fits.csv", "cv_table.csv"] {
        assert!(m.outputs.contains_key(name), "{name} missing from manifest");
    }
}

#[test]
fn reruns_are_byte_identical() {
    let cfg = LoadedConfig::from_config(direct_run(5)).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    execute(Command::Run, &cfg, a.path()).unwrap();
    execute(Command::Run, &cfg, b.path()).unwrap();
    let (ma, mb) = (manifest(a.path()), manifest(b.path()));
    assert_eq!(ma.outputs, mb.outputs);
    for name in ma.outputs.keys() {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn zero_tau_is_rejected_before_any_work() {
    let mut cfg = direct_run(1);
    cfg.estimate.as_mut().unwrap().taus = vec![0.0, 0.5];
    let err = LoadedConfig::from_config(cfg).unwrap_err();
    assert!(err.to_string().contains("tau"), "{err}");
}

#[test]
fn welfare_reads_fits_written_by_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = LoadedConfig::from_config(direct_run(8)).unwrap();
    execute(Command::Simulate, &cfg, dir.path()).unwrap();
    execute(Command::Estimate, &cfg, dir.path()).unwrap();
    let first = fs::read(dir.path().join("demand_fits.csv")).unwrap();
    execute(Command::Welfare, &cfg, dir.path()).unwrap();
    assert_eq!(fs::read(dir.path().join("demand_fits.csv")).unwrap(), first);
    let staged = read_cv_table(&dir.path().join("cv_table.csv")).unwrap();

    let whole = tempfile::tempdir().unwrap();
    execute(Command::Run, &cfg, whole.path()).unwrap();
    let direct = read_cv_table(&whole.path().join("cv_table.csv")).unwrap();
    for (s, d) in staged.iter().zip(&direct) {
        assert!((s.cv_gbp - d.cv_gbp).abs() <= 1e-12 * d.cv_gbp.abs(), "{} vs {}", s.cv_gbp, d.cv_gbp);
    }
}
