mod common;

use common::{loglog_config, simulate_and_fit};
use hedonic_welfare::estimation::{fit_quantile_demand, DemandBasis};
use hedonic_welfare::hedonic::{PolicyChange, PriceSchedule};
use hedonic_welfare::io::income_percentile;
use hedonic_welfare::oracle::{oracle_cv, oracle_cv_bisect, StructuralDemand, UtilitySpec};
use hedonic_welfare::welfare::{cv_path_ode, cv_path_ode_with_schedule, OdeSettings, ThetaPath};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

#[test]
fn hedonic_ols_recovers_every_market() {
    let f = simulate_and_fit(&loglog_config(4, 2000));
    assert_eq!(f.markets.len(), 9);
    for (fit, truth) in f.markets.iter().zip(&f.pop.markets) {
        assert_eq!(fit.market_id, truth.market_id);
        let z1 = (fit.theta1 - truth.theta1) / fit.se_theta1;
        let z2 = (fit.theta2 - truth.theta2) / fit.se_theta2;
        assert!(z1.abs() < 3.0 && z2.abs() < 3.0, "{}: z = ({z1:.2}, {z2:.2})", fit.market_id);
    }
}

#[test]
fn ratio_fit_cv_tracks_structural_cv() {
    let f = simulate_and_fit(&loglog_config(4, 2000));
    let change = PolicyChange::new([-20.0, 60.0], [-60.0, 80.0], 0.0).unwrap();
    let (sa, sb) = (
        PriceSchedule::log_linear(-20.0, 60.0),
        PriceSchedule::log_linear(-60.0, 80.0),
    );
    let incomes: Vec<f64> = f.pop.households.iter().map(|h| h.income).collect();
    let phi = Normal::standard();
    for tau in [0.25, 0.5, 0.75] {
        let fit = fit_quantile_demand(&f.rows, &f.markets, tau, DemandBasis::RatioAugmented).unwrap();
        let eta = (0.5 * phi.inverse_cdf(tau)).exp();
        for p in [25.0, 50.0, 75.0] {
            let y = income_percentile(&incomes, p);
            let got = cv_path_ode(&fit.surface(0.0), &change, y, &ThetaPath::StraightLine, &OdeSettings::default())
                .unwrap()
                .cv;
            let want = oracle_cv(&UtilitySpec::LogLog, &sa, &sb, y, eta).unwrap();
            let tol = (0.05 * want.abs()).max(1.0);
            assert!((got - want).abs() <= tol, "tau {tau} y {y:.1}: {got} vs {want}");
        }
    }
}

#[test]
fn multi_attribute_ode_matches_bisection() {
    let u = UtilitySpec::MultiAttribute { beta: 1.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let delta = rng.random_range(0.5..3.0);
        let a = [rng.random_range(-60.0..20.0), rng.random_range(30.0..90.0)];
        let b = [rng.random_range(-60.0..20.0), rng.random_range(30.0..90.0)];
        let y = rng.random_range(300.0..700.0);
        let eta = rng.random_range(0.6..2.0);
        let sched = PriceSchedule::additive(a[0], a[1], delta);
        let demand = StructuralDemand::new(u.clone(), sched.clone(), eta);
        let change = PolicyChange::new(a, b, 0.0).unwrap();
        let settings = OdeSettings {
            steps: 2000,
            tolerance: 1e-9,
        };
        let got = cv_path_ode_with_schedule(&demand, &sched, &change, y, &ThetaPath::StraightLine, &settings)
            .unwrap()
            .cv;
        let want = oracle_cv_bisect(&u, &sched, &sched.with_theta(b), y, eta).unwrap();
        assert!((got - want).abs() < 1e-6, "{got} vs {want}");
    }
}
