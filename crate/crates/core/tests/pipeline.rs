use stratppi::estimators::estimate;
use stratppi::fixtures::{calibrated_binary_fixture, heterogeneous_binary_fixture};
use stratppi::io::{parse_csv, write_csv_rows, CsvOptions};
use stratppi::model::{EstimatorConfig, LabeledPoint, LambdaPolicy, Method, StratifiedDataset, StratumData};
use stratppi::simulation::{run_simulation, SyntheticScenario};
use stratppi::stats::two_sided_z;
use stratppi::sweep::{run_real_data_sweep, EvaluationPool, SweepConfig};
use stratppi::{Allocation, Error};

#[test]
fn fixture_rows_round_trip_through_csv() {
    let fx = heterogeneous_binary_fixture(2_000, 3).unwrap();
    let mut buf = Vec::new();
    write_csv_rows(&fx.rows, &mut buf).unwrap();
    let loaded = parse_csv(buf.as_slice(), CsvOptions { binary: true }).unwrap();
    assert_eq!(loaded.rows, fx.rows);
    assert_eq!(loaded.labeled, 2_000);
    assert_eq!(loaded.unlabeled, 0);
}

#[test]
fn simulation_reports_methods_by_budget() {
    let scenario = SyntheticScenario {
        trials: 40,
        n_grid: vec![100, 200],
        seed: 9,
        ..SyntheticScenario::bias()
    };
    let methods = [
        EstimatorConfig::new(Method::Classical, 0.1),
        EstimatorConfig::new(Method::StratPpi, 0.1).with_allocation(Allocation::OptimalOracle),
    ];
    let reports = run_simulation(&scenario, &methods).unwrap();
    let keys: Vec<(String, usize)> = reports.iter().map(|r| (r.method.clone(), r.n)).collect();
    assert_eq!(
        keys,
        [("classical", 100), ("stratppi-opt", 100), ("classical", 200), ("stratppi-opt", 200)]
            .map(|(m, n)| (m.to_string(), n))
    );
    for r in &reports {
        assert_eq!(r.trials, 40);
        assert_eq!(r.seed, 9);
        if r.method == "classical" {
            assert_eq!(r.percent_reduction, 0.0);
        }
        assert!(r.width_q16 <= r.mean_width * 1.5 && r.width_q16 <= r.width_q84);
    }
}

#[test]
fn sweep_classical_effective_size_tracks_budget() {
    let fx = calibrated_binary_fixture(10_000, 4).unwrap();
    let pool = EvaluationPool::new(fx.rows, true).unwrap();
    let mut cfg = SweepConfig::new(vec![EstimatorConfig::new(Method::Classical, 0.05)], vec![100, 400]);
    cfg.trials = 400;
    cfg.seed = 11;
    let out = run_real_data_sweep(&pool, &cfg).unwrap();
    assert_eq!(cfg.k, 10);
    assert_eq!(cfg.alpha, 0.05);
    for r in &out.reports {
        assert_eq!(r.percent_reduction, 0.0);
        let rel = r.effective_sample_size / r.n as f64;
        assert!((0.9..1.1).contains(&rel), "n = {}: ESS {}", r.n, r.effective_sample_size);
    }
}

fn stratified_data() -> StratifiedDataset {
    let a = StratumData::new(
        [(1.0, 0.8), (0.0, 0.3), (1.0, 0.9), (1.0, 0.6)].map(|(y, f)| LabeledPoint::new(y, f)).to_vec(),
        vec![0.7, 0.8, 0.9, 0.5, 0.6],
        0.3,
    );
    let b = StratumData::new(
        [(0.0, 0.1), (0.0, 0.2), (1.0, 0.3)].map(|(y, f)| LabeledPoint::new(y, f)).to_vec(),
        vec![0.1, 0.2, 0.05, 0.3],
        0.7,
    );
    StratifiedDataset::new(vec![a, b], true).unwrap()
}

#[test]
fn zero_lambda_gives_stratified_classical_interval() {
    let data = stratified_data();
    let cfg = EstimatorConfig::new(Method::StratPpi, 0.05).with_lambda(LambdaPolicy::Fixed(vec![0.0]));
    let ci = estimate(&data, &cfg).unwrap();
    // Stratum a: mean 0.75, var 0.1875 over 4; stratum b: mean 1/3, var 2/9 over 3.
    let theta = 0.3 * 0.75 + 0.7 / 3.0;
    let variance: f64 = 0.09 * 0.1875 / 4.0 + 0.49 * (2.0 / 9.0) / 3.0;
    let half = two_sided_z(0.05).unwrap() * variance.sqrt();
    assert!((ci.theta_hat - theta).abs() < 1e-12);
    assert!((ci.variance - variance).abs() < 1e-12);
    assert!((ci.lower - (theta - half)).abs() < 1e-12);
    assert!((ci.upper - (theta + half)).abs() < 1e-12);
}

#[test]
fn thin_stratum_error_names_stratum_and_minimum() {
    let a = StratumData::new(vec![LabeledPoint::new(1.0, 0.9)], vec![0.9, 0.8], 0.5);
    let b = StratumData::new(
        vec![LabeledPoint::new(0.0, 0.1), LabeledPoint::new(1.0, 0.2)],
        vec![0.1, 0.2],
        0.5,
    );
    let data = StratifiedDataset::new(vec![b, a], true).unwrap();
    let err = estimate(&data, &EstimatorConfig::new(Method::StratPpi, 0.1)).unwrap_err();
    match &err {
        Error::InsufficientData { stratum, minimum, .. } => assert_eq!((*stratum, *minimum), (1, 2)),
        other => panic!("unexpected error {other:?}"),
    }
    assert!(err.to_string().contains("stratum 1") && err.to_string().contains("at least 2"));
    assert_eq!(err.exit_code(), 3);
}
