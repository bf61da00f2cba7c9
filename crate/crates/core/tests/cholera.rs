use std::path::PathBuf;
use std::time::Instant;

use spillbound::intervals::{analyze, AnalysisSpec, IntervalConfig, ThetaConstraint};
use spillbound::{expand_aggregate, AggregateTable, SolveStatus};

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

#[test]
fn cholera_grouped_intervals() {
    let started = Instant::now();
    let table = AggregateTable::load(&data_dir().join("cholera_table4.csv")).unwrap();
    let data = expand_aggregate(&table).unwrap();
    assert_eq!(data.n_units(), 74_000);
    let spec = AnalysisSpec::load(&data_dir().join("cholera.json")).unwrap();
    let config = IntervalConfig {
        level: 0.90,
        constraints: vec![ThetaConstraint::MeanCap { cap: 0.007 }],
        ..IntervalConfig::default()
    };
    let results = analyze(&spec, &data, &config).unwrap();
    // Rates per thousand from the group-by-arm counts.
    let rate = |e: f64, n: f64| 1000.0 * e / n;
    let beta1 = rate(42.0, 24710.0) - rate(36.0, 12000.0);
    let group1 = rate(54.0, 24640.0) - rate(72.0, 12650.0);
    let expected = [beta1, group1 - beta1, group1];
    for (r, e) in results.iter().zip(expected) {
        let pt = 1000.0 * r.point_estimate;
        assert!((pt - e).abs() < 1e-9, "{}: {pt} vs {e}", r.estimand);
        assert!(r.bias_bound.0.abs() < 1e-12 && r.bias_bound.1.abs() < 1e-12);
        assert_eq!(r.upper.status, SolveStatus::Exact);
        assert_eq!(r.lower.status, SolveStatus::Exact);
        eprintln!(
            "{}: {:.2} [{:.2}, {:.2}]",
            r.estimand,
            pt,
            1000.0 * r.interval.0,
            1000.0 * r.interval.1
        );
    }
    assert!((1000.0 * results[0].point_estimate + 1.3).abs() < 0.05);
    assert!((1000.0 * results[1].point_estimate + 2.2).abs() < 0.05);
    assert!((1000.0 * results[2].point_estimate + 3.5).abs() < 0.05);
    assert!(started.elapsed().as_secs_f64() < 5.0);
}
