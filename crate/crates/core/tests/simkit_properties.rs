use relay_ra::simkit::{self, generate_realization, ExperimentConfig, GeometryConfig, RealizationKey};
use relay_ra::Protocol;

#[test]
fn source_relay_gain_has_the_configured_mean() {
    let geometry = GeometryConfig::default();
    let expected = geometry.mean_gain(geometry.source_position.distance(&geometry.relay_position));
    let (k, n) = (16, 10_000);
    let mut sum = 0.0;
    for i in 0..n {
        let ch = generate_realization(&geometry, k, 1, RealizationKey { seed: 8, index: i }).unwrap();
        sum += ch.g_sr_row().iter().sum::<f64>();
    }
    let mean = sum / (n as f64 * k as f64);
    assert!((mean - expected).abs() <= 0.02 * expected, "mean {mean} vs {expected}");
}

#[test]
fn realizations_depend_only_on_seed_and_index() {
    let g = GeometryConfig::default();
    let a = generate_realization(&g, 8, 3, RealizationKey { seed: 5, index: 7 }).unwrap();
    // Generating other realizations in between must not matter.
    for i in 0..7 {
        generate_realization(&g, 8, 3, RealizationKey { seed: 5, index: i }).unwrap();
    }
    let b = generate_realization(&g, 8, 3, RealizationKey { seed: 5, index: 7 }).unwrap();
    assert_eq!(a, b);
    let c = generate_realization(&g, 8, 3, RealizationKey { seed: 6, index: 7 }).unwrap();
    assert_ne!(a, c);
    let d = generate_realization(&g, 8, 3, RealizationKey { seed: 5, index: 8 }).unwrap();
    assert_ne!(a, d);
}

#[test]
fn novel_not_below_benchmark_on_each_realization() {
    let cfg = ExperimentConfig { num_subcarriers: vec![16], num_users: 4, ..ExperimentConfig::default() };
    for db in [15.0, 25.0] {
        for i in 0..40 {
            let rates = simkit::evaluate_realization(&cfg, 16, db, i).unwrap();
            let get = |p: Protocol| rates.iter().find(|(q, _)| *q == p).unwrap().1.unwrap();
            let (n, b) = (get(Protocol::Novel), get(Protocol::Benchmark));
            // Both sides carry the solver's relative power tolerance.
            assert!(n >= b * (1.0 - 1e-6), "{db} dB #{i}: novel {n} < benchmark {b}");
        }
    }
}

#[test]
fn report_covers_every_cell_in_order() {
    let cfg = ExperimentConfig {
        num_subcarriers: vec![2, 4],
        num_users: 2,
        snr_budget_db: vec![10.0, 20.0],
        num_realizations: 5,
        ..ExperimentConfig::default()
    };
    let report = simkit::run_experiment(&cfg).unwrap();
    let cells: Vec<(usize, f64)> = report.cells.iter().map(|c| (c.num_subcarriers, c.snr_db)).collect();
    assert_eq!(cells, vec![(2, 10.0), (2, 20.0), (4, 10.0), (4, 20.0)]);
    for cell in &report.cells {
        for s in &cell.protocols {
            assert_eq!(s.realizations, 5);
            assert_eq!(s.nonconverged, 0);
        }
        assert!(cell.ratio.is_some());
    }
}

#[test]
fn single_protocol_experiment_has_no_ratio() {
    let cfg = ExperimentConfig {
        num_subcarriers: vec![4],
        snr_budget_db: vec![20.0],
        num_realizations: 3,
        protocols: vec![Protocol::Benchmark],
        ..ExperimentConfig::default()
    };
    let report = simkit::run_experiment(&cfg).unwrap();
    assert!(report.cells[0].ratio.is_none());
    assert!(report.cells[0].stats(Protocol::Novel).is_none());
}
