mod common;

use common::*;
use fedsuplinucb::metrics::{
    comm_cost, cumulative_regret, export, loglog_slope, read_csv, read_json, ExportFormat,
    CSV_COLUMNS,
};
use fedsuplinucb::orchestrator::{Algo, ArrivalSpec};
use fedsuplinucb::{AlgoConfig, EnvSpec, ExperimentLog, RoundRecord};

fn record(t: u64, client: usize, inst_regret: f64, batch: bool, exchanges: u64) -> RoundRecord {
    RoundRecord {
        t,
        client,
        arm: 0,
        layer: 0,
        inst_regret,
        reward: 0.0,
        mean: 0.0,
        best_value: inst_regret,
        random_value: 0.0,
        width_norm: 0.0,
        weight: 1.0,
        comm_batch: batch,
        comm_exchanges: exchanges,
        corruption: 0.0,
        sigma_t: None,
    }
}

fn log_with(records: Vec<RoundRecord>) -> ExperimentLog {
    let cfg = AlgoConfig {
        dim: 2,
        arms: 2,
        clients: 2,
        horizon: 2,
        ..AlgoConfig::default()
    };
    let mut log = run(&request(
        Algo::Async,
        cfg,
        EnvSpec::synthetic(2, 0.1),
        ArrivalSpec::RoundRobin,
        42,
    ))
    .log;
    log.records = records;
    log
}

#[test]
fn empty_log_has_empty_series() {
    let log = log_with(vec![]);
    assert!(cumulative_regret(&log).is_empty());
    assert!(comm_cost(&log).batches.is_empty());
    assert_eq!(log.final_regret(), 0.0);
    assert_eq!(loglog_slope(&[]), None);
}

#[test]
fn cumulative_regret_sums_prefixes() {
    let log = log_with(vec![
        record(1, 0, 0.5, false, 0),
        record(2, 1, 0.0, false, 0),
        record(3, 0, 0.25, false, 0),
    ]);
    assert_eq!(cumulative_regret(&log), vec![(1, 0.5), (2, 0.5), (3, 0.75)]);
    assert_eq!(log.per_client_regret(2), vec![0.75, 0.0]);
}

#[test]
fn comm_cost_counts_batches_and_exchanges() {
    let log = log_with(vec![
        record(1, 0, 0.0, true, 1),
        record(2, 1, 0.0, false, 0),
        record(3, 1, 0.0, true, 3),
    ]);
    let c = comm_cost(&log);
    assert_eq!(c.batches, vec![(1, 1), (2, 1), (3, 2)]);
    assert_eq!(c.exchanges, vec![(1, 1), (2, 1), (3, 4)]);
}

#[test]
fn slope_of_power_law() {
    let series: Vec<(u64, f64)> = (1..=1000u64)
        .map(|n| (n, 3.0 * (n as f64).powf(0.5)))
        .collect();
    assert!((loglog_slope(&series).unwrap() - 0.5).abs() < 1e-9);
    let flat: Vec<(u64, f64)> = (1..=10u64).map(|n| (n, 0.0)).collect();
    assert_eq!(loglog_slope(&flat), None);
}

#[test]
fn csv_export_has_fixed_columns() {
    let mut recs = vec![
        record(1, 0, 0.5, false, 0),
        record(2, 1, 0.125, true, 2),
        record(3, 0, 0.0, false, 0),
    ];
    recs[1].sigma_t = Some(0.3);
    let log = log_with(recs);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.csv");
    export(&log, &path, ExportFormat::Csv).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], CSV_COLUMNS.join(","));
    assert!(lines[1..].iter().all(|l| l.split(',').count() == 9));
    assert!(lines[1].ends_with(','));
    let rows = read_csv(&path).unwrap();
    assert_eq!(rows[1].sigma_t, Some(0.3));
    assert_eq!(rows[2].cum_regret, 0.625);
    assert_eq!(rows[2].comm_exchange_cum, 2);
}

#[test]
fn json_export_round_trips_with_meta() {
    let log = log_with(vec![record(1, 0, 0.1 + 0.2, false, 0)]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.json");
    export(&log, &path, ExportFormat::Json).unwrap();
    let back = read_json(&path).unwrap();
    assert_eq!(back, log);
    assert_eq!(back.meta.request.seed, 42);
    assert_eq!(back.meta.request.cfg.dim, 2);
}

#[test]
fn csv_with_wrong_header_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "t,client\n1,0\n").unwrap();
    let err = read_csv(&path).unwrap_err().to_string();
    assert!(err.contains("bad.csv"), "{err}");
}
