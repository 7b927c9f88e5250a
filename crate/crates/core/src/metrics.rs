//! Regret and communication accounting, series and export.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orchestrator::RunMeta;

/// One arm pull.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// Round index, starting at 1. Synchronous runs share `t` across the `M`
    /// pulls of a round.
    pub t: u64,
    pub client: usize,
    pub arm: usize,
    pub layer: usize,
    pub inst_regret: f64,
    /// Reward revealed to the client.
    pub reward: f64,
    /// Mean reward of the pulled arm.
    pub mean: f64,
    pub best_value: f64,
    /// Mean reward of a uniformly random arm this round.
    pub random_value: f64,
    /// `‖x‖_{A⁻¹}` of the pulled arm under the statistics used to decide.
    pub width_norm: f64,
    pub weight: f64,
    /// A synchronization completed right after this pull.
    pub comm_batch: bool,
    /// Client exchanges in that synchronization.
    pub comm_exchanges: u64,
    pub corruption: f64,
    pub sigma_t: Option<f64>,
}

/// Per-pull records of one run plus its configuration echo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentLog {
    pub meta: RunMeta,
    pub records: Vec<RoundRecord>,
}

impl ExperimentLog {
    pub fn final_regret(&self) -> f64 {
        self.records.iter().map(|r| r.inst_regret).sum()
    }

    pub fn comm_batches(&self) -> u64 {
        self.records.iter().filter(|r| r.comm_batch).count() as u64
    }

    pub fn comm_exchanges(&self) -> u64 {
        self.records.iter().map(|r| r.comm_exchanges).sum()
    }

    /// Final regret of each client `0..clients`.
    pub fn per_client_regret(&self, clients: usize) -> Vec<f64> {
        let mut out = vec![0.0; clients];
        for r in &self.records {
            if let Some(v) = out.get_mut(r.client) {
                *v += r.inst_regret;
            }
        }
        out
    }

    /// Total reward of each client divided by what uniformly random play
    /// would have earned in the same rounds.
    pub fn per_client_normalized_reward(&self, clients: usize) -> Vec<f64> {
        let mut got = vec![0.0; clients];
        let mut random = vec![0.0; clients];
        for r in &self.records {
            if r.client < clients {
                got[r.client] += r.mean;
                random[r.client] += r.random_value;
            }
        }
        got.iter().zip(&random).map(|(g, b)| g / b).collect()
    }

    pub fn actions(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.arm).collect()
    }
}

/// `(n, R_n)` for pull counts `n = 1…N`.
pub fn cumulative_regret(log: &ExperimentLog) -> Vec<(u64, f64)> {
    running_sum(log.records.iter().map(|r| r.inst_regret))
}

/// Cumulative regret of one client, indexed by the global pull count.
pub fn client_cumulative_regret(log: &ExperimentLog, client: usize) -> Vec<(u64, f64)> {
    running_sum(log.records.iter().map(|r| {
        if r.client == client {
            r.inst_regret
        } else {
            0.0
        }
    }))
}

fn running_sum(values: impl Iterator<Item = f64>) -> Vec<(u64, f64)> {
    let mut acc = 0.0;
    values
        .enumerate()
        .map(|(i, v)| {
            acc += v;
            (i as u64 + 1, acc)
        })
        .collect()
}

/// Cumulative communication counts per pull.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CommSeries {
    pub batches: Vec<(u64, u64)>,
    pub exchanges: Vec<(u64, u64)>,
}

pub fn comm_cost(log: &ExperimentLog) -> CommSeries {
    let mut series = CommSeries::default();
    let (mut b, mut e) = (0, 0);
    for (i, r) in log.records.iter().enumerate() {
        b += u64::from(r.comm_batch);
        e += r.comm_exchanges;
        series.batches.push((i as u64 + 1, b));
        series.exchanges.push((i as u64 + 1, e));
    }
    series
}

/// Least-squares slope of `ln R` against `ln n` over the last half of the
/// series, skipping points with `R ≤ 0`. `None` with fewer than two points.
pub fn loglog_slope(series: &[(u64, f64)]) -> Option<f64> {
    let n = series.len();
    let pts: Vec<(f64, f64)> = series[n / 2..]
        .iter()
        .filter(|(_, r)| *r > 0.0)
        .map(|&(t, r)| ((t as f64).ln(), r.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

pub const CSV_COLUMNS: [&str; 9] = [
    "t",
    "client",
    "layer",
    "inst_regret",
    "cum_regret",
    "comm_batch_cum",
    "comm_exchange_cum",
    "corruption",
    "sigma_t",
];

/// One row of the CSV export.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsvRow {
    pub t: u64,
    pub client: usize,
    pub layer: usize,
    pub inst_regret: f64,
    pub cum_regret: f64,
    pub comm_batch_cum: u64,
    pub comm_exchange_cum: u64,
    pub corruption: f64,
    pub sigma_t: Option<f64>,
}

pub fn csv_rows(log: &ExperimentLog) -> Vec<CsvRow> {
    let regret = cumulative_regret(log);
    let comm = comm_cost(log);
    log.records
        .iter()
        .enumerate()
        .map(|(i, r)| CsvRow {
            t: r.t,
            client: r.client,
            layer: r.layer,
            inst_regret: r.inst_regret,
            cum_regret: regret[i].1,
            comm_batch_cum: comm.batches[i].1,
            comm_exchange_cum: comm.exchanges[i].1,
            corruption: r.corruption,
            sigma_t: r.sigma_t,
        })
        .collect()
}

fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Json,
}

pub fn export(log: &ExperimentLog, path: &Path, format: ExportFormat) -> Result<()> {
    match format {
        ExportFormat::Csv => write_csv(log, path),
        ExportFormat::Json => write_json(log, path),
    }
}

pub fn write_csv(log: &ExperimentLog, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let wrap = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Schema {
            path: path.to_path_buf(),
            reason: format!("{other:?}"),
        },
    };
    w.write_record(CSV_COLUMNS).map_err(wrap)?;
    for row in csv_rows(log) {
        w.write_record([
            row.t.to_string(),
            row.client.to_string(),
            row.layer.to_string(),
            fmt_real(row.inst_regret),
            fmt_real(row.cum_regret),
            row.comm_batch_cum.to_string(),
            row.comm_exchange_cum.to_string(),
            fmt_real(row.corruption),
            row.sigma_t.map(fmt_real).unwrap_or_default(),
        ])
        .map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Schema {
            path: path.to_path_buf(),
            reason: format!("{other:?}"),
        },
    })?;
    let parse_err = |row: usize, reason: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        reason,
    };
    let header = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?;
    if header.iter().ne(CSV_COLUMNS) {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            reason: format!(
                "unexpected header `{}`",
                header.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| parse_err(row, e.to_string()))?;
        let int = |j: usize| -> Result<u64> {
            rec[j]
                .parse()
                .map_err(|_| parse_err(row, format!("bad {} `{}`", CSV_COLUMNS[j], &rec[j])))
        };
        let real = |j: usize| -> Result<f64> {
            rec[j]
                .parse()
                .map_err(|_| parse_err(row, format!("bad {} `{}`", CSV_COLUMNS[j], &rec[j])))
        };
        rows.push(CsvRow {
            t: int(0)?,
            client: int(1)? as usize,
            layer: int(2)? as usize,
            inst_regret: real(3)?,
            cum_regret: real(4)?,
            comm_batch_cum: int(5)?,
            comm_exchange_cum: int(6)?,
            corruption: real(7)?,
            sigma_t: if rec[8].is_empty() {
                None
            } else {
                Some(real(8)?)
            },
        });
    }
    Ok(rows)
}

pub fn write_json(log: &ExperimentLog, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, log).map_err(|e| Error::Schema {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_json(path: &Path) -> Result<ExperimentLog> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Schema {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}
