//! Command-line front end: presets, config files, runs, sweeps and reports.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::AlgoConfig;
use crate::env::{
    AdversarySpec, AdversaryStrategy, ContextSourceSpec, EnvSpec, NoiseModel, SigmaSchedule,
    ThetaSpec,
};
use crate::error::{Error, Result};
use crate::metrics::{cumulative_regret, export, loglog_slope, ExperimentLog, ExportFormat};
use crate::orchestrator::{execute, Algo, ArrivalSpec, RunOptions, RunRequest};
use crate::serde_ext::parse_f64;

pub const SUMMARY_SCHEMA: &str = "fedsuplinucb.summary/1";
pub const SWEEP_SCHEMA: &str = "fedsuplinucb.sweep/1";

#[derive(Debug, Parser)]
#[command(
    name = "fedsuplinucb",
    version,
    about = "Federated SupLinUCB simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    PaperSynthetic,
    Desk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlgoArg {
    Async,
    Sync,
    Variance,
    Corruption,
    Baseline,
}

impl From<AlgoArg> for Algo {
    fn from(a: AlgoArg) -> Self {
        match a {
            AlgoArg::Async => Algo::Async,
            AlgoArg::Sync => Algo::Sync,
            AlgoArg::Variance => Algo::Variance,
            AlgoArg::Corruption => Algo::Corruption,
            AlgoArg::Baseline => Algo::Baseline,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, Clone, clap::Args)]
pub struct RunArgs {
    #[arg(long, value_enum, default_value = "async")]
    pub algo: AlgoArg,
    #[arg(long, value_enum, default_value = "desk")]
    pub preset: Preset,
    /// Key-value config file applied on top of the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `1..5`, `1,2,7` or a single seed.
    #[arg(long, default_value = "1")]
    pub seeds: String,
    /// `key=value`, applied last; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Parallel runs; defaults to the number of CPUs.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: FormatArg,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one configuration over a list of seeds.
    Run(RunArgs),
    /// Run one configuration for every value of a numeric parameter.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// One of C, D, M, sigma, Cp.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
    },
    /// Merge run summaries into one table.
    Report {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        /// Directory for report.txt and report.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseChoice {
    /// Gaussian, or bounded two-point noise for the variance-adaptive run.
    Auto,
    Gaussian,
    Hetero,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdversaryChoice {
    /// Sign flips whenever `Cp > 0`.
    Auto,
    None,
    SignFlip,
    Targeted,
    Custom,
}

/// Every user-settable knob, before it is resolved into a [`RunRequest`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub algo: Algo,
    pub cfg: AlgoConfig,
    /// Per-client round count for synchronous runs; `T/M` when unset.
    pub rounds_per_client: Option<usize>,
    pub sigma: f64,
    pub noise: NoiseChoice,
    pub sigma_levels: Option<Vec<f64>>,
    pub noise_schedule: String,
    pub theta_scale: f64,
    pub contexts: Option<PathBuf>,
    pub file_rewards: bool,
    pub arrivals: ArrivalSpec,
    pub adversary: AdversaryChoice,
    pub adversary_magnitude: f64,
    pub adversary_corruptions: Vec<f64>,
}

impl Settings {
    pub fn preset(preset: Preset, algo: Algo) -> Self {
        let (dim, arms, clients, horizon, sigma) = match preset {
            Preset::PaperSynthetic => (25, 20, 20, 40_000, 0.01),
            Preset::Desk => (10, 10, 5, 20_000, 0.1),
        };
        Self {
            algo,
            cfg: AlgoConfig {
                dim,
                arms,
                clients,
                horizon,
                ..AlgoConfig::default()
            },
            rounds_per_client: None,
            sigma,
            noise: NoiseChoice::Auto,
            sigma_levels: None,
            noise_schedule: "choice".into(),
            theta_scale: 0.9,
            contexts: None,
            file_rewards: false,
            arrivals: ArrivalSpec::RoundRobin,
            adversary: AdversaryChoice::Auto,
            adversary_magnitude: 1.0,
            adversary_corruptions: Vec::new(),
        }
    }

    /// Applies one `key = value` setting. Keys may carry a section prefix
    /// (`algo.d`, `env.sigma`); the last dotted component is used.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let name = key.trim().rsplit('.').next().unwrap_or("").trim();
        let value = value.trim();
        let real = |field: &str| -> Result<f64> {
            parse_f64(value).ok_or_else(|| Error::config(field, format!("not a number: `{value}`")))
        };
        let int = |field: &str| -> Result<usize> {
            value
                .parse()
                .map_err(|_| Error::config(field, format!("not a nonnegative integer: `{value}`")))
        };
        let list = |field: &str| -> Result<Vec<f64>> {
            value
                .split(',')
                .map(|v| {
                    parse_f64(v).ok_or_else(|| Error::config(field, format!("not a number: `{v}`")))
                })
                .collect()
        };
        match name {
            "d" | "dim" => self.cfg.dim = int("d")?,
            "K" | "k" | "arms" => self.cfg.arms = int("K")?,
            "M" | "m" | "clients" => self.cfg.clients = int("M")?,
            "T" | "t" | "horizon" => self.cfg.horizon = int("T")?,
            "Tc" | "T_c" | "rounds_per_client" => self.rounds_per_client = Some(int("Tc")?),
            "delta" => self.cfg.delta = real("delta")?,
            "C" | "async_threshold" => self.cfg.async_threshold = Some(real("C")?),
            "D" | "sync_threshold" => self.cfg.sync_threshold = Some(real("D")?),
            "R" | "noise_bound" => self.cfg.noise_bound = real("R")?,
            "Cp" | "corruption_budget" => self.cfg.corruption_budget = real("Cp")?,
            "lambda" | "ridge_lambda" => self.cfg.ridge_lambda = real("lambda")?,
            "sigma" => self.sigma = real("sigma")?,
            "sigma_levels" => self.sigma_levels = Some(list("sigma_levels")?),
            "noise_schedule" => match value {
                "constant" | "choice" | "cycle" => self.noise_schedule = value.into(),
                _ => {
                    return Err(Error::config(
                        "noise_schedule",
                        format!("unknown schedule `{value}`"),
                    ))
                }
            },
            "noise" => {
                self.noise = match value {
                    "auto" => NoiseChoice::Auto,
                    "gaussian" => NoiseChoice::Gaussian,
                    "hetero" | "bounded_hetero" => NoiseChoice::Hetero,
                    "none" => NoiseChoice::None,
                    _ => {
                        return Err(Error::config(
                            "noise",
                            format!("unknown noise model `{value}`"),
                        ))
                    }
                }
            }
            "theta_scale" => self.theta_scale = real("theta_scale")?,
            "contexts" => self.contexts = (!value.is_empty()).then(|| PathBuf::from(value)),
            "file_rewards" => {
                self.file_rewards = value
                    .parse()
                    .map_err(|_| Error::config("file_rewards", "expected true or false"))?
            }
            "arrivals" => self.arrivals = value.parse()?,
            "adversary" => {
                self.adversary = match value {
                    "auto" => AdversaryChoice::Auto,
                    "none" => AdversaryChoice::None,
                    "sign_flip" | "sign_flip_prefix" => AdversaryChoice::SignFlip,
                    "targeted" | "targeted_best_arm" => AdversaryChoice::Targeted,
                    "custom" => AdversaryChoice::Custom,
                    _ => {
                        return Err(Error::config(
                            "adversary",
                            format!("unknown adversary `{value}`"),
                        ))
                    }
                }
            }
            "adversary_magnitude" => self.adversary_magnitude = real("adversary_magnitude")?,
            "corruptions" => self.adversary_corruptions = list("corruptions")?,
            _ => return Err(Error::config(key.trim(), "unknown setting")),
        }
        Ok(())
    }

    /// Applies a `key=value` override string.
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::config(kv, "override must look like key=value"))?;
        self.apply(k, v)
    }

    /// Applies every setting of a config file.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for (k, v) in parse_config_text(&text).map_err(|(row, reason)| Error::Parse {
            path: path.to_path_buf(),
            row,
            reason,
        })? {
            self.apply(&k, &v)?;
        }
        Ok(())
    }

    fn noise_model(&self) -> NoiseModel {
        let choice = match self.noise {
            NoiseChoice::Auto if self.algo == Algo::Variance => NoiseChoice::Hetero,
            NoiseChoice::Auto => NoiseChoice::Gaussian,
            other => other,
        };
        match choice {
            NoiseChoice::None => NoiseModel::None,
            NoiseChoice::Hetero => {
                let levels = self
                    .sigma_levels
                    .clone()
                    .unwrap_or_else(|| vec![self.sigma]);
                let schedule = match (self.noise_schedule.as_str(), levels.len()) {
                    (_, 1) | ("constant", _) => SigmaSchedule::Constant { sigma: levels[0] },
                    ("cycle", _) => SigmaSchedule::Cycle { levels },
                    _ => SigmaSchedule::Choice { levels },
                };
                NoiseModel::BoundedHetero {
                    bound: self.cfg.noise_bound,
                    schedule,
                }
            }
            _ if self.sigma == 0.0 => NoiseModel::None,
            _ => NoiseModel::Gaussian { sigma: self.sigma },
        }
    }

    fn adversary_spec(&self) -> Option<AdversarySpec> {
        let budget = self.cfg.corruption_budget;
        let strategy = match self.adversary {
            AdversaryChoice::None => return None,
            AdversaryChoice::Auto if budget > 0.0 => AdversaryStrategy::SignFlipPrefix,
            AdversaryChoice::Auto => return None,
            AdversaryChoice::SignFlip => AdversaryStrategy::SignFlipPrefix,
            AdversaryChoice::Targeted => AdversaryStrategy::TargetedBestArm {
                magnitude: self.adversary_magnitude,
            },
            AdversaryChoice::Custom => AdversaryStrategy::Custom {
                corruptions: self.adversary_corruptions.clone(),
            },
        };
        Some(AdversarySpec { strategy, budget })
    }

    /// The fully resolved request for one seed.
    pub fn request(&self, seed: u64) -> Result<RunRequest> {
        let mut cfg = self.cfg.clone();
        if self.algo == Algo::Sync {
            cfg.horizon = match self.rounds_per_client {
                Some(tc) => tc,
                None => cfg.horizon / cfg.clients.max(1),
            };
        }
        let env = EnvSpec {
            dim: cfg.dim,
            theta: ThetaSpec::Random {
                scale: self.theta_scale,
            },
            noise: self.noise_model(),
            contexts: match &self.contexts {
                Some(p) => {
                    if !p.exists() {
                        return Err(Error::config(
                            "contexts",
                            format!("{} does not exist", p.display()),
                        ));
                    }
                    ContextSourceSpec::FileStream { path: p.clone() }
                }
                None => ContextSourceSpec::SphereIid,
            },
            adversary: self.adversary_spec(),
            file_rewards: self.file_rewards,
            stream_offset: 0,
        };
        let req = RunRequest {
            algo: self.algo,
            cfg,
            env,
            arrivals: self.arrivals.clone(),
            seed,
        };
        req.effective_config().validate()?;
        Ok(req)
    }
}

/// Parses `key = value` lines with optional `[section]` headers and `#`
/// comments. Keys inside a section are prefixed with `section.`.
pub fn parse_config_text(
    text: &str,
) -> std::result::Result<Vec<(String, String)>, (usize, String)> {
    let mut section = String::new();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| (i + 1, format!("bad section header `{line}`")))?;
            section = name.trim().to_string();
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| (i + 1, format!("expected key = value, got `{line}`")))?;
        let key = if section.is_empty() {
            k.trim().to_string()
        } else {
            format!("{section}.{}", k.trim())
        };
        out.push((key, v.trim().trim_matches('"').to_string()));
    }
    Ok(out)
}

/// Parses `a..b` (inclusive), comma lists, or a single seed.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::config("seeds", format!("cannot parse `{s}`"));
    let seeds: Vec<u64> = if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b
            .trim()
            .trim_start_matches('=')
            .parse()
            .map_err(|_| bad())?;
        if b < a {
            return Err(bad());
        }
        (a..=b).collect()
    } else {
        s.split(',')
            .map(|v| v.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?
    };
    if seeds.is_empty() {
        return Err(Error::config("seeds", "at least one seed required"));
    }
    Ok(seeds)
}

/// Statistics of one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub request: RunRequest,
    pub log_path: PathBuf,
    pub final_regret: f64,
    pub per_client_regret: Vec<f64>,
    pub comm_batches: u64,
    pub comm_exchanges: u64,
    pub slope: Option<f64>,
    pub pulls: u64,
    pub adversary_spent: f64,
    pub wall_time_s: f64,
}

/// One `run` invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema: String,
    pub algo: Algo,
    pub preset: Preset,
    pub settings: Settings,
    pub clients: usize,
    pub runs: Vec<SeedSummary>,
    pub median_final_regret: f64,
    pub median_per_client_regret: f64,
    pub median_comm_batches: f64,
    pub median_comm_exchanges: f64,
    pub median_slope: Option<f64>,
    pub wall_time_s: f64,
}

pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        if j == 0 {
            return Err(Error::config("jobs", "must be at least 1"));
        }
        builder = builder.num_threads(j);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::config("jobs", e.to_string()))?;
    Ok(pool.install(f))
}

fn log_file_name(seed: u64, format: ExportFormat) -> String {
    match format {
        ExportFormat::Csv => format!("seed-{seed}.csv"),
        ExportFormat::Json => format!("seed-{seed}.json"),
    }
}

/// Runs `settings` for every seed, writing one log per seed and
/// `summary.json` into `out`.
pub fn run_settings(
    settings: &Settings,
    preset: Preset,
    seeds: &[u64],
    out: &Path,
    jobs: Option<usize>,
    format: ExportFormat,
) -> Result<RunSummary> {
    if seeds.is_empty() {
        return Err(Error::config("seeds", "at least one seed required"));
    }
    let requests: Vec<RunRequest> = seeds
        .iter()
        .map(|&s| settings.request(s))
        .collect::<Result<_>>()?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let start = Instant::now();
    let results: Vec<Result<SeedSummary>> = with_pool(jobs, || {
        requests
            .par_iter()
            .map(|req| {
                let t0 = Instant::now();
                let ex = execute(req, &RunOptions::default())?;
                let wall = t0.elapsed().as_secs_f64();
                let path = out.join(log_file_name(req.seed, format));
                export(&ex.log, &path, format)?;
                Ok(seed_summary(req, &ex.log, path, ex.adversary_spent, wall))
            })
            .collect()
    })?;
    let runs: Vec<SeedSummary> = results.into_iter().collect::<Result<_>>()?;
    let summary = summarize(settings, preset, runs, start.elapsed().as_secs_f64());
    let path = out.join("summary.json");
    write_json_file(&path, &summary)?;
    Ok(summary)
}

fn seed_summary(
    req: &RunRequest,
    log: &ExperimentLog,
    log_path: PathBuf,
    spent: f64,
    wall: f64,
) -> SeedSummary {
    let clients = log.meta.request.cfg.clients;
    SeedSummary {
        request: req.clone(),
        log_path,
        final_regret: log.final_regret(),
        per_client_regret: log.per_client_regret(clients),
        comm_batches: log.comm_batches(),
        comm_exchanges: log.comm_exchanges(),
        slope: loglog_slope(&cumulative_regret(log)),
        pulls: log.records.len() as u64,
        adversary_spent: spent,
        wall_time_s: wall,
    }
}

fn summarize(settings: &Settings, preset: Preset, runs: Vec<SeedSummary>, wall: f64) -> RunSummary {
    let col = |f: &dyn Fn(&SeedSummary) -> f64| runs.iter().map(f).collect::<Vec<_>>();
    let slopes: Vec<f64> = runs.iter().filter_map(|r| r.slope).collect();
    let clients = runs.first().map_or(settings.cfg.clients, |r| {
        r.request.effective_config().clients
    });
    RunSummary {
        schema: SUMMARY_SCHEMA.into(),
        algo: settings.algo,
        preset,
        settings: settings.clone(),
        clients,
        median_final_regret: median(&col(&|r| r.final_regret)).unwrap_or(0.0),
        median_per_client_regret: median(&col(&|r| r.final_regret / clients as f64)).unwrap_or(0.0),
        median_comm_batches: median(&col(&|r| r.comm_batches as f64)).unwrap_or(0.0),
        median_comm_exchanges: median(&col(&|r| r.comm_exchanges as f64)).unwrap_or(0.0),
        median_slope: median(&slopes),
        wall_time_s: wall,
        runs,
    }
}

fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Schema {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub const SWEEP_AXES: [&str; 5] = ["C", "D", "M", "sigma", "Cp"];

/// One point of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub summary_path: PathBuf,
    pub median_final_regret: f64,
    pub median_per_client_regret: f64,
    pub median_comm_batches: f64,
    pub median_comm_exchanges: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub schema: String,
    pub axis: String,
    pub rows: Vec<SweepRow>,
}

pub fn parse_sweep_values(axis: &str, values: &str) -> Result<Vec<f64>> {
    if !SWEEP_AXES.contains(&axis) {
        return Err(Error::config(
            "axis",
            format!(
                "`{axis}` is not a sweepable numeric parameter (one of {})",
                SWEEP_AXES.join(", ")
            ),
        ));
    }
    let vals: Vec<f64> = values
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| {
            parse_f64(v).ok_or_else(|| Error::config("values", format!("not a number: `{v}`")))
        })
        .collect::<Result<_>>()?;
    if vals.is_empty() {
        return Err(Error::config("values", "empty value list"));
    }
    Ok(vals)
}

fn axis_label(v: f64) -> String {
    format!("{v}").replace('/', "_")
}

#[allow(clippy::too_many_arguments)]
pub fn sweep_settings(
    settings: &Settings,
    preset: Preset,
    axis: &str,
    values: &[f64],
    seeds: &[u64],
    out: &Path,
    jobs: Option<usize>,
    format: ExportFormat,
) -> Result<SweepSummary> {
    let values = parse_sweep_values(
        axis,
        &values
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(","),
    )?;
    let mut rows = Vec::with_capacity(values.len());
    for v in values {
        let mut s = settings.clone();
        s.apply(axis, &v.to_string())?;
        let dir = out.join(format!("{axis}={}", axis_label(v)));
        let summary = run_settings(&s, preset, seeds, &dir, jobs, format)?;
        rows.push(SweepRow {
            value: v,
            summary_path: dir.join("summary.json"),
            median_final_regret: summary.median_final_regret,
            median_per_client_regret: summary.median_per_client_regret,
            median_comm_batches: summary.median_comm_batches,
            median_comm_exchanges: summary.median_comm_exchanges,
        });
    }
    let sweep = SweepSummary {
        schema: SWEEP_SCHEMA.into(),
        axis: axis.into(),
        rows,
    };
    write_json_file(&out.join("sweep.json"), &sweep)?;
    Ok(sweep)
}

/// One row of a merged report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub source: PathBuf,
    pub algo: Algo,
    pub clients: usize,
    pub seeds: usize,
    pub final_regret: f64,
    pub comm_batches: f64,
    pub comm_exchanges: f64,
    pub slope: Option<f64>,
}

pub fn load_summary(path: &Path) -> Result<RunSummary> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Schema {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let schema = value
        .get("schema")
        .and_then(|s| s.as_str())
        .unwrap_or("<missing>");
    if schema != SUMMARY_SCHEMA {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            reason: format!("schema `{schema}`, expected `{SUMMARY_SCHEMA}`"),
        });
    }
    serde_json::from_value(value).map_err(|e| Error::Schema {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

pub fn report_rows(paths: &[PathBuf]) -> Result<Vec<ReportRow>> {
    paths
        .iter()
        .map(|p| {
            let s = load_summary(p)?;
            Ok(ReportRow {
                source: p.clone(),
                algo: s.algo,
                clients: s.clients,
                seeds: s.runs.len(),
                final_regret: s.median_final_regret,
                comm_batches: s.median_comm_batches,
                comm_exchanges: s.median_comm_exchanges,
                slope: s.median_slope,
            })
        })
        .collect()
}

pub fn render_report(rows: &[ReportRow]) -> String {
    let mut text = format!(
        "{:<12} {:>4} {:>6} {:>14} {:>12} {:>14} {:>7}  source\n",
        "algo", "M", "seeds", "final_regret", "comm_batch", "comm_exchange", "slope"
    );
    for r in rows {
        text.push_str(&format!(
            "{:<12} {:>4} {:>6} {:>14.3} {:>12.1} {:>14.1} {:>7}  {}\n",
            r.algo.name(),
            r.clients,
            r.seeds,
            r.final_regret,
            r.comm_batches,
            r.comm_exchanges,
            r.slope.map_or("-".to_string(), |s| format!("{s:.3}")),
            r.source.display()
        ));
    }
    text
}

fn settings_from(args: &RunArgs) -> Result<Settings> {
    let mut s = Settings::preset(args.preset, args.algo.into());
    if let Some(path) = &args.config {
        s.apply_file(path)?;
    }
    for kv in &args.overrides {
        s.apply_override(kv)?;
    }
    Ok(s)
}

fn format_of(f: FormatArg) -> ExportFormat {
    match f {
        FormatArg::Csv => ExportFormat::Csv,
        FormatArg::Json => ExportFormat::Json,
    }
}

/// Executes a parsed command line, printing a short result to stdout.
pub fn run_command(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let settings = settings_from(&args)?;
            let seeds = parse_seeds(&args.seeds)?;
            let s = run_settings(
                &settings,
                args.preset,
                &seeds,
                &args.out,
                args.jobs,
                format_of(args.format),
            )?;
            println!(
                "{} seeds, median final regret {:.3}, median exchanges {}, summary {}",
                s.runs.len(),
                s.median_final_regret,
                s.median_comm_exchanges,
                args.out.join("summary.json").display()
            );
        }
        Command::Sweep { run, axis, values } => {
            let settings = settings_from(&run)?;
            let seeds = parse_seeds(&run.seeds)?;
            let vals = parse_sweep_values(&axis, &values)?;
            let sweep = sweep_settings(
                &settings,
                run.preset,
                &axis,
                &vals,
                &seeds,
                &run.out,
                run.jobs,
                format_of(run.format),
            )?;
            println!(
                "{:>12} {:>14} {:>14}",
                axis, "final_regret", "comm_exchange"
            );
            for r in &sweep.rows {
                println!(
                    "{:>12} {:>14.3} {:>14.1}",
                    r.value, r.median_final_regret, r.median_comm_exchanges
                );
            }
        }
        Command::Report { paths, out } => {
            let rows = report_rows(&paths)?;
            let text = render_report(&rows);
            print!("{text}");
            if let Some(dir) = out {
                fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                let p = dir.join("report.txt");
                fs::write(&p, &text).map_err(|e| Error::io(&p, e))?;
                let mut merged = BTreeMap::new();
                merged.insert("rows", rows);
                write_json_file(&dir.join("report.json"), &merged)?;
            }
        }
    }
    Ok(())
}
