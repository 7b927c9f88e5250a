//! Outer simulation loops: asynchronous and synchronous federated runs, their
//! variance-adaptive and corruption-robust versions, arrival patterns, and the
//! single-player baseline.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bandit::{
    build_schedule, corruption_gamma, corruption_weight, sigma_bar, slucb_select_traced,
    ClientState, LayerEstimates, LayerSchedule, SelectMode, SigmaBarParams,
};
use crate::config::{AlgoConfig, Variant};
use crate::env::{stream_rng, EnvSpec, LinearEnv, PullOutcome, StreamPurpose};
use crate::error::{Error, Result};
use crate::metrics::{ExperimentLog, RoundRecord};
use crate::protocol::{
    async_trigger, sync_round, sync_trigger, CommLog, ServerState, UploadMessage,
};

/// Which client is active in each asynchronous round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ArrivalSpec {
    /// Balanced shuffle: every client gets `⌊T/M⌋` or `⌈T/M⌉` slots.
    Random,
    RoundRobin,
    /// All of client 0's slots, then client 1's, and so on.
    ClickLeave,
    Custom {
        schedule: Vec<usize>,
    },
}

impl ArrivalSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ArrivalSpec::Random => "random",
            ArrivalSpec::RoundRobin => "round_robin",
            ArrivalSpec::ClickLeave => "click_leave",
            ArrivalSpec::Custom { .. } => "custom",
        }
    }
}

impl std::str::FromStr for ArrivalSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(ArrivalSpec::Random),
            "round_robin" | "round-robin" => Ok(ArrivalSpec::RoundRobin),
            "click_leave" | "click-leave" => Ok(ArrivalSpec::ClickLeave),
            other => {
                let schedule = other
                    .split(',')
                    .map(|v| v.trim().parse::<usize>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| Error::config("arrivals", format!("unknown pattern `{other}`")))?;
                Ok(ArrivalSpec::Custom { schedule })
            }
        }
    }
}

/// Client ids (0-based) in activation order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArrivalPattern {
    pub spec: ArrivalSpec,
    pub schedule: Vec<usize>,
}

fn slot_counts(m: usize, t: usize) -> Vec<usize> {
    (0..m).map(|i| t / m + usize::from(i < t % m)).collect()
}

pub fn make_arrivals<R: Rng + ?Sized>(
    spec: &ArrivalSpec,
    m: usize,
    t: usize,
    rng: &mut R,
) -> Result<ArrivalPattern> {
    if t == 0 {
        return Err(Error::config("T", "must be at least 1"));
    }
    if m == 0 {
        return Err(Error::config("M", "must be at least 1"));
    }
    let schedule = match spec {
        ArrivalSpec::RoundRobin => (0..t).map(|i| i % m).collect(),
        ArrivalSpec::ClickLeave => slot_counts(m, t)
            .into_iter()
            .enumerate()
            .flat_map(|(i, n)| std::iter::repeat_n(i, n))
            .collect(),
        ArrivalSpec::Random => {
            let mut s: Vec<usize> = slot_counts(m, t)
                .into_iter()
                .enumerate()
                .flat_map(|(i, n)| std::iter::repeat_n(i, n))
                .collect();
            s.shuffle(rng);
            s
        }
        ArrivalSpec::Custom { schedule } => {
            if schedule.len() != t {
                return Err(Error::config(
                    "arrivals",
                    format!("custom schedule has {} slots, T = {t}", schedule.len()),
                ));
            }
            if let Some(bad) = schedule.iter().find(|&&c| c >= m) {
                return Err(Error::config(
                    "arrivals",
                    format!("client {bad} out of range for M = {m}"),
                ));
            }
            schedule.clone()
        }
    };
    Ok(ArrivalPattern {
        spec: spec.clone(),
        schedule,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    Async,
    Sync,
    Variance,
    Corruption,
    Baseline,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::Async => "async",
            Algo::Sync => "sync",
            Algo::Variance => "variance",
            Algo::Corruption => "corruption",
            Algo::Baseline => "baseline",
        }
    }

    /// Variant the algorithm runs with.
    pub fn variant(self) -> Variant {
        match self {
            Algo::Variance => Variant::VarianceAdaptive,
            Algo::Corruption => Variant::CorruptionRobust,
            _ => Variant::Standard,
        }
    }
}

impl std::str::FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "async" => Ok(Algo::Async),
            "sync" => Ok(Algo::Sync),
            "variance" => Ok(Algo::Variance),
            "corruption" => Ok(Algo::Corruption),
            "baseline" => Ok(Algo::Baseline),
            _ => Err(Error::config("algo", format!("unknown algorithm `{s}`"))),
        }
    }
}

/// Everything that determines a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRequest {
    pub algo: Algo,
    pub cfg: AlgoConfig,
    pub env: EnvSpec,
    pub arrivals: ArrivalSpec,
    pub seed: u64,
}

/// Configuration echo stored with every log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub request: RunRequest,
    pub schedule: LayerSchedule,
    #[serde(with = "crate::serde_ext::real")]
    pub async_threshold: f64,
    #[serde(with = "crate::serde_ext::real")]
    pub sync_threshold: f64,
    pub version: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Keep every upload message for replay checks.
    pub capture_uploads: bool,
    /// Check `|r̂ − θᵀx| ≤ w` for every arm at every visited layer.
    pub track_coverage: bool,
}

/// Confidence-interval coverage counts per layer.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Coverage {
    pub checks: Vec<u64>,
    pub violations: Vec<u64>,
}

impl Coverage {
    fn new(layers: usize) -> Self {
        Self {
            checks: vec![0; layers],
            violations: vec![0; layers],
        }
    }

    /// `(checks, violations)` summed over layers `≥ min_layer`.
    pub fn totals(&self, min_layer: usize) -> (u64, u64) {
        let c = self.checks.iter().skip(min_layer).sum();
        let v = self.violations.iter().skip(min_layer).sum();
        (c, v)
    }
}

/// Raw result of a run loop.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub schedule: LayerSchedule,
    pub records: Vec<RoundRecord>,
    pub comm: CommLog,
    pub uploads: Option<Vec<UploadMessage>>,
    pub clients: Vec<ClientState>,
    pub server: ServerState,
    pub coverage: Option<Coverage>,
}

/// A finished run: its log plus the states needed for invariant checks.
#[derive(Debug, Clone)]
pub struct Execution {
    pub log: ExperimentLog,
    pub comm: CommLog,
    pub uploads: Option<Vec<UploadMessage>>,
    pub clients: Vec<ClientState>,
    pub server: ServerState,
    pub coverage: Option<Coverage>,
    pub adversary_spent: f64,
}

#[derive(Debug, Clone, Copy)]
enum Weighting {
    Unit,
    Variance(SigmaBarParams),
    Corruption(Option<f64>),
}

impl Weighting {
    fn for_config(cfg: &AlgoConfig) -> Self {
        match cfg.variant {
            Variant::Standard => Weighting::Unit,
            Variant::VarianceAdaptive => Weighting::Variance(SigmaBarParams::from_config(cfg)),
            Variant::CorruptionRobust => Weighting::Corruption(corruption_gamma(cfg)),
        }
    }

    fn weight(self, outcome: &PullOutcome, width_norm: f64) -> Result<f64> {
        match self {
            Weighting::Unit => Ok(1.0),
            Weighting::Variance(params) => {
                let sigma = outcome.sigma.ok_or_else(|| {
                    Error::Environment(
                        "variance-adaptive run needs an environment reporting σ_t".into(),
                    )
                })?;
                let bar = sigma_bar(sigma, &params, width_norm);
                Ok(1.0 / (bar * bar))
            }
            Weighting::Corruption(Some(gamma)) => Ok(corruption_weight(gamma, width_norm)),
            Weighting::Corruption(None) => Ok(1.0),
        }
    }
}

fn check_env(cfg: &AlgoConfig, env: &LinearEnv) -> Result<()> {
    if env.dim() != cfg.dim {
        return Err(Error::DimensionMismatch {
            expected: cfg.dim,
            got: env.dim(),
        });
    }
    if let Some(k) = env.file_arms() {
        if k != cfg.arms {
            return Err(Error::config(
                "K",
                format!("context file has {k} arms, config has {}", cfg.arms),
            ));
        }
    }
    Ok(())
}

fn require_variant(cfg: &AlgoConfig, want: Variant) -> Result<()> {
    if cfg.variant != want {
        return Err(Error::config(
            "variant",
            format!("this loop needs {want:?}, config has {:?}", cfg.variant),
        ));
    }
    Ok(())
}

struct Pull {
    record: RoundRecord,
    layer: usize,
}

/// One client's select-pull-update step.
#[allow(clippy::too_many_arguments)]
fn step(
    client: &mut ClientState,
    schedule: &LayerSchedule,
    env: &mut LinearEnv,
    weighting: Weighting,
    mode: SelectMode,
    arms: usize,
    t: u64,
    pull_index: u64,
    coverage: Option<&mut Coverage>,
) -> Result<Pull> {
    let id = client.id;
    let contexts = env.gen_contexts(id, arms)?;
    let theta = env.theta().to_vec();
    let mut cov = coverage;
    let sel = slucb_select_traced(
        client,
        schedule,
        &contexts,
        mode,
        |s, est: &LayerEstimates| {
            if let Some(c) = cov.as_deref_mut() {
                for (a, x) in contexts.iter().enumerate() {
                    let mean: f64 = theta.iter().zip(x).map(|(p, q)| p * q).sum();
                    c.checks[s] += 1;
                    if (est.rewards[a] - mean).abs() > est.widths[a] {
                        c.violations[s] += 1;
                    }
                }
            }
        },
    )?;
    let x = &contexts[sel.action];
    let outcome = env.pull(id, &contexts, sel.action, pull_index)?;
    let width_norm = client.view(sel.layer, mode).weighted_norm(x)?;
    let weight = weighting.weight(&outcome, width_norm)?;
    client.record(sel.layer, x, outcome.observed, weight)?;
    Ok(Pull {
        layer: sel.layer,
        record: RoundRecord {
            t,
            client: id,
            arm: sel.action,
            layer: sel.layer,
            inst_regret: outcome.regret(),
            reward: outcome.observed,
            mean: outcome.mean,
            best_value: outcome.best_value,
            random_value: outcome.random_value,
            width_norm,
            weight,
            comm_batch: false,
            comm_exchanges: 0,
            corruption: outcome.corruption,
            sigma_t: outcome.sigma,
        },
    })
}

fn new_clients(cfg: &AlgoConfig, layers: usize) -> Result<Vec<ClientState>> {
    (0..cfg.clients)
        .map(|i| ClientState::new(i, layers, cfg.dim, cfg.ridge_lambda))
        .collect()
}

fn run_async_core(
    cfg: &AlgoConfig,
    env: &mut LinearEnv,
    pattern: &ArrivalPattern,
    opts: &RunOptions,
    mode: SelectMode,
    communicate: bool,
) -> Result<RunOutput> {
    cfg.validate()?;
    check_env(cfg, env)?;
    if pattern.schedule.len() != cfg.horizon {
        return Err(Error::config(
            "arrivals",
            format!(
                "pattern has {} slots, T = {}",
                pattern.schedule.len(),
                cfg.horizon
            ),
        ));
    }
    let schedule = build_schedule(cfg)?;
    let layers = schedule.layers();
    let weighting = Weighting::for_config(cfg);
    let c = cfg.resolved_async_threshold();
    let mut server = ServerState::new(layers, cfg.dim, cfg.ridge_lambda)?;
    let mut clients = new_clients(cfg, layers)?;
    let mut comm = CommLog::default();
    let mut uploads = opts.capture_uploads.then(Vec::new);
    let mut coverage = opts.track_coverage.then(|| Coverage::new(layers));
    let mut records = Vec::with_capacity(cfg.horizon);
    let all_layers: Vec<usize> = (0..layers).collect();

    for (n, &i) in pattern.schedule.iter().enumerate() {
        if i >= clients.len() {
            return Err(Error::config(
                "arrivals",
                format!("client {i} out of range"),
            ));
        }
        let t = n as u64 + 1;
        let client = &mut clients[i];
        let Pull { mut record, layer } = step(
            client,
            &schedule,
            env,
            weighting,
            mode,
            cfg.arms,
            t,
            n as u64,
            coverage.as_mut(),
        )?;
        if communicate && async_trigger(client.synced(layer), client.pending(layer), c)? {
            let event = sync_round(&mut server, &mut [client], &all_layers, t, uploads.as_mut())?;
            record.comm_batch = true;
            record.comm_exchanges = event.clients.len() as u64;
            comm.events.push(event);
        }
        records.push(record);
    }
    Ok(RunOutput {
        schedule,
        records,
        comm,
        uploads,
        clients,
        server,
        coverage,
    })
}

/// Asynchronous federated run: one client per round, lazy decisions, and a
/// full-layer sync of the active client whenever its determinant ratio on
/// the updated layer exceeds `1 + C`.
pub fn run_async(
    cfg: &AlgoConfig,
    env: &mut LinearEnv,
    pattern: &ArrivalPattern,
    opts: &RunOptions,
) -> Result<RunOutput> {
    require_variant(cfg, Variant::Standard)?;
    run_async_core(cfg, env, pattern, opts, SelectMode::Lazy, true)
}

/// [`run_async`] with `1/σ̄²`-weighted updates; the environment must report `σ_t`.
pub fn run_variance_adaptive(
    cfg: &AlgoConfig,
    env: &mut LinearEnv,
    pattern: &ArrivalPattern,
    opts: &RunOptions,
) -> Result<RunOutput> {
    require_variant(cfg, Variant::VarianceAdaptive)?;
    if !env.reports_sigma() {
        return Err(Error::Environment(
            "variance-adaptive run needs an environment reporting σ_t".into(),
        ));
    }
    run_async_core(cfg, env, pattern, opts, SelectMode::Lazy, true)
}

/// [`run_async`] with `η`-weighted updates against a corrupting environment.
pub fn run_corruption_robust(
    cfg: &AlgoConfig,
    env: &mut LinearEnv,
    pattern: &ArrivalPattern,
    opts: &RunOptions,
) -> Result<RunOutput> {
    require_variant(cfg, Variant::CorruptionRobust)?;
    run_async_core(cfg, env, pattern, opts, SelectMode::Lazy, true)
}

/// Single-player SupLinUCB: one client deciding from all of its data, no
/// communication. `cfg.clients` must be 1.
pub fn run_baseline_suplinucb(
    cfg: &AlgoConfig,
    env: &mut LinearEnv,
    opts: &RunOptions,
) -> Result<RunOutput> {
    require_variant(cfg, Variant::Standard)?;
    if cfg.clients != 1 {
        return Err(Error::config("M", "the baseline runs a single client"));
    }
    let pattern = ArrivalPattern {
        spec: ArrivalSpec::RoundRobin,
        schedule: vec![0; cfg.horizon],
    };
    run_async_core(cfg, env, &pattern, opts, SelectMode::Fresh, false)
}

/// Confidence constants for a synchronous run: `T = M·T_c`.
pub fn sync_schedule(cfg: &AlgoConfig) -> Result<LayerSchedule> {
    let total = cfg
        .horizon
        .checked_mul(cfg.clients)
        .ok_or_else(|| Error::config("T", "M·T_c overflows"))?;
    build_schedule(&AlgoConfig {
        horizon: total,
        ..cfg.clone()
    })
}

/// Synchronous federated run: `T_c = cfg.horizon` rounds in which every
/// client pulls with fresh statistics. Layers whose staleness-weighted
/// log-determinant ratio exceeds `D` for any client are synced across all
/// clients at the end of the round.
pub fn run_sync(cfg: &AlgoConfig, env: &mut LinearEnv, opts: &RunOptions) -> Result<RunOutput> {
    require_variant(cfg, Variant::Standard)?;
    cfg.validate()?;
    check_env(cfg, env)?;
    let rounds = cfg.horizon;
    let schedule = sync_schedule(cfg)?;
    let layers = schedule.layers();
    let d_threshold = cfg.resolved_sync_threshold();
    let mut server = ServerState::new(layers, cfg.dim, cfg.ridge_lambda)?;
    let mut clients = new_clients(cfg, layers)?;
    let mut comm = CommLog::default();
    let mut uploads = opts.capture_uploads.then(Vec::new);
    let mut coverage = opts.track_coverage.then(|| Coverage::new(layers));
    let mut records = Vec::with_capacity(rounds * cfg.clients);
    let mut t_last = vec![0u64; layers];
    let mut pull_index = 0u64;

    for round in 1..=rounds as u64 {
        let mut comm_layers = BTreeSet::new();
        for client in clients.iter_mut() {
            let Pull { record, layer } = step(
                client,
                &schedule,
                env,
                Weighting::Unit,
                SelectMode::Fresh,
                cfg.arms,
                round,
                pull_index,
                coverage.as_mut(),
            )?;
            pull_index += 1;
            if !comm_layers.contains(&layer)
                && sync_trigger(
                    client.synced(layer),
                    client.pending(layer),
                    round,
                    t_last[layer],
                    d_threshold,
                )?
            {
                comm_layers.insert(layer);
            }
            records.push(record);
        }
        if !comm_layers.is_empty() {
            let batch: Vec<usize> = comm_layers.into_iter().collect();
            let mut refs: Vec<&mut ClientState> = clients.iter_mut().collect();
            let event = sync_round(&mut server, &mut refs, &batch, round, uploads.as_mut())?;
            for &s in &batch {
                t_last[s] = round;
            }
            let last = records.last_mut().expect("round has pulls");
            last.comm_batch = true;
            last.comm_exchanges = event.clients.len() as u64;
            comm.events.push(event);
        }
    }
    Ok(RunOutput {
        schedule,
        records,
        comm,
        uploads,
        clients,
        server,
        coverage,
    })
}

impl RunRequest {
    /// The config as the chosen algorithm runs it.
    pub fn effective_config(&self) -> AlgoConfig {
        let mut cfg = self.cfg.clone();
        cfg.variant = self.algo.variant();
        if self.algo == Algo::Baseline {
            cfg.clients = 1;
        }
        cfg
    }
}

/// Builds the environment and arrival pattern from `req` and runs it.
pub fn execute(req: &RunRequest, opts: &RunOptions) -> Result<Execution> {
    let cfg = req.effective_config();
    cfg.validate()?;
    let mut env = LinearEnv::build(&req.env, req.seed)?;
    let output = match req.algo {
        Algo::Sync => run_sync(&cfg, &mut env, opts)?,
        Algo::Baseline => run_baseline_suplinucb(&cfg, &mut env, opts)?,
        algo => {
            let mut rng = stream_rng(req.seed, StreamPurpose::Arrivals, 0);
            let pattern = make_arrivals(&req.arrivals, cfg.clients, cfg.horizon, &mut rng)?;
            match algo {
                Algo::Async => run_async(&cfg, &mut env, &pattern, opts)?,
                Algo::Variance => run_variance_adaptive(&cfg, &mut env, &pattern, opts)?,
                _ => run_corruption_robust(&cfg, &mut env, &pattern, opts)?,
            }
        }
    };
    let meta = RunMeta {
        request: RunRequest {
            cfg: cfg.clone(),
            ..req.clone()
        },
        schedule: output.schedule,
        async_threshold: cfg.resolved_async_threshold(),
        sync_threshold: cfg.resolved_sync_threshold(),
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    Ok(Execution {
        log: ExperimentLog {
            meta,
            records: output.records,
        },
        comm: output.comm,
        uploads: output.uploads,
        clients: output.clients,
        server: output.server,
        coverage: output.coverage,
        adversary_spent: env.adversary().map_or(0.0, |a| a.spent()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn arrival_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let rr = make_arrivals(&ArrivalSpec::RoundRobin, 3, 6, &mut rng).unwrap();
        assert_eq!(rr.schedule, vec![0, 1, 2, 0, 1, 2]);
        let cl = make_arrivals(&ArrivalSpec::ClickLeave, 2, 4, &mut rng).unwrap();
        assert_eq!(cl.schedule, vec![0, 0, 1, 1]);
        let r = make_arrivals(&ArrivalSpec::Random, 2, 4, &mut rng).unwrap();
        let mut sorted = r.schedule.clone();
        sorted.sort();
        assert_eq!(sorted, vec![0, 0, 1, 1]);
        assert!(make_arrivals(&ArrivalSpec::Random, 2, 0, &mut rng).is_err());
    }

    #[test]
    fn uneven_slots_go_to_early_clients() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cl = make_arrivals(&ArrivalSpec::ClickLeave, 3, 7, &mut rng).unwrap();
        assert_eq!(cl.schedule, vec![0, 0, 0, 1, 1, 2, 2]);
        let r = make_arrivals(&ArrivalSpec::Random, 3, 7, &mut rng).unwrap();
        let counts: Vec<usize> = (0..3)
            .map(|i| r.schedule.iter().filter(|&&c| c == i).count())
            .collect();
        assert_eq!(counts, vec![3, 2, 2]);
    }

    #[test]
    fn custom_pattern_checked() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let spec: ArrivalSpec = "0,1,1".parse().unwrap();
        assert_eq!(
            make_arrivals(&spec, 2, 3, &mut rng).unwrap().schedule,
            vec![0, 1, 1]
        );
        assert!(make_arrivals(&spec, 1, 3, &mut rng).is_err());
        assert!(make_arrivals(&spec, 2, 4, &mut rng).is_err());
        assert!("bogus".parse::<ArrivalSpec>().is_err());
    }
}
